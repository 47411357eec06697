//! File formats: time-series CSV (`t,<ids...>`), graph JSON, scenario JSON
//! and JSON lines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::anomaly::AnomalyScenario;
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{GraphFile, NetworkGraph};

/// Write `t,<columns...>` with `t = t0 + row`. Floats use the shortest
/// representation that reads back exactly.
pub fn write_series_csv<W: Write>(series: &TimeSeries, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_owned()];
    header.extend(series.columns.iter().cloned());
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..series.values.rows() {
        record.clear();
        record.push((series.t0 + r).to_string());
        record.extend(series.values.row(r).iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Read `t,<columns...>`. The `t` column must hold consecutive integers.
pub fn read_series_csv<R: Read>(r: R) -> Result<TimeSeries> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Csv("first column must be `t`".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if columns.is_empty() {
        return Err(Error::Csv("no data columns".into()));
    }
    let mut data = Vec::new();
    let mut t0 = None;
    let mut rows = 0usize;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let t: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Csv(format!("line {line}: bad time index")))?;
        let start = *t0.get_or_insert(t);
        if t != start + rows {
            return Err(Error::Csv(format!(
                "line {line}: expected t = {}, got {t}",
                start + rows
            )));
        }
        if rec.len() != columns.len() + 1 {
            return Err(Error::Csv(format!(
                "line {line}: {} fields, expected {}",
                rec.len(),
                columns.len() + 1
            )));
        }
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv(format!("line {line}, column `{}`: not a number", columns[j])))?;
            if !v.is_finite() {
                return Err(Error::Csv(format!(
                    "line {line}, column `{}`: non-finite value",
                    columns[j]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(TimeSeries {
        values: Matrix::from_vec(rows, columns.len(), data)?,
        columns,
        t0: t0.unwrap_or(0),
    })
}

pub fn read_series_file(path: &Path) -> Result<TimeSeries> {
    read_series_csv(BufReader::new(File::open(path)?))
}

pub fn write_series_file(series: &TimeSeries, path: &Path) -> Result<()> {
    write_series_csv(series, BufWriter::new(File::create(path)?))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<NetworkGraph> {
    NetworkGraph::from_file(&read_json::<GraphFile>(path)?)
}

pub fn write_graph(g: &NetworkGraph, path: &Path) -> Result<()> {
    write_json(&g.to_file(), path)
}

pub fn read_scenarios(path: &Path) -> Result<Vec<AnomalyScenario>> {
    read_json(path)
}

pub fn write_scenarios(s: &[AnomalyScenario], path: &Path) -> Result<()> {
    write_json(s, path)
}

/// One compact JSON document per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
