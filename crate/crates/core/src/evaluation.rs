//! Localization metrics, their aggregation into report tables and the
//! per-node error map.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyKind, AnomalyScenario};
use crate::error::{Error, Result};
use crate::localization::LocalizationResult;
use crate::network::{Hops, NetworkGraph, NodeId};
use crate::stats::{summarize, Summary};

/// Type-I localization quality of one result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type1Metrics {
    pub distance_topo: Hops,
    pub distance_geo: f64,
    /// Sensors strictly closer (in hops) to the anomaly than the selected one.
    pub n_closer: usize,
    /// Selected over optimal sensor distance; absent when the anomaly node
    /// is a sensor.
    pub rel_dist: Option<f64>,
    pub best3: usize,
}

pub fn eval_type1(r: &LocalizationResult, s: &AnomalyScenario, g: &NetworkGraph) -> Result<Type1Metrics> {
    if s.kind != AnomalyKind::TypeI {
        return Err(Error::KindMismatch { expected: "TypeI" });
    }
    let v = g.node(&s.node)?;
    let selected = g.node(&r.selected)?;
    if !g.is_sensor(selected) {
        return Err(Error::UnknownSensor(r.selected.clone()));
    }
    let hops = g.hops_from(v)?;
    let d_sel = hops[selected.0];
    let n_closer = g.sensors().iter().filter(|s| hops[s.0] < d_sel).count();
    let best = g.sensors().iter().map(|s| hops[s.0]).min().unwrap_or(Hops::Infinite);
    let rel_dist = match (g.is_sensor(v), d_sel, best) {
        (false, Hops::Finite(a), Hops::Finite(b)) if b > 0 => Some(f64::from(a) / f64::from(b)),
        _ => None,
    };

    let mut closest: Vec<NodeId> = g.sensors().to_vec();
    closest.sort_by(|a, b| hops[a.0].cmp(&hops[b.0]).then_with(|| g.id(*a).cmp(g.id(*b))));
    let k = 3.min(closest.len());
    let best3 = r
        .ranking
        .iter()
        .take(k)
        .filter(|id| closest[..k].iter().any(|c| g.id(*c) == id.as_str()))
        .count();
    Ok(Type1Metrics {
        distance_topo: d_sel,
        distance_geo: g.geographic_distance(selected, v)?,
        n_closer,
        rel_dist,
        best3,
    })
}

/// Micro-averaged sensor-fault localization scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type2Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hits: usize,
    pub total: usize,
}

/// Each scenario is one prediction with the selected sensor as the predicted
/// class and the faulty sensor as the true class; counts are pooled over
/// sensors before computing the scores.
pub fn eval_type2(results: &[(&LocalizationResult, &AnomalyScenario)]) -> Result<Type2Metrics> {
    if results.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut per_class: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for (r, s) in results {
        if s.kind != AnomalyKind::TypeII {
            return Err(Error::KindMismatch { expected: "TypeII" });
        }
        if r.selected == s.node {
            per_class.entry(&s.node).or_default()[0] += 1;
        } else {
            per_class.entry(&r.selected).or_default()[1] += 1;
            per_class.entry(&s.node).or_default()[2] += 1;
        }
    }
    let (tp, fp, fn_) = per_class
        .values()
        .fold((0, 0, 0), |(a, b, c), [tp, fp, fn_]| (a + tp, b + fp, c + fn_));
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Type2Metrics {
        recall,
        precision,
        f1,
        hits: tp,
        total: results.len(),
    })
}

/// One line of the report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub metric: String,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<ReportRow>,
    /// Scenarios per method.
    pub runs: BTreeMap<String, usize>,
}

pub const TYPE1_METRICS: [&str; 5] = ["distance_topo", "distance_geo", "n_closer", "rel_dist", "best3"];

fn metric_value(m: &Type1Metrics, name: &str) -> Option<f64> {
    match name {
        "distance_topo" => Some(m.distance_topo.as_f64()),
        "distance_geo" => Some(m.distance_geo),
        "n_closer" => Some(m.n_closer as f64),
        "rel_dist" => m.rel_dist,
        "best3" => Some(m.best3 as f64),
        _ => None,
    }
}

/// Median, mean and population std per method and metric. Methods appear
/// in first-seen order; `rel_dist` only covers the scenarios where it is
/// defined.
pub fn aggregate(metrics: &[(String, Type1Metrics)]) -> AggregateReport {
    let mut order: Vec<&str> = Vec::new();
    for (m, _) in metrics {
        if !order.contains(&m.as_str()) {
            order.push(m);
        }
    }
    let mut report = AggregateReport::default();
    for method in order {
        let of_method: Vec<&Type1Metrics> = metrics.iter().filter(|(m, _)| m == method).map(|(_, x)| x).collect();
        report.runs.insert(method.to_owned(), of_method.len());
        for name in TYPE1_METRICS {
            let values: Vec<f64> = of_method.iter().filter_map(|m| metric_value(m, name)).collect();
            if let Some(Summary { median, mean, std, .. }) = summarize(&values) {
                report.rows.push(ReportRow {
                    method: method.to_owned(),
                    metric: name.to_owned(),
                    median,
                    mean,
                    std,
                });
            }
        }
    }
    report
}

impl AggregateReport {
    pub fn get(&self, method: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    /// CSV with header `method,metric,median,mean,std`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "metric", "median", "mean", "std"])?;
        for r in &self.rows {
            out.write_record([
                r.method.clone(),
                r.metric.clone(),
                r.median.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean hop distance from `v` to a uniformly chosen sensor.
pub fn random_baseline_mean(g: &NetworkGraph, v: NodeId) -> Result<f64> {
    if g.sensors().is_empty() {
        return Err(Error::NoSensors);
    }
    let hops = g.hops_from(v)?;
    let total: f64 = g.sensors().iter().map(|s| hops[s.0].as_f64()).sum();
    Ok(total / g.sensors().len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMapEntry {
    pub node: String,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Per anomaly node: mean selected distance rescaled so that the closest
/// sensor maps to 0 and the random baseline to 1, clamped to `[0, 1]`.
/// `distances` maps node ids to the topological distances observed there;
/// `random_mean` gives the random baseline per node (see
/// [`random_baseline_mean`]).
pub fn error_map(
    distances: &BTreeMap<String, Vec<f64>>,
    g: &NetworkGraph,
    random_mean: &BTreeMap<String, f64>,
) -> Result<Vec<ErrorMapEntry>> {
    let mut out = Vec::with_capacity(distances.len());
    for (node, ds) in distances {
        if ds.is_empty() {
            continue;
        }
        let v = g.node(node)?;
        let baseline = *random_mean
            .get(node)
            .ok_or_else(|| Error::InvalidParameter(format!("no random baseline for node `{node}`")))?;
        let hops = g.hops_from(v)?;
        let closest = g
            .sensors()
            .iter()
            .map(|s| hops[s.0].as_f64())
            .fold(f64::INFINITY, f64::min);
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        let span = baseline - closest;
        let score = if span > 0.0 && span.is_finite() {
            ((mean - closest) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let [x, y] = g.position(v);
        out.push(ErrorMapEntry {
            node: node.clone(),
            x,
            y,
            score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ImportanceVector;
    use crate::network::NodeRecord;

    fn path5() -> NetworkGraph {
        let ids = ["a", "b", "c", "d", "e"];
        let nodes: Vec<NodeRecord> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| NodeRecord {
                id: (*id).into(),
                x: i as f64,
                y: 0.0,
            })
            .collect();
        let edges: Vec<(String, String)> = ids.windows(2).map(|w| (w[0].into(), w[1].into())).collect();
        NetworkGraph::build(&nodes, &edges, &["a".into(), "e".into()]).unwrap()
    }

    fn result(sensors: &[&str], scores: Vec<f64>) -> LocalizationResult {
        let s: Vec<String> = sensors.iter().map(|s| (*s).to_owned()).collect();
        LocalizationResult::from_scores("m", &s, ImportanceVector::raw(scores), None).unwrap()
    }

    fn leak(node: &str) -> AnomalyScenario {
        AnomalyScenario {
            id: 0,
            kind: AnomalyKind::TypeI,
            node: node.into(),
            onset: 0,
            magnitude: 1.0,
            profile: None,
            ramp: 0,
            window: 0,
            window_start: 0,
            window_length: 0,
        }
    }

    fn fault(node: &str) -> AnomalyScenario {
        AnomalyScenario {
            kind: AnomalyKind::TypeII,
            ..leak(node)
        }
    }

    #[test]
    fn path_graph_fixture() {
        let g = path5();
        let m = eval_type1(&result(&["a", "e"], vec![0.0, 1.0]), &leak("b"), &g).unwrap();
        assert_eq!(m.distance_topo, Hops::Finite(3));
        assert_eq!(m.n_closer, 1);
        assert_eq!(m.rel_dist, Some(3.0));
        assert_eq!(m.distance_geo, 3.0);

        let best = eval_type1(&result(&["a", "e"], vec![1.0, 0.0]), &leak("b"), &g).unwrap();
        assert_eq!((best.n_closer, best.rel_dist, best.best3), (0, Some(1.0), 2));

        let at_sensor = eval_type1(&result(&["a", "e"], vec![1.0, 0.0]), &leak("a"), &g).unwrap();
        assert_eq!(at_sensor.rel_dist, None);
        assert_eq!(at_sensor.distance_topo, Hops::Finite(0));
    }

    #[test]
    fn kind_checked() {
        let g = path5();
        assert!(eval_type1(&result(&["a", "e"], vec![1.0, 0.0]), &fault("a"), &g).is_err());
        let r = result(&["a", "e"], vec![1.0, 0.0]);
        assert!(eval_type2(&[(&r, &leak("a"))]).is_err());
    }

    #[test]
    fn type2_confusion_fixture() {
        // 10 scenarios over sensors x, y, z; 7 hits.
        let sensors = ["x", "y", "z"];
        let pick = |i: usize| {
            let mut s = vec![0.0; 3];
            s[i] = 1.0;
            result(&sensors, s)
        };
        let cases = [
            (0, "x"),
            (0, "x"),
            (0, "x"),
            (1, "y"),
            (1, "y"),
            (2, "z"),
            (2, "z"),
            (0, "y"),
            (1, "z"),
            (2, "x"),
        ];
        let rs: Vec<LocalizationResult> = cases.iter().map(|(i, _)| pick(*i)).collect();
        let ss: Vec<AnomalyScenario> = cases.iter().map(|(_, n)| fault(n)).collect();
        let pairs: Vec<_> = rs.iter().zip(&ss).collect();
        let m = eval_type2(&pairs).unwrap();
        assert_eq!((m.hits, m.total), (7, 10));
        assert!((m.precision - 0.7).abs() < 1e-15);
        assert!((m.recall - 0.7).abs() < 1e-15);
        assert!((m.f1 - 0.7).abs() < 1e-15);

        let all: Vec<_> = rs.iter().zip(&ss).take(7).collect();
        assert_eq!(eval_type2(&all).unwrap().f1, 1.0);
        let none: Vec<_> = rs.iter().zip(&ss).skip(7).collect();
        assert_eq!(eval_type2(&none).unwrap().f1, 0.0);
    }

    #[test]
    fn aggregate_closed_form() {
        let m = |d: u32| Type1Metrics {
            distance_topo: Hops::Finite(d),
            distance_geo: d as f64,
            n_closer: 0,
            rel_dist: None,
            best3: 1,
        };
        let rep = aggregate(&[("a".into(), m(1)), ("a".into(), m(2)), ("a".into(), m(3))]);
        let row = rep.get("a", "distance_topo").unwrap();
        assert_eq!((row.median, row.mean), (2.0, 2.0));
        assert!((row.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(rep.get("a", "rel_dist").is_none());
        assert_eq!(rep.runs["a"], 3);

        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,metric,median,mean,std\n"));
    }

    #[test]
    fn error_map_normalization() {
        let g = path5();
        let rand: BTreeMap<String, f64> = g
            .ids()
            .iter()
            .map(|id| (id.clone(), random_baseline_mean(&g, g.node(id).unwrap()).unwrap()))
            .collect();
        // b: closest 1, random mean (1 + 3) / 2 = 2.
        assert_eq!(rand["b"], 2.0);
        let perfect = BTreeMap::from([("b".to_owned(), vec![1.0, 1.0])]);
        assert_eq!(error_map(&perfect, &g, &rand).unwrap()[0].score, 0.0);
        let worse = BTreeMap::from([("b".to_owned(), vec![3.0])]);
        assert_eq!(error_map(&worse, &g, &rand).unwrap()[0].score, 1.0);
        let random_like = BTreeMap::from([("b".to_owned(), vec![1.0, 3.0])]);
        assert_eq!(error_map(&random_like, &g, &rand).unwrap()[0].score, 1.0);
        // c is equidistant from both sensors: degenerate span.
        let mid = BTreeMap::from([("c".to_owned(), vec![2.0])]);
        assert_eq!(error_map(&mid, &g, &rand).unwrap()[0].score, 0.0);
    }
}
