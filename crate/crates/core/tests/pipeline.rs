use driftloc::anomaly::AnomalyKind;
use driftloc::exec::Jobs;
use driftloc::experiment::{ingest_external, run_experiment, Context, ExperimentConfig};
use driftloc::io;
use driftloc::localization::Method;

fn config(seed: u64, kinds: &str, methods: &str) -> ExperimentConfig {
    ExperimentConfig::parse(
        &format!(
            r#"
seed = {seed}
methods = [{methods}]
window = 60
[graph]
nodes = 30
radius = 0.3
sensors = 5
[scenarios]
windows = 2
window_length = 300
onsets_per_window = 3
kinds = [{kinds}]
[learners]
n_trees = 20
"#
        ),
        false,
    )
    .unwrap()
}

#[test]
fn csv_ingestion_reproduces_in_memory_results() {
    let cfg = config(
        11,
        r#""TypeI", "TypeII""#,
        r#""random", "mean", "ks", "rf-fi", "et-pfi", "logreg""#,
    );
    let ctx = Context::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let scenarios = ctx.scenarios().unwrap();
    for s in scenarios.iter().step_by(3) {
        let records = ctx.run_scenario(s).unwrap();
        let (_, meas) = ctx.observe(s).unwrap();
        let path = dir.path().join(format!("s{}.csv", s.id));
        io::write_series_file(&meas, &path).unwrap();
        let results = ingest_external(
            &path,
            s.onset + meas.t0,
            ctx.cfg.window,
            &ctx.cfg.methods,
            &ctx.cfg.learners,
            ctx.localize_seed(s),
        )
        .unwrap();
        assert_eq!(results.len(), records.len());
        for (r, rec) in results.iter().zip(&records) {
            assert_eq!(r.method, rec.method);
            assert_eq!(r.selected, rec.selected, "scenario {} {}", s.id, rec.method);
            assert_eq!(r.ranking, rec.ranking);
            assert_eq!(r.scores.scores, rec.scores);
            assert_eq!(r.model_accuracy, rec.model_accuracy);
        }
    }
}

#[test]
fn gross_offset_faults_are_found() {
    let mut cfg = config(5, r#""TypeII""#, r#""mean", "ks", "rf-fi""#);
    cfg.scenarios.profiles = vec![driftloc::anomaly::FaultProfile::Offset];
    // Offset of 5 units against demand-driven swings well below that.
    cfg.scenarios.fault_magnitude = 100.0;
    let out = run_experiment(&cfg, Jobs::Sequential).unwrap();
    assert_eq!(out.records.len(), 18);
    let hits = |m: &str| {
        out.records
            .iter()
            .filter(|r| r.method == m && r.hit == Some(true))
            .count()
    };
    assert_eq!(hits("mean"), 6);
    assert_eq!(hits("ks"), 6);
    // A sensor with a strong demand trend can separate the window as well as
    // the faulty one and take a share of the impurity decrease.
    assert!(hits("rf-fi") >= 5, "rf-fi hits {}", hits("rf-fi"));
}

#[test]
fn outputs_written_and_readable() {
    let cfg = config(2, r#""TypeI""#, r#""random", "mean""#);
    let out = run_experiment(&cfg, Jobs::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();

    let table = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(table.starts_with("method,metric,median,mean,std\n"));
    let records: Vec<driftloc::experiment::ScenarioRecord> =
        io::read_jsonl(std::fs::File::open(dir.path().join("records.jsonl")).unwrap()).unwrap();
    assert_eq!(records, out.records);
    assert!(records.iter().all(|r| r.kind == AnomalyKind::TypeI));
    let g = io::read_graph(&dir.path().join("graph.json")).unwrap();
    assert_eq!(g, out.graph);
    let sc = io::read_scenarios(&dir.path().join("scenarios.json")).unwrap();
    assert_eq!(sc, out.scenarios);
    let map: Vec<serde_json::Value> = io::read_json(&dir.path().join("error_map_mean.json")).unwrap();
    for e in &map {
        for key in ["node", "x", "y", "score"] {
            assert!(e.get(key).is_some(), "{e}");
        }
    }

    let again = driftloc::experiment::evaluate_records(&g, sc, records).unwrap();
    assert_eq!(again.report, out.report);
}

#[test]
fn method_ids_parse() {
    for id in [
        "random",
        "mean",
        "ks",
        "rf-fi",
        "rf-pfi",
        "et-fi",
        "et-pfi",
        "logreg",
        "logreg-pfi",
        "svm",
        "svm-pfi",
    ] {
        let m: Method = id.parse().unwrap();
        assert_eq!(m.to_string(), id);
    }
    assert!("logreg-fi".parse::<Method>().is_err());
    assert!("rf-weights".parse::<Method>().is_err());
}
