//! End-to-end experiments: configuration, the per-scenario pipeline
//! (simulate, measure, cut the window, localize, evaluate) and report files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{
    anomaly_demand_series, apply_sensor_fault, generate_scenarios, AnomalyKind, AnomalyScenario, FaultProfile,
    ScenarioBatch,
};
use crate::dynamics::{
    measure, simulate, DemandConfig, DemandModel, DynamicsConfig, FaultState, TimeSeries, TransitionModel,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, error_map, eval_type1, eval_type2, random_baseline_mean, AggregateReport, ErrorMapEntry, Type1Metrics,
};
use crate::exec::{self, Jobs};
use crate::io;
use crate::learners::LearnerConfig;
use crate::localization::{LocalizationResult, MeasurementWindow, Method};
use crate::matrix::Matrix;
use crate::network::{random_geometric_graph, NetworkGraph};
use crate::seed;

/// Where the graph comes from: a JSON file, or a random geometric graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSource {
    pub file: Option<PathBuf>,
    pub nodes: usize,
    pub radius: f64,
    pub sensors: usize,
}

impl Default for GraphSource {
    fn default() -> Self {
        Self {
            file: None,
            nodes: 100,
            radius: 0.17,
            sensors: 10,
        }
    }
}

fn default_window() -> usize {
    288
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub graph: GraphSource,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub demand: DemandConfig,
    #[serde(default)]
    pub scenarios: ScenarioBatch,
    #[serde(default)]
    pub learners: LearnerConfig,
    #[serde(default)]
    pub methods: Vec<Method>,
    /// Half-window `w` around the onset.
    #[serde(default = "default_window")]
    pub window: usize,
}

impl ExperimentConfig {
    /// Parse TOML or JSON (chosen by extension, `.json` for JSON). Errors
    /// name the offending key path. A relative `graph.file` is resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = Self::parse(&text, json)?;
        if let (Some(file), Some(dir)) = (&cfg.graph.file, path.parent()) {
            if file.is_relative() {
                cfg.graph.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let value: serde_json::Value = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))?
        };
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return fail("no methods configured".into());
        }
        if self.window == 0 {
            return fail("window: must be >= 1".into());
        }
        if self.graph.file.is_none() {
            if self.graph.nodes == 0 {
                return fail("graph.nodes: must be >= 1".into());
            }
            if self.graph.sensors == 0 || self.graph.sensors > self.graph.nodes {
                return fail("graph.sensors: must lie in 1..=graph.nodes".into());
            }
            if !(self.graph.radius > 0.0) {
                return fail("graph.radius: must be > 0".into());
            }
        }
        let d = &self.dynamics;
        if !(d.sigma1 >= 0.0) {
            return fail("dynamics.sigma1: must be >= 0".into());
        }
        if !(d.sigma0 >= 0.0) {
            return fail("dynamics.sigma0: must be >= 0".into());
        }
        let l = &self.learners;
        if l.n_trees == 0 {
            return fail("learners.n_trees: must be >= 1".into());
        }
        if l.max_depth == 0 {
            return fail("learners.max_depth: must be >= 1".into());
        }
        if l.folds < 2 {
            return fail("learners.folds: must be >= 2".into());
        }
        if l.pfi_repeats == 0 {
            return fail("learners.pfi_repeats: must be >= 1".into());
        }
        if l.c_grid.is_empty() || l.c_grid.iter().any(|c| !(*c > 0.0)) {
            return fail("learners.c_grid: needs positive values".into());
        }
        if !(l.holdout > 0.0 && l.holdout < 1.0) {
            return fail("learners.holdout: must lie in (0, 1)".into());
        }
        if self.scenarios.kinds.is_empty() {
            return fail("scenarios.kinds: must not be empty".into());
        }
        if self.scenarios.kinds.contains(&AnomalyKind::TypeII) && self.scenarios.profiles.is_empty() {
            return fail("scenarios.profiles: needed for TypeII scenarios".into());
        }
        for m in &self.scenarios.magnitudes {
            self.scenarios.resolve_magnitude(m)?;
        }
        self.scenarios
            .onset_range(self.window)
            .map_err(|e| Error::Config(format!("scenarios.window_length: {e}")))?;
        Ok(())
    }
}

/// One method's outcome on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: usize,
    pub kind: AnomalyKind,
    pub node: String,
    pub window: usize,
    pub onset: usize,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<FaultProfile>,
    pub method: String,
    pub selected: String,
    pub ranking: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type1: Option<Type1Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
}

/// Type-II scores of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type2Row {
    pub method: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hits: usize,
    pub total: usize,
}

/// Graph, model and demand law of an experiment, plus the seeding scheme.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub graph: NetworkGraph,
    pub model: TransitionModel,
    pub demand: DemandModel,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let graph = match &cfg.graph.file {
            Some(path) => io::read_graph(path)?,
            None => random_geometric_graph(
                cfg.graph.nodes,
                cfg.graph.radius,
                cfg.graph.sensors,
                seed::derive_tagged(cfg.seed, "graph", 0),
            )?,
        };
        if graph.sensors().is_empty() {
            return Err(Error::NoSensors);
        }
        Self::with_graph(cfg, graph)
    }

    pub fn with_graph(cfg: ExperimentConfig, graph: NetworkGraph) -> Result<Self> {
        let model = TransitionModel::from_config(&graph, &cfg.dynamics)?;
        let demand = DemandModel::from_config(
            &cfg.demand,
            graph.node_count(),
            seed::derive_tagged(cfg.seed, "demand", 0),
        )?;
        Ok(Self {
            cfg,
            graph,
            model,
            demand,
        })
    }

    pub fn scenarios(&self) -> Result<Vec<AnomalyScenario>> {
        generate_scenarios(
            &self.graph,
            &self.cfg.scenarios,
            self.cfg.window,
            self.demand.mean_demand(),
            self.cfg.dynamics.sigma1,
            seed::derive_tagged(self.cfg.seed, "scenarios", 0),
        )
    }

    /// Node observables and sensor measurements for one scenario. All
    /// scenarios of a window share demands and measurement noise, so they
    /// differ only by their anomaly.
    pub fn observe(&self, s: &AnomalyScenario) -> Result<(TimeSeries, TimeSeries)> {
        let steps = if s.window_length > 0 {
            s.window_length
        } else {
            self.cfg.scenarios.window_length
        };
        let n = self.graph.node_count();
        let extra = match s.kind {
            AnomalyKind::TypeI => anomaly_demand_series(s, &self.graph, steps)?,
            AnomalyKind::TypeII => Matrix::zeros(steps, n),
        };
        let sim_seed = seed::derive_tagged(self.cfg.seed, "simulate", s.window as u64);
        let obs = simulate(
            &self.model,
            &self.graph,
            &self.demand,
            &extra,
            steps,
            self.cfg.dynamics.burn_in,
            sim_seed,
        )?;
        let online = FaultState::all_online(steps, self.graph.sensors().len());
        let d = &self.cfg.dynamics;
        let mut meas = measure(
            &obs,
            &self.graph,
            &online,
            d.sigma1,
            d.sigma0,
            seed::derive(sim_seed, 2),
        )?;
        if s.kind == AnomalyKind::TypeII {
            meas.values = apply_sensor_fault(
                &meas.values,
                &meas.columns,
                s,
                d.sigma0,
                seed::derive_tagged(self.cfg.seed, "fault", s.id as u64),
            )?;
        }
        Ok((obs, meas))
    }

    /// Base seed for the localizers of a scenario.
    pub fn localize_seed(&self, s: &AnomalyScenario) -> u64 {
        seed::derive_tagged(self.cfg.seed, "localize", s.id as u64)
    }

    /// Run every configured method on one scenario.
    pub fn run_scenario(&self, s: &AnomalyScenario) -> Result<Vec<ScenarioRecord>> {
        let (_, meas) = self.observe(s)?;
        let mw = MeasurementWindow::from_series(&meas, s.onset, self.cfg.window)?;
        let base = self.localize_seed(s);
        self.cfg
            .methods
            .iter()
            .map(|&m| {
                let r = m.localize(&mw, &self.cfg.learners, method_seed(base, m), Jobs::Sequential)?;
                self.record(s, r)
            })
            .collect()
    }

    fn record(&self, s: &AnomalyScenario, r: LocalizationResult) -> Result<ScenarioRecord> {
        make_record(s, r, Some(&self.graph))
    }
}

/// Record of one result; metrics are filled in when a graph is given.
pub fn make_record(s: &AnomalyScenario, r: LocalizationResult, g: Option<&NetworkGraph>) -> Result<ScenarioRecord> {
    let mut rec = ScenarioRecord {
        scenario: s.id,
        kind: s.kind,
        node: s.node.clone(),
        window: s.window,
        onset: s.onset,
        magnitude: s.magnitude,
        profile: s.profile,
        method: r.method,
        selected: r.selected,
        ranking: r.ranking,
        scores: r.scores.scores,
        model_accuracy: r.model_accuracy,
        type1: None,
        hit: None,
    };
    if let Some(g) = g {
        score_record(&mut rec, s, g)?;
    }
    Ok(rec)
}

fn score_record(rec: &mut ScenarioRecord, s: &AnomalyScenario, g: &NetworkGraph) -> Result<()> {
    match s.kind {
        AnomalyKind::TypeI => {
            rec.type1 = Some(eval_type1(&selection_only(rec), s, g)?);
            rec.hit = None;
        }
        AnomalyKind::TypeII => {
            rec.type1 = None;
            rec.hit = Some(rec.selected == s.node);
        }
    }
    Ok(())
}

/// Recompute the metrics of stored records against a graph and scenario
/// list, then summarize.
pub fn evaluate_records(
    g: &NetworkGraph,
    scenarios: Vec<AnomalyScenario>,
    mut records: Vec<ScenarioRecord>,
) -> Result<ExperimentOutput> {
    let by_id: BTreeMap<usize, &AnomalyScenario> = scenarios.iter().map(|s| (s.id, s)).collect();
    for rec in &mut records {
        let s = by_id
            .get(&rec.scenario)
            .ok_or_else(|| Error::InvalidParameter(format!("record refers to unknown scenario {}", rec.scenario)))?;
        if s.node != rec.node || s.kind != rec.kind {
            return Err(Error::InvalidParameter(format!(
                "record for scenario {} does not match the scenario list",
                rec.scenario
            )));
        }
        score_record(rec, s, g)?;
    }
    summarize_records(g, scenarios, records)
}

/// Seed of method `m` given a scenario's base seed.
pub fn method_seed(base: u64, m: Method) -> u64 {
    seed::derive_tagged(base, &m.to_string(), 0)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub graph: NetworkGraph,
    pub scenarios: Vec<AnomalyScenario>,
    pub records: Vec<ScenarioRecord>,
    pub report: AggregateReport,
    pub type2: Vec<Type2Row>,
    pub error_maps: BTreeMap<String, Vec<ErrorMapEntry>>,
}

/// Generate the scenarios and run them in parallel. Outputs depend only on
/// the config, never on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Jobs) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let ctx = Context::new(cfg.clone())?;
    let scenarios = ctx.scenarios()?;
    run_scenarios(&ctx, scenarios, jobs)
}

/// Run given scenarios and summarize.
pub fn run_scenarios(ctx: &Context, scenarios: Vec<AnomalyScenario>, jobs: Jobs) -> Result<ExperimentOutput> {
    let per = exec::map_slice(&scenarios, jobs, |s| ctx.run_scenario(s));
    let mut records = Vec::with_capacity(scenarios.len() * ctx.cfg.methods.len());
    for r in per {
        records.extend(r?);
    }
    summarize_records(&ctx.graph, scenarios, records)
}

/// Build the report, type-II scores and error maps from records.
pub fn summarize_records(
    g: &NetworkGraph,
    scenarios: Vec<AnomalyScenario>,
    records: Vec<ScenarioRecord>,
) -> Result<ExperimentOutput> {
    let mut methods: Vec<String> = Vec::new();
    for r in &records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let type1: Vec<(String, Type1Metrics)> = records
        .iter()
        .filter_map(|r| r.type1.map(|m| (r.method.clone(), m)))
        .collect();
    let report = aggregate(&type1);

    let by_id: BTreeMap<usize, &AnomalyScenario> = scenarios.iter().map(|s| (s.id, s)).collect();
    let mut type2 = Vec::new();
    for method in &methods {
        let results: Vec<(LocalizationResult, &AnomalyScenario)> = records
            .iter()
            .filter(|r| &r.method == method && r.kind == AnomalyKind::TypeII)
            .filter_map(|r| by_id.get(&r.scenario).map(|s| (selection_only(r), *s)))
            .collect();
        if results.is_empty() {
            continue;
        }
        let pairs: Vec<(&LocalizationResult, &AnomalyScenario)> = results.iter().map(|(r, s)| (r, *s)).collect();
        let m = eval_type2(&pairs)?;
        type2.push(Type2Row {
            method: method.clone(),
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            hits: m.hits,
            total: m.total,
        });
    }

    let mut error_maps = BTreeMap::new();
    let mut baseline: BTreeMap<String, f64> = BTreeMap::new();
    for method in &methods {
        let mut dist: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records.iter().filter(|r| &r.method == method) {
            if let Some(m) = r.type1 {
                dist.entry(r.node.clone()).or_default().push(m.distance_topo.as_f64());
            }
        }
        if dist.is_empty() {
            continue;
        }
        for node in dist.keys() {
            if !baseline.contains_key(node) {
                baseline.insert(node.clone(), random_baseline_mean(g, g.node(node)?)?);
            }
        }
        error_maps.insert(method.clone(), error_map(&dist, g, &baseline)?);
    }
    Ok(ExperimentOutput {
        graph: g.clone(),
        scenarios,
        records,
        report,
        type2,
        error_maps,
    })
}

/// Enough of a result for the metrics, which read only the selection and
/// the ranking.
fn selection_only(r: &ScenarioRecord) -> LocalizationResult {
    LocalizationResult {
        method: r.method.clone(),
        sensors: r.ranking.clone(),
        scores: crate::learners::ImportanceVector::raw(Vec::new()),
        ranking: r.ranking.clone(),
        selected: r.selected.clone(),
        model_accuracy: r.model_accuracy,
    }
}

impl ExperimentOutput {
    /// Write `records.jsonl`, `table1.csv`, `type2.csv`,
    /// `error_map_<method>.json`, `graph.json` and `scenarios.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let p = dir.join("records.jsonl");
        io::write_jsonl(&self.records, BufWriter::new(File::create(&p)?))?;
        written.push(p);

        let p = dir.join("table1.csv");
        self.report.write_csv(BufWriter::new(File::create(&p)?))?;
        written.push(p);

        let p = dir.join("type2.csv");
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&p)?));
        w.write_record(["method", "recall", "precision", "f1", "hits", "total"])?;
        for r in &self.type2 {
            w.write_record([
                r.method.clone(),
                r.recall.to_string(),
                r.precision.to_string(),
                r.f1.to_string(),
                r.hits.to_string(),
                r.total.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(p);

        for (method, map) in &self.error_maps {
            let p = dir.join(format!("error_map_{method}.json"));
            io::write_json(map, &p)?;
            written.push(p);
        }
        let p = dir.join("graph.json");
        io::write_graph(&self.graph, &p)?;
        written.push(p);
        let p = dir.join("scenarios.json");
        io::write_scenarios(&self.scenarios, &p)?;
        written.push(p);
        Ok(written)
    }
}

/// Localize on an external `t,<sensor ids...>` CSV. `onset` is a value of
/// the `t` column. Method `m` is seeded with [`method_seed`]`(seed, m)`.
pub fn ingest_external(
    path: &Path,
    onset: usize,
    w: usize,
    methods: &[Method],
    learners: &LearnerConfig,
    seed: u64,
) -> Result<Vec<LocalizationResult>> {
    let series = io::read_series_file(path)?;
    localize_series(&series, onset, w, methods, learners, seed)
}

pub fn localize_series(
    series: &TimeSeries,
    onset: usize,
    w: usize,
    methods: &[Method],
    learners: &LearnerConfig,
    seed: u64,
) -> Result<Vec<LocalizationResult>> {
    if methods.is_empty() {
        return Err(Error::Config("no methods configured".into()));
    }
    let mw = MeasurementWindow::from_series(series, onset, w)?;
    methods
        .iter()
        .map(|&m| m.localize(&mw, learners, method_seed(seed, m), Jobs::All))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: &str) -> ExperimentConfig {
        ExperimentConfig::parse(
            &format!(
                r#"
seed = 3
methods = [{methods}]
window = 40
[graph]
nodes = 20
radius = 0.35
sensors = 4
[scenarios]
windows = 2
window_length = 200
onsets_per_window = 2
kinds = ["TypeI", "TypeII"]
[learners]
n_trees = 10
"#
            ),
            false,
        )
        .unwrap()
    }

    #[test]
    fn empty_methods_rejected() {
        let e = ExperimentConfig::parse("seed = 1\n", false).unwrap_err();
        assert_eq!(e.to_string(), "config: no methods configured");
    }

    #[test]
    fn errors_name_the_path() {
        let e = ExperimentConfig::parse(
            r#"{"seed": 1, "methods": ["mean"], "learners": {"n_trees": "x"}}"#,
            true,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("learners.n_trees"), "{e}");
        let e = ExperimentConfig::parse("seed = 1\nmethods = [\"nope\"]\n", false)
            .unwrap_err()
            .to_string();
        assert!(e.contains("methods[0]") && e.contains("unknown method"), "{e}");
        let e = ExperimentConfig::parse("methods = [\"mean\"]\n", false)
            .unwrap_err()
            .to_string();
        assert!(e.contains("seed"), "{e}");
        let e = ExperimentConfig::parse("seed = 1\nmethods = [\"mean\"]\n[dynamics]\nbogus = 1\n", false)
            .unwrap_err()
            .to_string();
        assert!(e.contains("dynamics") && e.contains("bogus"), "{e}");
    }

    #[test]
    fn pipeline_runs_and_is_independent_of_jobs() {
        let cfg = small(r#""random", "mean", "ks", "rf-fi""#);
        let a = run_experiment(&cfg, Jobs::Sequential).unwrap();
        let b = run_experiment(&cfg, Jobs::Fixed(3)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.scenarios.len(), 12);
        assert_eq!(a.records.len(), 12 * 4);
        assert_eq!(a.report.runs["mean"], 4);
        assert_eq!(a.type2.len(), 4);
        assert!(a.error_maps.contains_key("mean"));
    }

    #[test]
    fn scenarios_in_a_window_share_data() {
        let cfg = small(r#""mean""#);
        let ctx = Context::new(cfg).unwrap();
        let sc = ctx.scenarios().unwrap();
        let same: Vec<&AnomalyScenario> = sc
            .iter()
            .filter(|s| s.window == 0 && s.kind == AnomalyKind::TypeII)
            .collect();
        let (_, a) = ctx.observe(same[0]).unwrap();
        let (_, b) = ctx.observe(same[1]).unwrap();
        // Before the earliest onset the two series agree.
        let first = same[0].onset.min(same[1].onset);
        assert_eq!(a.values.slice_rows(0, first), b.values.slice_rows(0, first));
    }
}
