use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use driftloc::exec::Jobs;
use driftloc::experiment::{self, Context, ExperimentConfig};
use driftloc::io;
use driftloc::learners::LearnerConfig;
use driftloc::localization::Method;
use driftloc::network::random_geometric_graph;
use driftloc::theory::{self, Suite, SweepConfig};

#[derive(Parser)]
#[command(
    name = "driftloc",
    version,
    about = "Anomaly simulation and localization on sensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Scenario utilities.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Simulate one scenario and write its sensor measurements as CSV.
    Simulate(SimulateArgs),
    /// Localize an anomaly in a `t,<sensor ids...>` CSV.
    Localize(LocalizeArgs),
    /// Score localization records against a graph and scenario list.
    Evaluate(EvaluateArgs),
    /// Run the numerical theory checks.
    Verify(VerifyArgs),
    /// Run a full experiment.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum GraphAction {
    /// Random geometric graph on the unit square.
    Gen {
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 0.17)]
        radius: f64,
        #[arg(long, default_value_t = 10)]
        sensors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Expand the config's scenario batch into a JSON list.
    Generate {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Graph JSON; overrides the config's graph section.
    #[arg(long)]
    graph: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg =
            ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = &self.graph {
            cfg.graph.file = Some(g.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Scenario JSON list; defaults to the config's generated batch.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Scenario id to simulate.
    #[arg(long)]
    id: usize,
    /// Measurements CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write node observables here.
    #[arg(long)]
    observables: Option<PathBuf>,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Measurements CSV.
    #[arg(long)]
    input: PathBuf,
    /// Onset, as a value of the `t` column.
    #[arg(long)]
    onset: usize,
    /// Half-window length.
    #[arg(long, default_value_t = 288)]
    window: usize,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',', default_value = "mean,ks,rf-fi")]
    methods: Vec<String>,
    /// Config providing the learner settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// With `--scenario-id`, emit records for `evaluate` instead of plain results.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, requires = "scenarios")]
    scenario_id: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    scenarios: PathBuf,
    /// Records as JSON lines.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    /// Sweep sizes (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 = all cores, 1 = sequential.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 = all cores, 1 = sequential.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Graph {
            action:
                GraphAction::Gen {
                    nodes,
                    radius,
                    sensors,
                    seed,
                    out,
                },
        } => {
            let g = random_geometric_graph(nodes, radius, sensors, seed)?;
            io::write_graph(&g, &out)?;
            println!(
                "graph: {} nodes, {} edges, {} sensors",
                g.node_count(),
                g.edge_count(),
                g.sensors().len()
            );
        }
        Command::Scenarios {
            action: ScenarioAction::Generate { common, out },
        } => {
            let ctx = Context::new(common.load()?)?;
            let sc = ctx.scenarios()?;
            io::write_scenarios(&sc, &out)?;
            println!("{} scenarios", sc.len());
        }
        Command::Simulate(a) => simulate(a)?,
        Command::Localize(a) => localize(a)?,
        Command::Evaluate(a) => {
            let g = io::read_graph(&a.graph)?;
            let sc = io::read_scenarios(&a.scenarios)?;
            let records = io::read_jsonl(File::open(&a.results).with_context(|| a.results.display().to_string())?)?;
            let out = experiment::evaluate_records(&g, sc, records)?;
            out.write(&a.out)?;
            print_summary(&out);
        }
        Command::Verify(a) => return verify(a),
        Command::Run(a) => run(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let ctx = Context::new(a.common.load()?)?;
    let sc = match &a.scenarios {
        Some(p) => io::read_scenarios(p)?,
        None => ctx.scenarios()?,
    };
    let Some(s) = sc.iter().find(|s| s.id == a.id) else {
        bail!("no scenario with id {}", a.id);
    };
    let (obs, meas) = ctx.observe(s)?;
    io::write_series_file(&meas, &a.out)?;
    if let Some(p) = &a.observables {
        io::write_series_file(&obs, p)?;
    }
    Ok(())
}

fn parse_methods(ids: &[String]) -> Result<Vec<Method>> {
    ids.iter()
        .map(|m| m.trim().parse::<Method>().map_err(anyhow::Error::from))
        .collect()
}

fn localize(a: LocalizeArgs) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    let learners = match &a.config {
        Some(p) => ExperimentConfig::load(p)?.learners,
        None => LearnerConfig::default(),
    };
    let results = experiment::ingest_external(&a.input, a.onset, a.window, &methods, &learners, a.seed)?;
    let text = match (&a.scenarios, a.scenario_id) {
        (Some(p), Some(id)) => {
            let sc = io::read_scenarios(p)?;
            let Some(s) = sc.iter().find(|s| s.id == id) else {
                bail!("no scenario with id {id}");
            };
            let records = results
                .into_iter()
                .map(|r| experiment::make_record(s, r, None))
                .collect::<driftloc::Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            io::write_jsonl(&records, &mut buf)?;
            String::from_utf8(buf)?
        }
        _ => serde_json::to_string_pretty(&results)? + "\n",
    };
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let suite: Suite = a.suite.parse()?;
    let cfg: SweepConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)?
            } else {
                toml::from_str(&text)?
            }
        }
        None => SweepConfig::default(),
    };
    let reports = theory::run_suite(suite, &cfg, a.seed, Jobs::from_count(a.jobs))?;
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    match &a.out {
        Some(p) => fs::write(p, &json)?,
        None => print!("{json}"),
    }
    let mut ok = true;
    for r in &reports {
        eprintln!(
            "{:<10} {} checks, {} failures, max measured/bound {:.3e}",
            r.suite,
            r.checks,
            r.failures.len(),
            r.max_ratio
        );
        ok &= r.pass;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(g) = a.graph {
        cfg.graph.file = Some(g);
    }
    let dir = a
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = experiment::run_experiment(&cfg, Jobs::from_count(a.jobs))?;
    out.write(&dir)?;
    write_config_copy(&cfg, &dir)?;
    print_summary(&out);
    Ok(())
}

fn write_config_copy(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("config.json"))?);
    serde_json::to_writer_pretty(&mut w, cfg)?;
    Ok(())
}

fn print_summary(out: &experiment::ExperimentOutput) {
    println!("{} scenarios, {} records", out.scenarios.len(), out.records.len());
    for r in out
        .report
        .rows
        .iter()
        .filter(|r| r.metric == "distance_topo" || r.metric == "n_closer")
    {
        println!(
            "{:<12} {:<14} median {:>7.3} mean {:>7.3} std {:>7.3}",
            r.method, r.metric, r.median, r.mean, r.std
        );
    }
    for r in &out.type2 {
        println!("{:<12} type-II f1 {:.3} ({}/{})", r.method, r.f1, r.hits, r.total);
    }
}
