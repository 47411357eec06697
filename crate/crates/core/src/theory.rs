//! Numerical checks of the contraction results: convergence to the unique
//! fixpoint, Hölder continuity of steady states in the demand, the bound for
//! stochastic demands, exponential decay of a single-node anomaly and the
//! construction showing the decay hypothesis cannot be dropped.
//!
//! Every check reports the bound, the measured value and the slack allowed
//! for floating-point error and fixpoint tolerance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    sample_demands, DemandConfig, DemandModel, DynamicsConfig, DynamicsMode, Transition, TransitionModel, Weighting,
};
use crate::error::{Error, Result};
use crate::exec::{self, Jobs};
use crate::network::{random_geometric_graph, Hops, NetworkGraph, NodeId};
use crate::seed;
use crate::stats::median;

/// One inequality `measured <= bound` with an explicit slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub quantity: String,
    pub bound: f64,
    pub measured: f64,
    /// `bound - measured`.
    pub margin: f64,
    pub tolerance: f64,
    /// `margin >= -tolerance`.
    pub pass: bool,
}

impl BoundCheckReport {
    pub fn new(quantity: impl Into<String>, bound: f64, measured: f64, tolerance: f64) -> Self {
        let margin = bound - measured;
        Self {
            quantity: quantity.into(),
            bound,
            measured,
            margin,
            tolerance,
            pass: margin >= -tolerance,
        }
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

fn contractive(model: &TransitionModel) -> Result<f64> {
    let (cs, _) = model.lipschitz_constants();
    if cs >= 1.0 {
        return Err(Error::NotContractive(cs));
    }
    Ok(cs)
}

/// l1 scale of any steady state for demand `d`.
fn steady_scale(model: &TransitionModel, d: &[f64], cs: f64) -> f64 {
    let drive: f64 = model
        .base()
        .iter()
        .zip(d)
        .map(|(b, x)| b.abs() + model.gain() * x.max(0.0).powf(model.alpha()))
        .sum();
    drive / (1.0 - cs)
}

/// Residual tolerance used for steady states in the checks. Far above the
/// rounding floor of the residual, far below the bounds being checked.
pub fn fixpoint_tol(model: &TransitionModel, d: &[f64]) -> f64 {
    let cs = model.lipschitz_constants().0.min(0.999);
    1e-13 * steady_scale(model, d, cs).max(1.0)
}

/// Slack for a difference of two steady states: each lies within
/// `tol / (1 - C_s)` of the exact fixpoint, plus rounding.
fn steady_slack(model: &TransitionModel, d: &[f64], cs: f64) -> f64 {
    let tol = fixpoint_tol(model, d);
    1e-12 + 2.0 * tol / (1.0 - cs) + 16.0 * f64::EPSILON * steady_scale(model, d, cs)
}

/// `(||O^t(p0) - O^t(p1)||_1, C_s^t ||p0 - p1||_1)` for `t = 1..=steps`.
pub fn contraction_trajectory(
    model: &TransitionModel,
    d: &[f64],
    p0: &[f64],
    p1: &[f64],
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let cs = contractive(model)?;
    model.step(p0, d)?;
    model.step(p1, d)?;
    let start = l1(p0, p1);
    let (mut x, mut y) = (p0.to_vec(), p1.to_vec());
    let (mut nx, mut ny) = (x.clone(), y.clone());
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        model.apply(&x, d, &mut nx);
        model.apply(&y, d, &mut ny);
        std::mem::swap(&mut x, &mut nx);
        std::mem::swap(&mut y, &mut ny);
        out.push((l1(&x, &y), cs.powi(t as i32) * start));
    }
    Ok(out)
}

/// Iterates from two starts approach each other at rate `C_s`. Reports the
/// step with the smallest margin.
pub fn verify_fixpoint(
    model: &TransitionModel,
    d: &[f64],
    p0: &[f64],
    p1: &[f64],
    steps: usize,
) -> Result<BoundCheckReport> {
    let cs = contractive(model)?;
    let traj = contraction_trajectory(model, d, p0, p1, steps)?;
    let scale = l1_norm(p0).max(l1_norm(p1)) + steady_scale(model, d, cs);
    let tol = 1e-12 + 16.0 * f64::EPSILON * scale / (1.0 - cs);
    let worst = traj
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .1 - a.1 .0).total_cmp(&(b.1 .1 - b.1 .0)))
        .map(|(t, &(m, b))| (t + 1, m, b));
    Ok(match worst {
        Some((t, m, b)) => BoundCheckReport::new(format!("iterate gap at step {t}"), b, m, tol),
        None => BoundCheckReport::new("iterate gap", 0.0, 0.0, tol),
    })
}

/// `||P(d_a) - P(d_b)||_1 <= C_d / (1 - C_s) * ||d_a - d_b||_1^alpha`.
pub fn verify_hoelder(model: &TransitionModel, da: &[f64], db: &[f64]) -> Result<BoundCheckReport> {
    let cs = contractive(model)?;
    let (_, cd) = model.lipschitz_constants();
    let sa = model.steady_state(da, fixpoint_tol(model, da))?;
    let sb = model.steady_state(db, fixpoint_tol(model, db))?;
    let bound = cd / (1.0 - cs) * l1(da, db).powf(model.alpha());
    let tol = steady_slack(model, da, cs).max(steady_slack(model, db, cs)) * 2.0;
    Ok(BoundCheckReport::new("steady-state gap", bound, l1(&sa, &sb), tol))
}

/// Mean l1 gap between the steady states of sampled demands and of their
/// mean, against `C_d / (1 - C_s) * (sum_v std(D_v))^alpha`. Means and
/// standard deviations are those of the sample itself, so the inequality
/// holds exactly for the empirical law.
pub fn verify_stochastic_mean(
    model: &TransitionModel,
    demand_model: &DemandModel,
    samples: usize,
    seed: u64,
) -> Result<BoundCheckReport> {
    let cs = contractive(model)?;
    let (_, cd) = model.lipschitz_constants();
    if samples == 0 {
        return Err(Error::EmptySample);
    }
    let n = model.len();
    let draws = sample_demands(demand_model, n, samples, seed)?;
    let mut mean = vec![0.0; n];
    for t in 0..samples {
        for (m, x) in mean.iter_mut().zip(draws.row(t)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= samples as f64;
    }
    let std_sum: f64 = (0..n)
        .map(|v| {
            let var = (0..samples).map(|t| (draws.get(t, v) - mean[v]).powi(2)).sum::<f64>() / samples as f64;
            var.sqrt()
        })
        .sum();
    let at_mean = model.steady_state(&mean, fixpoint_tol(model, &mean))?;
    let mut total = 0.0;
    let mut slack: f64 = steady_slack(model, &mean, cs);
    for t in 0..samples {
        let d = draws.row(t);
        let s = model.steady_state(d, fixpoint_tol(model, d))?;
        total += l1(&s, &at_mean);
        slack = slack.max(steady_slack(model, d, cs));
    }
    let bound = cd / (1.0 - cs) * std_sum.powf(model.alpha());
    Ok(BoundCheckReport::new(
        "mean steady-state gap",
        bound,
        total / samples as f64,
        2.0 * slack,
    ))
}

/// Per-node result of a decay check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecay {
    pub node: String,
    pub hops: Hops,
    pub check: BoundCheckReport,
    /// `measured < bound` without slack.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub anomaly_node: String,
    pub magnitude: f64,
    /// `C_s * (deg G + 1)`.
    pub rate: f64,
    pub nodes: Vec<NodeDecay>,
    /// Median effect per finite hop distance, by increasing distance.
    pub median_by_distance: Vec<(u32, f64)>,
    pub median_monotone: bool,
    pub pass: bool,
}

/// `|P(d)_w - P(d + a e_v)_w| < C_d a^alpha r^{d(v,w)} / (1 - r)` with
/// `r = C_s (deg G + 1)` at every node; nodes outside the component of `v`
/// must be unaffected. Refuses models with `r >= 1`.
pub fn verify_decay(
    model: &TransitionModel,
    g: &NetworkGraph,
    demand: &[f64],
    v: NodeId,
    a: f64,
) -> Result<DecayReport> {
    let cs = contractive(model)?;
    let rate = model.decay_rate();
    if rate >= 1.0 {
        return Err(Error::HypothesisViolated(rate));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("magnitude {a} must be >= 0")));
    }
    if g.node_count() != model.len() {
        return Err(Error::Dimension {
            what: "graph nodes",
            expected: model.len(),
            got: g.node_count(),
        });
    }
    let hops = g.hops_from(v)?;
    let (_, cd) = model.lipschitz_constants();
    let mut shifted = demand.to_vec();
    shifted[v.0] += a;
    let before = model.steady_state(demand, fixpoint_tol(model, demand))?;
    let after = model.steady_state(&shifted, fixpoint_tol(model, &shifted))?;
    let slack = steady_slack(model, demand, cs).max(steady_slack(model, &shifted, cs));
    let head = cd * a.powf(model.alpha()) / (1.0 - rate);

    let nodes: Vec<NodeDecay> = (0..model.len())
        .map(|w| {
            let delta = (after[w] - before[w]).abs();
            let (check, strict) = match hops[w] {
                Hops::Finite(h) => {
                    let bound = head * rate.powi(h as i32);
                    (BoundCheckReport::new("node effect", bound, delta, slack), delta < bound)
                }
                Hops::Infinite => (
                    BoundCheckReport::new("unreachable node effect", 0.0, delta, 0.0),
                    delta == 0.0,
                ),
            };
            NodeDecay {
                node: g.id(NodeId(w)).to_owned(),
                hops: hops[w],
                check,
                strict,
            }
        })
        .collect();

    let max_h = nodes.iter().filter_map(|n| n.hops.finite()).max().unwrap_or(0);
    let median_by_distance: Vec<(u32, f64)> = (0..=max_h)
        .filter_map(|h| {
            let ds: Vec<f64> = nodes
                .iter()
                .filter(|n| n.hops == Hops::Finite(h))
                .map(|n| n.check.measured)
                .collect();
            (!ds.is_empty()).then(|| (h, median(&ds)))
        })
        .collect();
    let median_monotone = median_by_distance.windows(2).all(|w| w[1].1 <= w[0].1 + slack);
    let pass = median_monotone && nodes.iter().all(|n| n.check.pass);
    Ok(DecayReport {
        anomaly_node: g.id(v).to_owned(),
        magnitude: a,
        rate,
        nodes,
        median_by_distance,
        median_monotone,
        pass,
    })
}

/// The layered graph `v - u_1..u_n - w` with `O_v = d_v`, `O_{u_i} = c p_v`
/// and `O_w = c * sum_i p_{u_i}`. Node order: `v`, `u_1..u_n`, `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredChain {
    pub n: usize,
    pub c: f64,
}

impl Transition for LayeredChain {
    fn len(&self) -> usize {
        self.n + 2
    }

    fn apply(&self, p: &[f64], d: &[f64], out: &mut [f64]) {
        out[0] = d[0];
        for o in &mut out[1..=self.n] {
            *o = self.c * p[0];
        }
        out[self.n + 1] = self.c * p[1..=self.n].iter().sum::<f64>();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityReport {
    pub n: usize,
    pub c_s: f64,
    pub delta_u: f64,
    pub delta_w: f64,
    /// `|delta_w| / |delta_u|`.
    pub ratio: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Effect of a unit anomaly at `v` on `w` relative to `u_1`. Equals `n c`,
/// which exceeds 1 once `c > 1/n` although every node contracts at rate `c`.
pub fn necessity_example(n: usize, c_s: f64) -> Result<NecessityReport> {
    if n == 0 || !(c_s > 0.0 && c_s.is_finite()) {
        return Err(Error::InvalidParameter("need n >= 1 and c_s > 0".into()));
    }
    let chain = LayeredChain { n, c: c_s };
    let steady = |dv: f64| {
        let mut d = vec![0.0; chain.len()];
        d[0] = dv;
        let mut p = vec![0.0; chain.len()];
        let mut next = p.clone();
        // The map is nilpotent in its coupling: three steps reach the fixpoint.
        for _ in 0..3 {
            chain.apply(&p, &d, &mut next);
            std::mem::swap(&mut p, &mut next);
        }
        p
    };
    let (p0, p1) = (steady(0.0), steady(1.0));
    let delta_u = (p1[1] - p0[1]).abs();
    let delta_w = (p1[n + 1] - p0[n + 1]).abs();
    let ratio = delta_w / delta_u;
    let expected = n as f64 * c_s;
    Ok(NecessityReport {
        n,
        c_s,
        delta_u,
        delta_w,
        ratio,
        expected,
        pass: (ratio - expected).abs() <= 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Fixpoint,
    Hoelder,
    Mean,
    Decay,
    Necessity,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::Fixpoint,
        Suite::Hoelder,
        Suite::Mean,
        Suite::Decay,
        Suite::Necessity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Fixpoint => "fixpoint",
            Suite::Hoelder => "hoelder",
            Suite::Mean => "mean",
            Suite::Decay => "decay",
            Suite::Necessity => "necessity",
            Suite::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// Sweep sizes for the randomized suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub instances: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub fixpoint_steps: usize,
    pub hoelder_pairs: usize,
    pub mean_samples: usize,
    pub necessity_max_n: usize,
    pub necessity_c: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            min_nodes: 10,
            max_nodes: 50,
            fixpoint_steps: 60,
            hoelder_pairs: 10,
            mean_samples: 200,
            necessity_max_n: 8,
            necessity_c: 0.3,
        }
    }
}

/// A failed check with its instance index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub instance: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: usize,
    pub failures: Vec<Failure>,
    /// Smallest `margin + tolerance` seen.
    pub worst_slack: f64,
    /// Largest `measured / bound` seen among positive bounds.
    pub max_ratio: f64,
    pub pass: bool,
}

impl SuiteReport {
    fn collect(suite: Suite, per_instance: Vec<Result<Vec<(BoundCheckReport, bool)>>>) -> Self {
        let mut checks = 0;
        let mut failures = Vec::new();
        let mut worst_slack = f64::INFINITY;
        let mut max_ratio: f64 = 0.0;
        for (i, r) in per_instance.into_iter().enumerate() {
            match r {
                Ok(items) => {
                    for (c, ok) in items {
                        checks += 1;
                        worst_slack = worst_slack.min(c.margin + c.tolerance);
                        if c.bound > 0.0 {
                            max_ratio = max_ratio.max(c.measured / c.bound);
                        }
                        if !ok {
                            failures.push(Failure {
                                instance: i,
                                detail: format!(
                                    "{}: measured {:e} vs bound {:e} (tolerance {:e})",
                                    c.quantity, c.measured, c.bound, c.tolerance
                                ),
                            });
                        }
                    }
                }
                Err(e) => failures.push(Failure {
                    instance: i,
                    detail: e.to_string(),
                }),
            }
        }
        Self {
            suite: suite.name().to_owned(),
            checks,
            pass: failures.is_empty(),
            failures,
            worst_slack,
            max_ratio,
        }
    }
}

/// A random geometric graph with a random model. Instance `i` of a sweep
/// uses `derive_tagged(seed, "instance", i)`.
pub fn random_instance(
    cfg: &SweepConfig,
    mode: DynamicsMode,
    seed: u64,
    i: usize,
) -> Result<(NetworkGraph, TransitionModel, Vec<f64>, u64)> {
    let s = seed::derive_tagged(seed, "instance", i as u64);
    let mut rng = seed::rng(s);
    let n = rng.random_range(cfg.min_nodes.max(1)..=cfg.max_nodes.max(cfg.min_nodes.max(1)));
    let radius = rng.random_range(0.15..0.4);
    let g = random_geometric_graph(n, radius, 1, seed::derive(s, 1))?;
    let alpha = [1.0, 0.75, 0.5][rng.random_range(0..3)];
    let weighting = if rng.random_bool(0.5) {
        Weighting::Metropolis
    } else {
        Weighting::Uniform
    };
    let dcfg = DynamicsConfig {
        mode,
        k: rng.random_range(0.5..2.0),
        alpha,
        weighting,
        ..DynamicsConfig::default()
    };
    let model = TransitionModel::from_config(&g, &dcfg)?;
    let demand = (0..g.node_count()).map(|_| rng.random_range(0.0..2.0)).collect();
    Ok((g, model, demand, seed::derive(s, 2)))
}

fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Run one suite (or all of them) over seeded random instances.
pub fn run_suite(suite: Suite, cfg: &SweepConfig, seed: u64, jobs: Jobs) -> Result<Vec<SuiteReport>> {
    if suite == Suite::All {
        return Suite::EACH
            .into_iter()
            .map(|s| run_suite(s, cfg, seed, jobs).map(|mut r| r.remove(0)))
            .collect();
    }
    let with_flag = |r: BoundCheckReport| {
        let ok = r.pass;
        (r, ok)
    };
    let per_instance: Vec<Result<Vec<(BoundCheckReport, bool)>>> = match suite {
        Suite::Fixpoint => exec::map_range(cfg.instances, jobs, |i| {
            let (_, model, d, s) = random_instance(cfg, DynamicsMode::Realistic, seed, i)?;
            let mut rng = seed::rng(s);
            let p0 = uniform_vec(&mut rng, model.len(), 0.0, 100.0);
            let p1 = uniform_vec(&mut rng, model.len(), 0.0, 100.0);
            Ok(vec![with_flag(verify_fixpoint(
                &model,
                &d,
                &p0,
                &p1,
                cfg.fixpoint_steps,
            )?)])
        }),
        Suite::Hoelder => exec::map_range(cfg.instances, jobs, |i| {
            let (_, model, d, s) = random_instance(cfg, DynamicsMode::Realistic, seed, i)?;
            let mut rng = seed::rng(s);
            (0..cfg.hoelder_pairs)
                .map(|p| {
                    // Alternate far pairs with nearby ones, where alpha < 1 bites.
                    let scale = if p % 2 == 0 { 2.0 } else { 1e-3 };
                    let da = if p % 2 == 0 {
                        uniform_vec(&mut rng, model.len(), 0.0, 2.0)
                    } else {
                        d.clone()
                    };
                    let db: Vec<f64> = da
                        .iter()
                        .map(|x| (x + rng.random_range(-scale..scale)).max(0.0))
                        .collect();
                    verify_hoelder(&model, &da, &db).map(with_flag)
                })
                .collect()
        }),
        Suite::Mean => exec::map_range(cfg.instances, jobs, |i| {
            let (_, model, _, s) = random_instance(cfg, DynamicsMode::Realistic, seed, i)?;
            let dm = DemandModel::from_config(&DemandConfig::default(), model.len(), seed::derive(s, 0))?;
            Ok(vec![with_flag(verify_stochastic_mean(
                &model,
                &dm,
                cfg.mean_samples,
                seed::derive(s, 1),
            )?)])
        }),
        Suite::Decay => exec::map_range(cfg.instances, jobs, |i| {
            let (g, model, d, s) = random_instance(cfg, DynamicsMode::Theorem, seed, i)?;
            let mut rng = seed::rng(s);
            let v = NodeId(rng.random_range(0..g.node_count()));
            let a = [0.1, 1.0, 10.0][i % 3];
            let r = verify_decay(&model, &g, &d, v, a)?;
            let mut items: Vec<(BoundCheckReport, bool)> = r
                .nodes
                .iter()
                .map(|n| (n.check.clone(), n.check.pass && n.strict))
                .collect();
            let (last, first) = (
                r.median_by_distance.last().map_or(0.0, |x| x.1),
                r.median_by_distance.first().map_or(0.0, |x| x.1),
            );
            items.push((
                BoundCheckReport::new("median effect by distance", first, last, 0.0),
                r.median_monotone,
            ));
            Ok(items)
        }),
        Suite::Necessity => (1..=cfg.necessity_max_n)
            .map(|n| {
                let r = necessity_example(n, cfg.necessity_c)?;
                let check = BoundCheckReport::new(format!("ratio n = {n}"), r.expected, r.ratio, 1e-12);
                Ok(vec![(check, r.pass)])
            })
            .collect(),
        Suite::All => unreachable!(),
    };
    Ok(vec![SuiteReport::collect(suite, per_instance)])
}
