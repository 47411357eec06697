//! The generative system: a contractive transition map over the graph,
//! demand generation driven by a shared hidden cause, steady states and the
//! sensor measurement channel.
//!
//! The transition map has the concrete form
//!
//! ```text
//! O_v(p, d) = c * sum_{w in N[v]} W_vw * p_w + b_v - k * d_v^alpha
//! ```
//!
//! with `W` row-stochastic over the closed neighbourhood `N[v]`. It is
//! Lipschitz in `p` with `C_s = c * max_w sum_v W_vw` (the l1 operator norm)
//! and alpha-Hölder in `d` with `C_d = k * n^(1 - alpha)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::NetworkGraph;
use crate::seed;

/// A synchronous update rule on node vectors.
pub trait Transition {
    /// Number of nodes.
    fn len(&self) -> usize;

    /// Write `O(p, d)` into `out`.
    fn apply(&self, p: &[f64], d: &[f64], out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Coupling weights over the closed neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `W_vw = 1 / (deg v + 1)`. Row-stochastic only.
    Uniform,
    /// `W_vw = 1 / (1 + max(deg v, deg w))`, remainder on the diagonal.
    /// Symmetric and doubly stochastic, so `C_s = c`.
    #[default]
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsMode {
    /// `C_s = 0.9 / (deg G + 1)`: the exponential-decay hypothesis holds.
    Theorem,
    /// `C_s = 0.8`: stronger coupling.
    #[default]
    Realistic,
}

/// `dynamics` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub mode: DynamicsMode,
    /// Explicit coupling factor; overrides the mode default.
    pub c: Option<f64>,
    pub k: f64,
    pub alpha: f64,
    pub base_level: f64,
    pub weighting: Weighting,
    pub sigma1: f64,
    pub sigma0: f64,
    pub burn_in: usize,
    /// Std of optional additive Gaussian process noise (0 = deterministic).
    pub process_noise: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            mode: DynamicsMode::Realistic,
            c: None,
            k: 1.0,
            alpha: 1.0,
            base_level: 50.0,
            weighting: Weighting::Metropolis,
            sigma1: 0.05,
            sigma0: 1.0,
            burn_in: 200,
            process_noise: 0.0,
        }
    }
}

/// The contractive transition map over one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// Per node: `(neighbour index, weight)` over the closed neighbourhood.
    weights: Vec<Vec<(usize, f64)>>,
    c: f64,
    base: Vec<f64>,
    k: f64,
    alpha: f64,
    max_degree: usize,
    max_column_sum: f64,
    components: Vec<Vec<usize>>,
    process_noise: f64,
}

fn coupling_weights(g: &NetworkGraph, weighting: Weighting) -> Vec<Vec<(usize, f64)>> {
    (0..g.node_count())
        .map(|v| {
            let nbrs = g.neighbors(crate::NodeId(v));
            let dv = nbrs.len();
            let mut row = Vec::with_capacity(dv + 1);
            match weighting {
                Weighting::Uniform => {
                    let w = 1.0 / (dv as f64 + 1.0);
                    row.push((v, w));
                    row.extend(nbrs.iter().map(|&u| (u, w)));
                }
                Weighting::Metropolis => {
                    let mut off = 0.0;
                    let mut rest = Vec::with_capacity(dv);
                    for &u in nbrs {
                        let du = g.degree(crate::NodeId(u));
                        let w = 1.0 / (1.0 + dv.max(du) as f64);
                        off += w;
                        rest.push((u, w));
                    }
                    row.push((v, 1.0 - off));
                    row.extend(rest);
                }
            }
            row.sort_by_key(|&(u, _)| u);
            row
        })
        .collect()
}

impl TransitionModel {
    /// Build a model with explicit constants. `base` holds `b_v` per node.
    pub fn new(g: &NetworkGraph, c: f64, base: Vec<f64>, k: f64, alpha: f64, weighting: Weighting) -> Result<Self> {
        let n = g.node_count();
        if base.len() != n {
            return Err(Error::Dimension {
                what: "base levels",
                expected: n,
                got: base.len(),
            });
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("coupling c = {c} must be >= 0")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("demand gain k = {k} must be > 0")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "demand exponent alpha = {alpha} must lie in (0, 1]"
            )));
        }
        let weights = coupling_weights(g, weighting);
        let mut col = vec![0.0; n];
        for row in &weights {
            for &(u, w) in row {
                col[u] += w;
            }
        }
        let max_column_sum = col.into_iter().fold(0.0, f64::max);
        Ok(Self {
            weights,
            c,
            base,
            k,
            alpha,
            max_degree: g.max_degree(),
            max_column_sum,
            components: g.components(),
            process_noise: 0.0,
        })
    }

    /// Build from a config section. The mode fixes `C_s` (not `c`): the
    /// coupling factor is divided by the maximal column sum of `W`.
    pub fn from_config(g: &NetworkGraph, cfg: &DynamicsConfig) -> Result<Self> {
        let base = vec![cfg.base_level; g.node_count()];
        let mut model = Self::new(g, 0.0, base, cfg.k, cfg.alpha, cfg.weighting)?;
        let target_cs = match cfg.mode {
            DynamicsMode::Theorem => 0.9 / (g.max_degree() as f64 + 1.0),
            DynamicsMode::Realistic => 0.8,
        };
        model.c = match cfg.c {
            Some(c) => c,
            None if model.max_column_sum > 0.0 => target_cs / model.max_column_sum,
            None => target_cs,
        };
        if !(model.c.is_finite() && model.c >= 0.0) {
            return Err(Error::InvalidParameter(format!("coupling c = {}", model.c)));
        }
        if !(cfg.process_noise.is_finite() && cfg.process_noise >= 0.0) {
            return Err(Error::InvalidParameter("process_noise must be >= 0".into()));
        }
        model.process_noise = cfg.process_noise;
        Ok(model)
    }

    pub fn with_process_noise(mut self, std: f64) -> Self {
        self.process_noise = std;
        self
    }

    pub fn coupling(&self) -> f64 {
        self.c
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn gain(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn weights(&self) -> &[Vec<(usize, f64)>] {
        &self.weights
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Certified `(C_s, C_d)`.
    pub fn lipschitz_constants(&self) -> (f64, f64) {
        let n = self.weights.len().max(1) as f64;
        (self.c * self.max_column_sum, self.k * n.powf(1.0 - self.alpha))
    }

    /// `C_s * (deg G + 1)`; the decay hypothesis requires this below 1.
    pub fn decay_rate(&self) -> f64 {
        self.lipschitz_constants().0 * (self.max_degree as f64 + 1.0)
    }

    fn check_dims(&self, p: &[f64], d: &[f64]) -> Result<()> {
        let n = self.weights.len();
        if p.len() != n {
            return Err(Error::Dimension {
                what: "observables",
                expected: n,
                got: p.len(),
            });
        }
        if d.len() != n {
            return Err(Error::Dimension {
                what: "demand",
                expected: n,
                got: d.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn node_update(&self, v: usize, p: &[f64], d: f64) -> f64 {
        let coupled: f64 = self.weights[v].iter().map(|&(u, w)| w * p[u]).sum();
        self.c * coupled + self.base[v] - self.k * d.max(0.0).powf(self.alpha)
    }

    /// One synchronous update of every node.
    pub fn step(&self, p: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(p, d)?;
        let mut out = vec![0.0; p.len()];
        self.apply(p, d, &mut out);
        Ok(out)
    }

    /// Fixpoint of `O(., d)` with `||O(p, d) - p||_1 <= tol`, iterated from
    /// the base levels.
    pub fn steady_state(&self, d: &[f64], tol: f64) -> Result<Vec<f64>> {
        self.steady_state_from(&self.base.clone(), d, tol)
    }

    /// Fixpoint iteration from `p0`. Components are iterated independently so
    /// a component's result depends only on its own demands.
    pub fn steady_state_from(&self, p0: &[f64], d: &[f64], tol: f64) -> Result<Vec<f64>> {
        self.check_dims(p0, d)?;
        let (cs, _) = self.lipschitz_constants();
        if cs >= 1.0 {
            return Err(Error::NotContractive(cs));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {tol} must be > 0")));
        }
        let n = self.weights.len();
        let mut p = p0.to_vec();
        let mut next = p.clone();
        for comp in &self.components {
            let comp_tol = tol * comp.len() as f64 / n as f64;
            let mut iterations = 0usize;
            // Certificate: residual_k <= C_s^k residual_0; allow generous slack
            // for the floating-point floor.
            let mut limit = usize::MAX;
            loop {
                let mut residual = 0.0;
                for &v in comp {
                    next[v] = self.node_update(v, &p, d[v]);
                    residual += (next[v] - p[v]).abs();
                }
                for &v in comp {
                    p[v] = next[v];
                }
                if residual <= comp_tol {
                    break;
                }
                if iterations == 0 && cs > 0.0 {
                    let needed = ((comp_tol / residual).ln() / cs.ln()).ceil().max(0.0);
                    limit = (needed as usize).saturating_mul(4).saturating_add(1000);
                }
                iterations += 1;
                if iterations > limit {
                    return Err(Error::NotConverged { iterations, residual });
                }
            }
        }
        Ok(p)
    }
}

impl Transition for TransitionModel {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn apply(&self, p: &[f64], d: &[f64], out: &mut [f64]) {
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.node_update(v, p, d[v]);
        }
    }
}

/// Time x column series with column ids and a time origin. Used for both
/// node observables and sensor measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub values: Matrix,
    /// Time index of the first row.
    pub t0: usize,
}

impl TimeSeries {
    pub fn column_index(&self, id: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == id)
    }
}

pub type ObservableSeries = TimeSeries;

/// Demand generator: `D_{t,v} = max(0, mu_v * diurnal(t) * (1 + H_t) + noise_v * z)`
/// with a shared AR(1) hidden cause `H_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub base: Vec<f64>,
    /// Periodic multiplier; `diurnal(t) = profile[t % len]`.
    pub diurnal: Vec<f64>,
    /// AR(1) persistence rho in `[0, 1)`.
    pub persistence: f64,
    /// AR(1) innovation std.
    pub volatility: f64,
    /// Per-node additive noise std.
    pub noise: Vec<f64>,
}

/// `demand` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    /// Mean node demand.
    pub mean: f64,
    /// Base demands are drawn uniformly in `mean * [1 - spread, 1 + spread]`.
    pub spread: f64,
    /// Samples per day.
    pub period: usize,
    /// Relative amplitude of the daily pattern.
    pub amplitude: f64,
    pub persistence: f64,
    pub volatility: f64,
    /// Additive noise std relative to the node's base demand.
    pub noise: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            mean: 1.0,
            spread: 0.5,
            period: 144,
            amplitude: 0.3,
            persistence: 0.99,
            volatility: 0.005,
            noise: 0.05,
        }
    }
}

/// Mean-one daily profile with a morning and an evening peak.
pub fn diurnal_profile(period: usize, amplitude: f64) -> Vec<f64> {
    let period = period.max(1);
    (0..period)
        .map(|t| {
            let x = std::f64::consts::TAU * t as f64 / period as f64;
            1.0 + amplitude * (-(x.cos()) + 0.5 * (2.0 * x).sin()) / 1.5
        })
        .collect()
}

impl DemandModel {
    /// Constant demand `base` with no noise or hidden cause.
    pub fn constant(base: Vec<f64>) -> Self {
        let n = base.len();
        Self {
            base,
            diurnal: vec![1.0],
            persistence: 0.0,
            volatility: 0.0,
            noise: vec![0.0; n],
        }
    }

    pub fn from_config(cfg: &DemandConfig, nodes: usize, seed: u64) -> Result<Self> {
        if !(cfg.mean >= 0.0 && (0.0..=1.0).contains(&cfg.spread)) {
            return Err(Error::Config("demand.mean must be >= 0 and spread in [0, 1]".into()));
        }
        let mut rng = seed::rng(seed);
        let base: Vec<f64> = (0..nodes)
            .map(|_| cfg.mean * (1.0 + cfg.spread * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let noise = base.iter().map(|b| b * cfg.noise).collect();
        let model = Self {
            base,
            diurnal: diurnal_profile(cfg.period, cfg.amplitude),
            persistence: cfg.persistence,
            volatility: cfg.volatility,
            noise,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::InvalidParameter("persistence must lie in [0, 1)".into()));
        }
        if !(self.volatility >= 0.0) || self.noise.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("volatility and noise must be >= 0".into()));
        }
        if self.base.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("base demands must be >= 0".into()));
        }
        if self.diurnal.is_empty() {
            return Err(Error::InvalidParameter("diurnal profile is empty".into()));
        }
        if self.noise.len() != self.base.len() {
            return Err(Error::Dimension {
                what: "demand noise",
                expected: self.base.len(),
                got: self.noise.len(),
            });
        }
        Ok(())
    }

    pub fn diurnal_mean(&self) -> f64 {
        self.diurnal.iter().sum::<f64>() / self.diurnal.len() as f64
    }

    pub fn mean_demand(&self) -> f64 {
        if self.base.is_empty() {
            0.0
        } else {
            self.base.iter().sum::<f64>() / self.base.len() as f64 * self.diurnal_mean()
        }
    }
}

/// Sample a `steps x nodes` demand matrix.
///
/// Stream layout per step: one innovation for `H_t`, then one normal per
/// node, drawn whether or not the corresponding scale is zero. `H_0` is drawn
/// from the stationary law.
pub fn sample_demands(model: &DemandModel, nodes: usize, steps: usize, seed: u64) -> Result<Matrix> {
    model.validate()?;
    if model.base.len() != nodes {
        return Err(Error::Dimension {
            what: "demand base",
            expected: nodes,
            got: model.base.len(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let rho = model.persistence;
    let stationary_std = model.volatility / (1.0 - rho * rho).sqrt();
    let mut hidden = 0.0;
    let mut out = Matrix::zeros(steps, nodes);
    for t in 0..steps {
        let eps: f64 = rng.sample(StandardNormal);
        hidden = if t == 0 {
            stationary_std * eps
        } else {
            rho * hidden + model.volatility * eps
        };
        let pattern = model.diurnal[t % model.diurnal.len()] * (1.0 + hidden);
        let row = out.row_mut(t);
        for v in 0..nodes {
            let z: f64 = rng.sample(StandardNormal);
            row[v] = (model.base[v] * pattern + model.noise[v] * z).max(0.0);
        }
    }
    Ok(out)
}

/// Run the transition map over a full demand stream.
///
/// `demands` has `burn_in + anomaly.rows()` rows; the anomaly matrix is
/// added after the burn-in. The state starts at the base levels.
pub fn simulate_with_demands(
    model: &TransitionModel,
    demands: &Matrix,
    anomaly: &Matrix,
    burn_in: usize,
    noise_seed: u64,
) -> Result<Matrix> {
    let n = model.len();
    let steps = anomaly.rows();
    if demands.cols() != n || anomaly.cols() != n {
        return Err(Error::Dimension {
            what: "demand/anomaly columns",
            expected: n,
            got: if demands.cols() != n {
                demands.cols()
            } else {
                anomaly.cols()
            },
        });
    }
    if demands.rows() != burn_in + steps {
        return Err(Error::Dimension {
            what: "demand rows",
            expected: burn_in + steps,
            got: demands.rows(),
        });
    }
    let (cs, _) = model.lipschitz_constants();
    if cs >= 1.0 {
        return Err(Error::NotContractive(cs));
    }
    let mut rng = seed::rng(noise_seed);
    let mut p = model.base.clone();
    let mut next = vec![0.0; n];
    let mut effective = vec![0.0; n];
    let mut out = Matrix::zeros(steps, n);
    for t in 0..burn_in + steps {
        let d = demands.row(t);
        if t >= burn_in {
            let a = anomaly.row(t - burn_in);
            for v in 0..n {
                effective[v] = (d[v] + a[v]).max(0.0);
            }
        } else {
            effective.copy_from_slice(d);
        }
        model.apply(&p, &effective, &mut next);
        if model.process_noise > 0.0 {
            for x in &mut next {
                let z: f64 = rng.sample(StandardNormal);
                *x += model.process_noise * z;
            }
        }
        std::mem::swap(&mut p, &mut next);
        if t >= burn_in {
            out.row_mut(t - burn_in).copy_from_slice(&p);
        }
    }
    Ok(out)
}

/// Sample demands and simulate `steps` retained steps after `burn_in`.
pub fn simulate(
    model: &TransitionModel,
    g: &NetworkGraph,
    demand_model: &DemandModel,
    anomaly_demand: &Matrix,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ObservableSeries> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if anomaly_demand.rows() != steps || anomaly_demand.cols() != model.len() {
        return Err(Error::Dimension {
            what: "anomaly demand shape",
            expected: steps * model.len(),
            got: anomaly_demand.rows() * anomaly_demand.cols(),
        });
    }
    let demands = sample_demands(demand_model, model.len(), burn_in + steps, seed::derive(seed, 0))?;
    let values = simulate_with_demands(model, &demands, anomaly_demand, burn_in, seed::derive(seed, 1))?;
    Ok(TimeSeries {
        columns: g.ids().to_vec(),
        values,
        t0: 0,
    })
}

/// Health of one sensor at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorState {
    #[default]
    Online,
    Broken,
}

/// Time x sensor matrix of sensor states.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultState {
    rows: usize,
    cols: usize,
    states: Vec<SensorState>,
}

impl FaultState {
    pub fn all_online(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            states: vec![SensorState::Online; rows * cols],
        }
    }

    pub fn set(&mut self, t: usize, s: usize, state: SensorState) {
        self.states[t * self.cols + s] = state;
    }

    pub fn get(&self, t: usize, s: usize) -> SensorState {
        self.states[t * self.cols + s]
    }
}

/// Sensor measurements: `N(O, sigma1)` while online, `N(0, sigma0)` when
/// broken. One standard normal is drawn per cell in row-major order.
pub fn measure(
    observables: &ObservableSeries,
    g: &NetworkGraph,
    fault_state: &FaultState,
    sigma1: f64,
    sigma0: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(sigma1 >= 0.0 && sigma0 >= 0.0) {
        return Err(Error::InvalidParameter("sigma values must be >= 0".into()));
    }
    let sensors = g.sensors();
    let rows = observables.values.rows();
    if observables.values.cols() != g.node_count() {
        return Err(Error::Dimension {
            what: "observable columns",
            expected: g.node_count(),
            got: observables.values.cols(),
        });
    }
    if fault_state.rows != rows || fault_state.cols != sensors.len() {
        return Err(Error::Dimension {
            what: "fault state shape",
            expected: rows * sensors.len(),
            got: fault_state.rows * fault_state.cols,
        });
    }
    let mut rng = seed::rng(seed);
    let mut values = Matrix::zeros(rows, sensors.len());
    for t in 0..rows {
        for (j, s) in sensors.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let v = match fault_state.get(t, j) {
                SensorState::Online => observables.values.get(t, s.0) + sigma1 * z,
                SensorState::Broken => sigma0 * z,
            };
            values.set(t, j, v);
        }
    }
    Ok(TimeSeries {
        columns: g.sensor_ids(),
        values,
        t0: observables.t0,
    })
}
