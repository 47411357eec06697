//! Type-I (added demand) and type-II (sensor fault) anomalies, and the
//! window/onset scenario sweep.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::NetworkGraph;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyKind {
    /// Additional demand at a node (leak).
    TypeI,
    /// Fault of a single sensor.
    TypeII,
}

/// Sensor fault profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultProfile {
    /// Readings replaced by `N(0, sigma0)`.
    Broken,
    /// Constant bias `+a`.
    Offset,
    /// Frozen at the onset value.
    Stuck,
    /// Linear bias growing to `+a` over the series length.
    IncipientDrift,
}

impl FaultProfile {
    pub const ALL: [FaultProfile; 4] = [
        FaultProfile::Broken,
        FaultProfile::Offset,
        FaultProfile::Stuck,
        FaultProfile::IncipientDrift,
    ];
}

/// One injected anomaly. `onset` is relative to the start of its window,
/// which is also the start of the simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScenario {
    #[serde(default)]
    pub id: usize,
    pub kind: AnomalyKind,
    pub node: String,
    pub onset: usize,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<FaultProfile>,
    #[serde(default)]
    pub ramp: usize,
    #[serde(default)]
    pub window: usize,
    #[serde(default)]
    pub window_start: usize,
    #[serde(default)]
    pub window_length: usize,
}

/// Additional demand over time: zero except the scenario's column, which
/// ramps linearly from the onset to `a` over `ramp` steps and stays there.
pub fn anomaly_demand_series(s: &AnomalyScenario, g: &NetworkGraph, steps: usize) -> Result<Matrix> {
    if s.kind != AnomalyKind::TypeI {
        return Err(Error::KindMismatch { expected: "TypeI" });
    }
    let node = g.node(&s.node)?;
    let mut m = Matrix::zeros(steps, g.node_count());
    if s.magnitude == 0.0 {
        return Ok(m);
    }
    for t in s.onset..steps {
        let k = t - s.onset;
        let v = if s.ramp == 0 {
            s.magnitude
        } else {
            s.magnitude * k.min(s.ramp) as f64 / s.ramp as f64
        };
        m.set(t, node.0, v);
    }
    Ok(m)
}

/// Transform the faulty sensor's column from the onset on. Other columns are
/// copied unchanged. `sensors` are the column ids of `measurements`.
pub fn apply_sensor_fault(
    measurements: &Matrix,
    sensors: &[String],
    s: &AnomalyScenario,
    sigma0: f64,
    seed: u64,
) -> Result<Matrix> {
    if s.kind != AnomalyKind::TypeII {
        return Err(Error::KindMismatch { expected: "TypeII" });
    }
    let col = sensors
        .iter()
        .position(|id| *id == s.node)
        .ok_or_else(|| Error::NotASensor(s.node.clone()))?;
    let profile = s
        .profile
        .ok_or_else(|| Error::InvalidParameter("TypeII scenario needs a fault profile".into()))?;
    let rows = measurements.rows();
    let mut out = measurements.clone();
    if s.onset >= rows {
        return Ok(out);
    }
    let mut rng = seed::rng(seed);
    let frozen = measurements.get(s.onset, col);
    for t in s.onset..rows {
        let x = measurements.get(t, col);
        let y = match profile {
            FaultProfile::Broken => {
                let z: f64 = rng.sample(StandardNormal);
                sigma0 * z
            }
            FaultProfile::Offset => x + s.magnitude,
            FaultProfile::Stuck => frozen,
            FaultProfile::IncipientDrift => x + s.magnitude * (t - s.onset) as f64 / rows as f64,
        };
        out.set(t, col, y);
    }
    Ok(out)
}

/// How scenario target nodes are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    /// Every candidate node (all nodes for type I, all sensors for type II).
    All,
    /// The listed node ids.
    List(Vec<String>),
    /// One uniformly drawn candidate per onset draw.
    SamplePerOnset,
}

/// `scenarios` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBatch {
    pub windows: usize,
    pub window_length: usize,
    pub window_offset: usize,
    pub onsets_per_window: usize,
    pub kinds: Vec<AnomalyKind>,
    /// Magnitude labels (see `magnitude_table`) or numbers as strings.
    pub magnitudes: Vec<String>,
    /// Multiples of the mean node demand per label.
    pub magnitude_table: BTreeMap<String, f64>,
    /// Type-II profiles to sweep.
    pub profiles: Vec<FaultProfile>,
    /// Type-II magnitude in units of the measurement noise std.
    pub fault_magnitude: f64,
    pub ramp: usize,
    pub targets: Targets,
}

impl Default for ScenarioBatch {
    fn default() -> Self {
        Self {
            windows: 23,
            window_length: 2880,
            window_offset: 1440,
            onsets_per_window: 10,
            kinds: vec![AnomalyKind::TypeI],
            magnitudes: vec!["medium".into()],
            magnitude_table: default_magnitude_table(),
            profiles: vec![FaultProfile::Broken, FaultProfile::Offset],
            fault_magnitude: 10.0,
            ramp: 0,
            targets: Targets::SamplePerOnset,
        }
    }
}

pub fn default_magnitude_table() -> BTreeMap<String, f64> {
    BTreeMap::from([("small".to_owned(), 0.5), ("medium".to_owned(), 2.0)])
}

impl ScenarioBatch {
    /// Resolve a magnitude label into a multiple of the mean demand.
    pub fn resolve_magnitude(&self, label: &str) -> Result<f64> {
        if let Some(v) = self.magnitude_table.get(label) {
            return Ok(*v);
        }
        label
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::Config(format!("scenarios.magnitudes: unknown magnitude `{label}`")))
    }

    /// Onset range `[lo, hi]`: the middle 80% of the window, also leaving
    /// `half_window` samples on each side.
    pub fn onset_range(&self, half_window: usize) -> Result<(usize, usize)> {
        let len = self.window_length;
        let lo = (len / 10).max(half_window);
        let hi = (len - len / 10).min(len.saturating_sub(half_window));
        if half_window == 0 || hi <= lo {
            return Err(Error::WindowTooShort(format!(
                "window of {len} samples cannot hold half-window {half_window} on both sides of the onset"
            )));
        }
        Ok((lo, hi))
    }
}

/// Expand a batch into concrete scenarios.
///
/// The product is window x onset draw x magnitude x target (x profile for
/// type II). Type-I magnitudes are `multiple * mean_demand`; type-II
/// magnitudes are `fault_magnitude * sigma1`.
pub fn generate_scenarios(
    g: &NetworkGraph,
    batch: &ScenarioBatch,
    half_window: usize,
    mean_demand: f64,
    sigma1: f64,
    seed: u64,
) -> Result<Vec<AnomalyScenario>> {
    let (lo, hi) = batch.onset_range(half_window)?;
    let magnitudes: Vec<f64> = batch
        .magnitudes
        .iter()
        .map(|m| batch.resolve_magnitude(m))
        .collect::<Result<_>>()?;
    let all_nodes: Vec<String> = g.ids().to_vec();
    let sensors = g.sensor_ids();
    let mut out = Vec::new();
    let mut kinds = batch.kinds.clone();
    kinds.sort();
    kinds.dedup();
    for window in 0..batch.windows {
        let mut rng = seed::rng(seed::derive_tagged(seed, "window", window as u64));
        let window_start = window * batch.window_offset;
        for _ in 0..batch.onsets_per_window {
            let onset = rng.random_range(lo..hi);
            for &kind in &kinds {
                let candidates = match kind {
                    AnomalyKind::TypeI => &all_nodes,
                    AnomalyKind::TypeII => &sensors,
                };
                if candidates.is_empty() {
                    return Err(Error::NoSensors);
                }
                let targets: Vec<String> = match &batch.targets {
                    Targets::All => candidates.clone(),
                    Targets::List(ids) => {
                        for id in ids {
                            g.node(id)?;
                            if kind == AnomalyKind::TypeII && !sensors.contains(id) {
                                return Err(Error::NotASensor(id.clone()));
                            }
                        }
                        ids.clone()
                    }
                    Targets::SamplePerOnset => {
                        vec![candidates[rng.random_range(0..candidates.len())].clone()]
                    }
                };
                match kind {
                    AnomalyKind::TypeI => {
                        for &m in &magnitudes {
                            for node in &targets {
                                out.push(AnomalyScenario {
                                    id: 0,
                                    kind,
                                    node: node.clone(),
                                    onset,
                                    magnitude: m * mean_demand,
                                    profile: None,
                                    ramp: batch.ramp,
                                    window,
                                    window_start,
                                    window_length: batch.window_length,
                                });
                            }
                        }
                    }
                    AnomalyKind::TypeII => {
                        for &profile in &batch.profiles {
                            for node in &targets {
                                out.push(AnomalyScenario {
                                    id: 0,
                                    kind,
                                    node: node.clone(),
                                    onset,
                                    magnitude: batch.fault_magnitude * sigma1,
                                    profile: Some(profile),
                                    ramp: 0,
                                    window,
                                    window_start,
                                    window_length: batch.window_length,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    for (i, s) in out.iter_mut().enumerate() {
        s.id = i;
    }
    Ok(out)
}
