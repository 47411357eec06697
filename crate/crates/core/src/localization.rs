//! Sensor-level anomaly localization from a window around a known onset:
//! a random baseline, the windowed mean difference, per-sensor two-sample
//! KS statistics and model-based drift explanations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::exec::Jobs;
use crate::learners::{
    self, accuracy, fit_family, impurity_importance, linear_importance, permutation_importance, Dataset, Family,
    ImportanceKind, ImportanceVector, LearnerConfig,
};
use crate::matrix::Matrix;
use crate::seed;

/// `2w` rows of sensor measurements: rows `[0, w)` precede the onset, rows
/// `[w, 2w)` start at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementWindow {
    pub sensors: Vec<String>,
    pub values: Matrix,
    pub half: usize,
}

impl MeasurementWindow {
    pub fn new(sensors: Vec<String>, values: Matrix, half: usize) -> Result<Self> {
        if half == 0 || values.rows() < 2 * half {
            return Err(Error::WindowTooShort(format!(
                "{} rows for half-window {half}",
                values.rows()
            )));
        }
        if sensors.len() != values.cols() {
            return Err(Error::Dimension {
                what: "window columns",
                expected: sensors.len(),
                got: values.cols(),
            });
        }
        if sensors.is_empty() {
            return Err(Error::NoSensors);
        }
        let values = values.slice_rows(0, 2 * half);
        Ok(Self { sensors, values, half })
    }

    /// Cut `[onset - w, onset + w)` out of a series; `onset` is in the
    /// series' time coordinates.
    pub fn from_series(series: &TimeSeries, onset: usize, w: usize) -> Result<Self> {
        let rows = series.values.rows();
        let Some(row) = onset.checked_sub(series.t0) else {
            return Err(Error::WindowTooShort(format!(
                "onset {onset} precedes the first sample {}",
                series.t0
            )));
        };
        if w == 0 || row < w || row + w > rows {
            return Err(Error::WindowTooShort(format!(
                "onset {onset} with half-window {w} does not fit in {rows} samples starting at t = {}",
                series.t0
            )));
        }
        Self::new(series.columns.clone(), series.values.slice_rows(row - w, row + w), w)
    }

    pub fn pre(&self, col: usize) -> Vec<f64> {
        (0..self.half).map(|t| self.values.get(t, col)).collect()
    }

    pub fn post(&self, col: usize) -> Vec<f64> {
        (self.half..2 * self.half).map(|t| self.values.get(t, col)).collect()
    }

    /// Labelled samples: pre-onset rows are class 0, the rest class 1.
    pub fn dataset(&self) -> Result<Dataset> {
        let y = (0..2 * self.half).map(|t| u8::from(t >= self.half)).collect();
        Dataset::new(self.values.clone(), y, self.sensors.clone())
    }
}

/// Per-sensor scores with a deterministic ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub method: String,
    pub sensors: Vec<String>,
    pub scores: ImportanceVector,
    /// Sensors by descending score, ties by ascending id.
    pub ranking: Vec<String>,
    pub selected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_accuracy: Option<f64>,
}

impl LocalizationResult {
    pub fn from_scores(
        method: impl Into<String>,
        sensors: &[String],
        scores: ImportanceVector,
        model_accuracy: Option<f64>,
    ) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::NoSensors);
        }
        if scores.len() != sensors.len() {
            return Err(Error::Dimension {
                what: "scores",
                expected: sensors.len(),
                got: scores.len(),
            });
        }
        let ranking = rank(sensors, &scores.scores);
        Ok(Self {
            method: method.into(),
            sensors: sensors.to_vec(),
            selected: ranking[0].clone(),
            ranking,
            scores,
            model_accuracy,
        })
    }
}

fn rank(sensors: &[String], scores: &[f64]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..sensors.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| sensors[a].cmp(&sensors[b]))
    });
    idx.into_iter().map(|i| sensors[i].clone()).collect()
}

/// `|sum(pre) - sum(post)|` per sensor, summed in row order.
pub fn localize_mean(mw: &MeasurementWindow) -> Result<LocalizationResult> {
    let scores = (0..mw.sensors.len())
        .map(|j| {
            let mut pre = 0.0;
            let mut post = 0.0;
            for t in 0..mw.half {
                pre += mw.values.get(t, j);
            }
            for t in mw.half..2 * mw.half {
                post += mw.values.get(t, j);
            }
            (pre - post).abs()
        })
        .collect();
    LocalizationResult::from_scores("mean", &mw.sensors, ImportanceVector::raw(scores), None)
}

/// Two-sample Kolmogorov-Smirnov statistic, exact by merging sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// KS statistic between each sensor's pre- and post-onset samples.
pub fn localize_ks(mw: &MeasurementWindow) -> Result<LocalizationResult> {
    let scores = (0..mw.sensors.len())
        .map(|j| ks_statistic(&mw.pre(j), &mw.post(j)))
        .collect::<Result<Vec<_>>>()?;
    LocalizationResult::from_scores("ks", &mw.sensors, ImportanceVector::raw(scores), None)
}

/// Uniformly random sensor, one-hot scores.
pub fn localize_random(sensors: &[String], seed: u64) -> Result<LocalizationResult> {
    if sensors.is_empty() {
        return Err(Error::NoSensors);
    }
    let pick = seed::rng(seed).random_range(0..sensors.len());
    let mut scores = vec![0.0; sensors.len()];
    scores[pick] = 1.0;
    LocalizationResult::from_scores("random", sensors, ImportanceVector::raw(scores), None)
}

/// Feature scores plus optional holdout accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub importance: ImportanceVector,
    pub accuracy: Option<f64>,
}

/// Something that explains a pre/post drift through feature scores.
pub trait DriftExplainer: Sync {
    fn name(&self) -> String;
    fn explain(&self, d: &Dataset, seed: u64) -> Result<Explanation>;
}

/// Impurity importance needs trees, weight importance a linear model.
fn check_pairing(family: Family, importance: ImportanceKind) -> Result<()> {
    let ok = match importance {
        ImportanceKind::Fi => matches!(family, Family::Rf | Family::Et),
        ImportanceKind::Weights => matches!(family, Family::LogReg | Family::Svm),
        ImportanceKind::Pfi => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ImportanceMismatch {
            family: family.name(),
            importance: importance.name(),
        })
    }
}

/// A learner family plus an importance kind.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerExplainer {
    pub family: Family,
    pub importance: ImportanceKind,
    pub config: LearnerConfig,
    pub jobs: Jobs,
}

impl LearnerExplainer {
    pub fn new(family: Family, importance: ImportanceKind, config: LearnerConfig) -> Result<Self> {
        check_pairing(family, importance)?;
        Ok(Self {
            family,
            importance,
            config,
            jobs: Jobs::Sequential,
        })
    }
}

impl DriftExplainer for LearnerExplainer {
    fn name(&self) -> String {
        Method::Model {
            family: self.family,
            importance: self.importance,
        }
        .to_string()
    }

    /// Fit on a stratified split; the holdout gives the accuracy and the
    /// permutation importance.
    fn explain(&self, d: &Dataset, seed: u64) -> Result<Explanation> {
        d.require_both_classes()?;
        let (train_idx, hold_idx) = learners::stratified_split(&d.y, self.config.holdout, seed::derive(seed, 1));
        let train = d.subset(&train_idx);
        let hold = d.subset(&hold_idx);
        let model = fit_family(self.family, &train, &self.config, seed::derive(seed, 2), self.jobs)?;
        let acc = (!hold.is_empty()).then(|| accuracy(&model, &hold));
        let importance = match self.importance {
            ImportanceKind::Fi => impurity_importance(&model)?,
            ImportanceKind::Weights => linear_importance(&model)?,
            ImportanceKind::Pfi => {
                permutation_importance(&model, &hold, self.config.pfi_repeats, seed::derive(seed, 3))?
            }
        };
        Ok(Explanation {
            importance,
            accuracy: acc,
        })
    }
}

/// Label the window, explain the drift and rank sensors by importance.
pub fn localize_model_based<E: DriftExplainer + ?Sized>(
    mw: &MeasurementWindow,
    explainer: &E,
    seed: u64,
) -> Result<LocalizationResult> {
    let d = mw.dataset()?;
    let e = explainer.explain(&d, seed)?;
    LocalizationResult::from_scores(explainer.name(), &mw.sensors, e.importance, e.accuracy)
}

/// A localization method by id: `random`, `mean`, `ks`, or
/// `<family>-<importance>` such as `rf-fi`, `et-pfi`, `logreg`, `svm-pfi`
/// (a bare linear family means weight importance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Random,
    Mean,
    Ks,
    Model { family: Family, importance: ImportanceKind },
}

impl Method {
    pub fn is_model(self) -> bool {
        matches!(self, Method::Model { .. })
    }

    /// Run this method on a window.
    pub fn localize(
        self,
        mw: &MeasurementWindow,
        cfg: &LearnerConfig,
        seed: u64,
        jobs: Jobs,
    ) -> Result<LocalizationResult> {
        match self {
            Method::Random => localize_random(&mw.sensors, seed),
            Method::Mean => localize_mean(mw),
            Method::Ks => localize_ks(mw),
            Method::Model { family, importance } => {
                let mut e = LearnerExplainer::new(family, importance, cfg.clone())?;
                e.jobs = jobs;
                localize_model_based(mw, &e, seed)
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Random => f.write_str("random"),
            Method::Mean => f.write_str("mean"),
            Method::Ks => f.write_str("ks"),
            Method::Model { family, importance } => match importance {
                ImportanceKind::Weights => f.write_str(family.name()),
                _ => write!(f, "{}-{}", family.name(), importance.name()),
            },
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method `{s}`"));
        Ok(match s {
            "random" => Method::Random,
            "mean" => Method::Mean,
            "ks" => Method::Ks,
            _ => {
                let (fam, imp) = s.split_once('-').unwrap_or((s, "weights"));
                let family = match fam {
                    "rf" => Family::Rf,
                    "et" => Family::Et,
                    "logreg" => Family::LogReg,
                    "svm" => Family::Svm,
                    _ => return Err(bad()),
                };
                let importance = match imp {
                    "fi" => ImportanceKind::Fi,
                    "pfi" => ImportanceKind::Pfi,
                    "weights" => ImportanceKind::Weights,
                    _ => return Err(bad()),
                };
                check_pairing(family, importance)?;
                Method::Model { family, importance }
            }
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn window(cols: Vec<Vec<f64>>, half: usize) -> MeasurementWindow {
        let rows = cols[0].len();
        let m = Matrix::from_rows(
            &(0..rows)
                .map(|t| cols.iter().map(|c| c[t]).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        MeasurementWindow::new(ids(cols.len()), m, half).unwrap()
    }

    #[test]
    fn mean_shift_selected_with_score() {
        let w = 5;
        let flat = vec![3.0; 2 * w];
        let shifted: Vec<f64> = (0..2 * w).map(|t| if t >= w { 1.5 } else { 1.0 }).collect();
        let r = localize_mean(&window(vec![flat.clone(), shifted, flat], w)).unwrap();
        assert_eq!(r.selected, "s1");
        assert!((r.scores.scores[1] - w as f64 * 0.5).abs() < 1e-12);
        assert_eq!(r.scores.scores[0], 0.0);
    }

    #[test]
    fn constant_window_ties_to_smallest_id() {
        let r = localize_mean(&window(vec![vec![1.0; 6]; 3], 3)).unwrap();
        assert_eq!(r.scores.scores, vec![0.0; 3]);
        assert_eq!(r.selected, "s0");
        assert_eq!(r.ranking, ids(3));
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        let d = ks_statistic(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ks_statistic(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_picks_shifted_sensor() {
        let w = 50;
        let noise = |k: usize, t: usize| ((t * 7 + k * 13) as f64 * 0.37).sin();
        let stable: Vec<f64> = (0..2 * w).map(|t| noise(0, t)).collect();
        let moved: Vec<f64> = (0..2 * w)
            .map(|t| noise(1, t) + if t >= w { 10.0 } else { 0.0 })
            .collect();
        let r = localize_ks(&window(vec![stable, moved], w)).unwrap();
        assert_eq!(r.selected, "s1");
        assert_eq!(r.scores.scores[1], 1.0);
    }

    #[test]
    fn random_is_seeded_and_one_hot() {
        let s = ids(10);
        let a = localize_random(&s, 5).unwrap();
        assert_eq!(a, localize_random(&s, 5).unwrap());
        assert_eq!(a.scores.scores.iter().sum::<f64>(), 1.0);
        assert_eq!(localize_random(&ids(1), 9).unwrap().selected, "s0");
        assert!(matches!(localize_random(&[], 1), Err(Error::NoSensors)));
    }

    #[test]
    fn window_bounds() {
        let ts = TimeSeries {
            columns: ids(1),
            values: Matrix::zeros(10, 1),
            t0: 0,
        };
        assert!(MeasurementWindow::from_series(&ts, 3, 4).is_err());
        assert!(MeasurementWindow::from_series(&ts, 7, 4).is_err());
        let w = MeasurementWindow::from_series(&ts, 5, 5).unwrap();
        assert_eq!(w.values.rows(), 10);
    }

    struct Fixed(Vec<f64>);
    impl DriftExplainer for Fixed {
        fn name(&self) -> String {
            "stub".into()
        }
        fn explain(&self, _: &Dataset, _: u64) -> Result<Explanation> {
            Ok(Explanation {
                importance: ImportanceVector::raw(self.0.clone()),
                accuracy: Some(0.75),
            })
        }
    }

    #[test]
    fn stub_explainer_plumbing() {
        let mw = window(vec![vec![0.0, 0.0, 1.0, 1.0]; 3], 2);
        let r = localize_model_based(&mw, &Fixed(vec![0.1, 0.7, 0.2]), 0).unwrap();
        assert_eq!(r.selected, "s1");
        assert_eq!(r.ranking, vec!["s1", "s2", "s0"]);
        assert_eq!(r.model_accuracy, Some(0.75));
        assert_eq!(r.method, "stub");
    }

    #[test]
    fn method_ids_round_trip() {
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
        assert!(matches!(
            "logreg-fi".parse::<Method>(),
            Err(Error::ImportanceMismatch { .. })
        ));
        assert!(matches!(
            "rf-weights".parse::<Method>(),
            Err(Error::ImportanceMismatch { .. })
        ));
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn explainer_rejects_mismatch() {
        let e = LearnerExplainer::new(Family::LogReg, ImportanceKind::Fi, LearnerConfig::default());
        assert!(matches!(
            e,
            Err(Error::ImportanceMismatch {
                family: "logreg",
                importance: "fi"
            })
        ));
    }
}
