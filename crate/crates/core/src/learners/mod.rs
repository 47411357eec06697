//! Binary classifiers with feature-importance extraction.
//!
//! Samples are time steps, features are sensors, and the label says whether
//! a sample lies before (0) or after (1) an anomaly onset. The families are
//! random forests and extra trees (impurity and permutation importance),
//! l2-regularized logistic regression with cross-validated strength, and a
//! linear SVM (absolute weights as importance).

mod linear;
mod permutation;
mod tree;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use linear::{
    fit_linear_svm, fit_logreg, fit_logreg_cv, linear_importance, logistic_objective, svm_objective, LinearFamily,
    LinearModel, LogRegParams, Standardizer, SvmParams,
};
pub use permutation::permutation_importance;
pub use tree::{fit_tree_ensemble, impurity_importance, Forest, ForestParams, Tree, TreeKind, TreeNode};

use crate::error::{Error, Result};
use crate::exec::Jobs;
use crate::matrix::Matrix;
use crate::seed;

/// Samples x features with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub features: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<u8>, features: Vec<String>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Dataset(format!("{} labels for {} samples", y.len(), x.rows())));
        }
        if features.len() != x.cols() {
            return Err(Error::Dataset(format!(
                "{} feature ids for {} columns",
                features.len(),
                x.cols()
            )));
        }
        if y.iter().any(|&l| l > 1) {
            return Err(Error::Dataset("labels must be 0 or 1".into()));
        }
        if !x.all_finite() {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self { x, y, features })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.y.iter().filter(|&&l| l == 1).count();
        [self.y.len() - ones, ones]
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        let [n0, n1] = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::Dataset("both classes must be present".into()));
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            features: self.features.clone(),
        }
    }

    /// Stable per-feature keys; randomness inside the learners is keyed by
    /// feature identity so results follow the columns under reordering.
    pub(crate) fn feature_keys(&self) -> Vec<u64> {
        self.features.iter().map(|f| seed::hash_str(f)).collect()
    }
}

/// Per-feature nonnegative scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub scores: Vec<f64>,
    pub normalized: bool,
}

impl ImportanceVector {
    pub fn raw(scores: Vec<f64>) -> Self {
        Self {
            scores,
            normalized: false,
        }
    }

    /// Scale to unit sum; an all-zero vector stays zero.
    pub fn normalized(mut scores: Vec<f64>) -> Self {
        for s in &mut scores {
            if !(*s > 0.0) {
                *s = 0.0;
            }
        }
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            for s in &mut scores {
                *s /= total;
            }
        }
        Self {
            scores,
            normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Anything that labels a feature vector.
pub trait Classifier: Sync {
    fn predict(&self, x: &[f64]) -> u8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rf,
    Et,
    LogReg,
    Svm,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Rf => "rf",
            Family::Et => "et",
            Family::LogReg => "logreg",
            Family::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceKind {
    /// Impurity-based feature importance (trees).
    Fi,
    /// Permutation feature importance on a holdout.
    Pfi,
    /// Absolute weights (linear models).
    Weights,
}

impl ImportanceKind {
    pub fn name(self) -> &'static str {
        match self {
            ImportanceKind::Fi => "fi",
            ImportanceKind::Pfi => "pfi",
            ImportanceKind::Weights => "weights",
        }
    }
}

/// A trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family_kind", rename_all = "snake_case")]
pub enum FittedModel {
    Forest(Forest),
    Linear(LinearModel),
}

impl FittedModel {
    pub fn family(&self) -> Family {
        match self {
            FittedModel::Forest(f) => match f.kind {
                TreeKind::Rf => Family::Rf,
                TreeKind::Et => Family::Et,
            },
            FittedModel::Linear(l) => match l.family {
                LinearFamily::LogReg => Family::LogReg,
                LinearFamily::Svm => Family::Svm,
            },
        }
    }
}

impl Classifier for FittedModel {
    fn predict(&self, x: &[f64]) -> u8 {
        match self {
            FittedModel::Forest(f) => f.predict(x),
            FittedModel::Linear(l) => l.predict(x),
        }
    }
}

/// Fraction of correctly labelled samples.
pub fn accuracy<C: Classifier + ?Sized>(m: &C, d: &Dataset) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let correct = (0..d.len()).filter(|&i| m.predict(d.x.row(i)) == d.y[i]).count();
    correct as f64 / d.len() as f64
}

/// Stratified split: `fraction` of each class (rounded, at least one when
/// the class has two or more samples) goes to the second part.
pub fn stratified_split(y: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let mut k = (idx.len() as f64 * fraction).round() as usize;
        if k == 0 && idx.len() >= 2 && fraction > 0.0 {
            k = 1;
        }
        k = k.min(idx.len().saturating_sub(1));
        hold.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// `learners` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub pfi_repeats: usize,
    pub epochs: usize,
    pub svm_c: f64,
    /// Holdout fraction for accuracy and PFI.
    pub holdout: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            c_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            folds: 5,
            pfi_repeats: 10,
            epochs: 200,
            svm_c: 1.0,
            holdout: 0.3,
        }
    }
}

/// Fit the given family with the config's hyperparameters.
pub fn fit_family(family: Family, d: &Dataset, cfg: &LearnerConfig, seed: u64, jobs: Jobs) -> Result<FittedModel> {
    match family {
        Family::Rf | Family::Et => {
            let kind = if family == Family::Rf {
                TreeKind::Rf
            } else {
                TreeKind::Et
            };
            let params = ForestParams {
                kind,
                n_trees: cfg.n_trees,
                max_depth: cfg.max_depth,
                max_features: None,
                seed,
                jobs,
            };
            fit_tree_ensemble(d, &params).map(FittedModel::Forest)
        }
        Family::LogReg => fit_logreg_cv(
            d,
            &LogRegParams {
                c_grid: cfg.c_grid.clone(),
                folds: cfg.folds,
                epochs: cfg.epochs,
                seed,
            },
        )
        .map(FittedModel::Linear),
        Family::Svm => fit_linear_svm(
            d,
            &SvmParams {
                c: cfg.svm_c,
                epochs: cfg.epochs,
                seed,
            },
        )
        .map(FittedModel::Linear),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(u8);
    impl Classifier for Constant {
        fn predict(&self, _: &[f64]) -> u8 {
            self.0
        }
    }

    struct Sign(usize);
    impl Classifier for Sign {
        fn predict(&self, x: &[f64]) -> u8 {
            u8::from(x[self.0] > 0.0)
        }
    }

    fn balanced() -> Dataset {
        let x = Matrix::from_rows(&[vec![-1.0], vec![-2.0], vec![1.0], vec![3.0]]).unwrap();
        Dataset::new(x, vec![0, 0, 1, 1], vec!["a".into()]).unwrap()
    }

    #[test]
    fn accuracy_values() {
        let d = balanced();
        assert_eq!(accuracy(&Sign(0), &d), 1.0);
        assert_eq!(accuracy(&Constant(1), &d), 0.5);
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(Dataset::new(x, vec![0], vec!["a".into()]).is_err());
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(Dataset::new(x.clone(), vec![0, 1], vec!["a".into()]).is_err());
        assert!(Dataset::new(x, vec![2], vec!["a".into()]).is_err());
    }

    #[test]
    fn normalization() {
        let v = ImportanceVector::normalized(vec![0.0, 3.0, 1.0]);
        assert_eq!(v.scores, vec![0.0, 0.75, 0.25]);
        let z = ImportanceVector::normalized(vec![0.0, -1.0]);
        assert_eq!(z.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn split_is_stratified() {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i >= 40)).collect();
        let (tr, ho) = stratified_split(&y, 0.3, 1);
        assert_eq!(tr.len() + ho.len(), 100);
        assert_eq!(ho.iter().filter(|&&i| y[i] == 0).count(), 12);
        assert_eq!(ho.iter().filter(|&&i| y[i] == 1).count(), 18);
    }
}
