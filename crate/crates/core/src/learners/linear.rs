//! Linear classifiers on standardized features: l2-regularized logistic
//! regression (gradient descent with backtracking, strength picked by
//! stratified k-fold accuracy) and a linear SVM (averaged subgradient
//! descent on the hinge loss).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accuracy, Classifier, Dataset, FittedModel, ImportanceVector};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Per-feature centring and scaling fitted on training data. Constant
/// columns are dropped (mapped to zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub kept: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let f = x.cols();
        let mut mean = vec![0.0; f];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut scale = Vec::with_capacity(f);
        let mut kept = Vec::with_capacity(f);
        for (s, m) in var.iter().zip(&mean) {
            let sd = (s / n).sqrt();
            let keep = sd > 1e-12 * (1.0 + m.abs());
            kept.push(keep);
            scale.push(if keep { sd } else { 1.0 });
        }
        Self { mean, scale, kept }
    }

    pub fn transform_row(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = if self.kept[j] {
                (x[j] - self.mean[j]) / self.scale[j]
            } else {
                0.0
            };
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let src = x.row(r).to_vec();
            self.transform_row(&src, out.row_mut(r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearFamily {
    LogReg,
    Svm,
}

/// Linear decision function in standardized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub family: LinearFamily,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardizer: Standardizer,
    /// Regularization parameter used for the final fit.
    pub c: f64,
    /// `(C, mean cv accuracy)` per grid value; empty when not cross-validated.
    pub cv: Vec<(f64, f64)>,
    pub seed: u64,
    /// Objective value after each epoch of the final fit.
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..x.len() {
            if self.standardizer.kept[j] {
                z += self.weights[j] * (x[j] - self.standardizer.mean[j]) / self.standardizer.scale[j];
            }
        }
        z
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}

impl Classifier for LinearModel {
    fn predict(&self, x: &[f64]) -> u8 {
        LinearModel::predict(self, x)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Regularized logistic objective on standardized data and its gradient:
/// `f = mean_i [log(1 + e^{z_i}) - y_i z_i] + |w|^2 / (2 C n)` with
/// `z_i = w . x_i + b`. Returns `(f, grad_w, grad_b)`.
pub fn logistic_objective(z: &Matrix, y: &[u8], w: &[f64], b: f64, c: f64) -> (f64, Vec<f64>, f64) {
    let n = z.rows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for i in 0..z.rows() {
        let row = z.row(i);
        let zi = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let yi = f64::from(y[i]);
        loss += softplus(zi) - yi * zi;
        let r = sigmoid(zi) - yi;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
        gb += r;
    }
    let reg = 1.0 / (c * n);
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    let f = loss / n + 0.5 * reg * norm2;
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + reg * wj;
    }
    (f, gw, gb / n)
}

fn logreg_descent(z: &Matrix, y: &[u8], c: f64, epochs: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let f = z.cols();
    let mut w = vec![0.0; f];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = logistic_objective(z, y, &w, b, c);
    let mut history = Vec::with_capacity(epochs + 1);
    history.push(loss);
    let mut step = 1.0;
    for _ in 0..epochs {
        let gnorm2: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2 < 1e-24 {
            break;
        }
        // Armijo backtracking.
        let mut accepted = false;
        while step > 1e-16 {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let b_new = b - step * gb;
            let (l_new, gw_new, gb_new) = logistic_objective(z, y, &w_new, b_new, c);
            if l_new <= loss - 0.5 * step * gnorm2 {
                w = w_new;
                b = b_new;
                loss = l_new;
                gw = gw_new;
                gb = gb_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(loss);
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e3);
    }
    (w, b, history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Fit logistic regression with a fixed regularization parameter `c`.
pub fn fit_logreg(d: &Dataset, c: f64, epochs: usize) -> Result<LinearModel> {
    d.require_both_classes()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C = {c} must be > 0")));
    }
    let standardizer = Standardizer::fit(&d.x);
    let z = standardizer.transform(&d.x);
    let (weights, intercept, loss_history) = logreg_descent(&z, &d.y, c, epochs);
    Ok(LinearModel {
        family: LinearFamily::LogReg,
        weights,
        intercept,
        standardizer,
        c,
        cv: Vec::new(),
        seed: 0,
        loss_history,
    })
}

/// Stratified fold assignment; errors when a class has fewer samples than
/// folds.
fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = seed::rng(seed);
    let mut fold = vec![0; y.len()];
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::Dataset(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % folds;
        }
    }
    Ok(fold)
}

/// Logistic regression with `C` chosen from `c_grid` by stratified k-fold
/// accuracy (ties to the smaller `C`), refit on all data.
pub fn fit_logreg_cv(d: &Dataset, params: &LogRegParams) -> Result<LinearModel> {
    d.require_both_classes()?;
    if params.folds < 2 {
        return Err(Error::InvalidParameter("folds must be >= 2".into()));
    }
    if params.c_grid.is_empty() || params.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter("c_grid must hold positive values".into()));
    }
    let fold = stratified_folds(&d.y, params.folds, params.seed)?;
    let mut grid = params.c_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut cv = Vec::with_capacity(grid.len());
    for &c in &grid {
        let mut acc = 0.0;
        for k in 0..params.folds {
            let train: Vec<usize> = (0..d.len()).filter(|&i| fold[i] != k).collect();
            let val: Vec<usize> = (0..d.len()).filter(|&i| fold[i] == k).collect();
            let m = fit_logreg(&d.subset(&train), c, params.epochs)?;
            acc += accuracy(&m, &d.subset(&val));
        }
        cv.push((c, acc / params.folds as f64));
    }
    let mut best = cv[0];
    for &entry in &cv[1..] {
        if entry.1 > best.1 {
            best = entry;
        }
    }
    let mut m = fit_logreg(d, best.0, params.epochs)?;
    m.cv = cv;
    m.seed = params.seed;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Primal SVM objective on standardized data:
/// `|w|^2 / (2 C n) + mean_i max(0, 1 - s_i (w . x_i + b))`, `s_i = +-1`.
pub fn svm_objective(z: &Matrix, y: &[u8], w: &[f64], b: f64, c: f64) -> f64 {
    let n = z.rows() as f64;
    let hinge: f64 = (0..z.rows())
        .map(|i| {
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            let m = b + z.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            (1.0 - s * m).max(0.0)
        })
        .sum();
    w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c * n) + hinge / n
}

/// Linear SVM by stochastic subgradient descent over deterministic
/// shuffles, step `1 / (1 + lambda t)`, returning the average of the
/// iterates from the second half of training.
pub fn fit_linear_svm(d: &Dataset, params: &SvmParams) -> Result<LinearModel> {
    d.require_both_classes()?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C = {} must be > 0", params.c)));
    }
    if params.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    let standardizer = Standardizer::fit(&d.x);
    let z = standardizer.transform(&d.x);
    let n = z.rows();
    let f = z.cols();
    let lambda = 1.0 / (params.c * n as f64);
    let mut rng = seed::rng(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; f];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; f];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let start_avg = params.epochs / 2;
    let mut t = 0usize;
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (1.0 + lambda * t as f64);
            let s = if d.y[i] == 1 { 1.0 } else { -1.0 };
            let row = z.row(i);
            let margin = s * (b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
            let shrink = 1.0 - eta * lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, x) in w.iter_mut().zip(row) {
                    *wj += eta * s * x;
                }
                b += eta * s;
            }
            if epoch >= start_avg {
                averaged += 1;
                let k = averaged as f64;
                for (a, wj) in avg_w.iter_mut().zip(&w) {
                    *a += (wj - *a) / k;
                }
                avg_b += (b - avg_b) / k;
            }
        }
        if epoch >= start_avg {
            history.push(svm_objective(&z, &d.y, &avg_w, avg_b, params.c));
        }
    }
    Ok(LinearModel {
        family: LinearFamily::Svm,
        weights: avg_w,
        intercept: avg_b,
        standardizer,
        c: params.c,
        cv: Vec::new(),
        seed: params.seed,
        loss_history: history,
    })
}

/// Absolute standardized weights, normalized to unit sum.
pub fn linear_importance(m: &FittedModel) -> Result<ImportanceVector> {
    match m {
        FittedModel::Linear(l) => Ok(ImportanceVector::normalized(
            l.weights.iter().map(|w| w.abs()).collect(),
        )),
        FittedModel::Forest(_) => Err(Error::ImportanceMismatch {
            family: m.family().name(),
            importance: "weights",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters(n: usize, gap: f64) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { -gap } else { gap };
                vec![s + (i as f64 * 0.37).sin(), (i as f64 * 1.1).cos(), 4.0]
            })
            .collect();
        let y = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            y,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn logreg_separates_and_drops_constant() {
        let d = clusters(80, 3.0);
        let m = fit_logreg_cv(
            &d,
            &LogRegParams {
                c_grid: vec![0.1, 1.0, 10.0],
                folds: 4,
                epochs: 200,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(accuracy(&m, &d), 1.0);
        assert_eq!(m.weights[2], 0.0);
        assert_eq!(m.cv.len(), 3);
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn svm_separates_and_drops_constant() {
        let d = clusters(80, 3.0);
        let m = fit_linear_svm(
            &d,
            &SvmParams {
                c: 1.0,
                epochs: 100,
                seed: 2,
            },
        )
        .unwrap();
        assert_eq!(accuracy(&m, &d), 1.0);
        assert_eq!(m.weights[2], 0.0);
        let imp = linear_importance(&FittedModel::Linear(m)).unwrap();
        assert_eq!(imp.scores[2], 0.0);
    }

    #[test]
    fn too_few_samples_for_folds() {
        let d = clusters(6, 3.0);
        let r = fit_logreg_cv(
            &d,
            &LogRegParams {
                c_grid: vec![1.0],
                folds: 4,
                epochs: 10,
                seed: 1,
            },
        );
        assert!(matches!(r, Err(Error::Dataset(_))));
    }

    #[test]
    fn linear_importance_values() {
        let mk = |w: Vec<f64>| {
            let f = w.len();
            FittedModel::Linear(LinearModel {
                family: LinearFamily::LogReg,
                weights: w,
                intercept: 0.0,
                standardizer: Standardizer {
                    mean: vec![0.0; f],
                    scale: vec![1.0; f],
                    kept: vec![true; f],
                },
                c: 1.0,
                cv: Vec::new(),
                seed: 0,
                loss_history: Vec::new(),
            })
        };
        assert_eq!(
            linear_importance(&mk(vec![0.0, 3.0, 0.0])).unwrap().scores,
            vec![0.0, 1.0, 0.0]
        );
        assert_eq!(linear_importance(&mk(vec![1.0, -1.0])).unwrap().scores, vec![0.5, 0.5]);
        assert_eq!(
            linear_importance(&mk(vec![0.2, -0.7, 0.1])).unwrap(),
            linear_importance(&mk(vec![-0.2, 0.7, -0.1])).unwrap()
        );
    }
}
