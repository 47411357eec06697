use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use driftloc::exec::Jobs;
use driftloc::learners::ImportanceKind;
use driftloc::learners::{
    accuracy, fit_family, fit_linear_svm, impurity_importance, linear_importance, logistic_objective,
    permutation_importance, svm_objective, Dataset, Family, LearnerConfig, Standardizer, SvmParams,
};
use driftloc::localization::{DriftExplainer, LearnerExplainer};
use driftloc::Matrix;

fn features(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("f{j}")).collect()
}

/// Two classes separated by a margin of 2 along feature 0 and -1 along
/// feature 1; feature 2 is noise and feature 3 is constant.
fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let side = if label == 1 { 1.0 } else { -1.0 };
        rows.push(vec![
            side * (1.0 + rng.random::<f64>()),
            -side * (0.5 + rng.random::<f64>()),
            rng.sample::<f64, _>(StandardNormal),
            4.2,
        ]);
        y.push(label);
    }
    Dataset::new(Matrix::from_rows(&rows).unwrap(), y, features(4)).unwrap()
}

fn small_config() -> LearnerConfig {
    LearnerConfig {
        n_trees: 30,
        ..LearnerConfig::default()
    }
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, f) = (40, 5);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let z = Matrix::from_rows(&rows).unwrap();
    let y: Vec<u8> = (0..n).map(|i| u8::from(rows[i][0] + 0.3 * rows[i][1] > 0.0)).collect();
    let c = 0.7;
    let h = 1e-6;
    for point in 0..5 {
        let w: Vec<f64> = (0..f).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (_, gw, gb) = logistic_objective(&z, &y, &w, b, c);
        let mut analytic = gw.clone();
        analytic.push(gb);
        let mut numeric = Vec::with_capacity(f + 1);
        for j in 0..=f {
            let shift = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < f {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_objective(&z, &y, &w2, b2, c).0
            };
            numeric.push((shift(h) - shift(-h)) / (2.0 * h));
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-5, "point {point}: relative error {:e}", diff / scale);
    }
}

#[derive(Deserialize)]
struct SvmCase {
    c: f64,
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    objective: f64,
}

#[test]
fn svm_objective_close_to_convex_solver() {
    let cases: Vec<SvmCase> = serde_json::from_str(include_str!("fixtures/svm_reference.json")).unwrap();
    for (i, case) in cases.iter().enumerate() {
        let x = Matrix::from_rows(&case.x).unwrap();
        let d = Dataset::new(x.clone(), case.y.clone(), features(x.cols())).unwrap();
        let m = fit_linear_svm(
            &d,
            &SvmParams {
                c: case.c,
                epochs: 400,
                seed: 1,
            },
        )
        .unwrap();
        let z = Standardizer::fit(&x).transform(&x);
        let ours = svm_objective(&z, &case.y, &m.weights, m.intercept, case.c);
        assert!(ours >= case.objective * (1.0 - 1e-6), "case {i}: below the optimum?");
        assert!(ours <= case.objective * 1.01, "case {i}: {ours} vs {}", case.objective);
    }
}

#[test]
fn separable_fixtures_are_learned_by_every_family() {
    let train = separable(120, 1);
    let test = separable(80, 2);
    let cfg = small_config();
    for family in [Family::Rf, Family::Et, Family::LogReg, Family::Svm] {
        let m = fit_family(family, &train, &cfg, 5, Jobs::Sequential).unwrap();
        assert_eq!(accuracy(&m, &train), 1.0, "{family:?} train");
        assert_eq!(accuracy(&m, &test), 1.0, "{family:?} test");
    }
}

#[test]
fn constant_features_get_zero_importance() {
    let d = separable(100, 4);
    let cfg = small_config();
    for family in [Family::Rf, Family::Et, Family::LogReg, Family::Svm] {
        let m = fit_family(family, &d, &cfg, 9, Jobs::Sequential).unwrap();
        let own = match family {
            Family::Rf | Family::Et => impurity_importance(&m).unwrap(),
            Family::LogReg | Family::Svm => linear_importance(&m).unwrap(),
        };
        assert_eq!(own.scores[3], 0.0, "{family:?}");
        let pfi = permutation_importance(&m, &d, 5, 2).unwrap();
        assert_eq!(pfi.scores[3], 0.0, "{family:?} pfi");
    }
}

#[test]
fn null_holdout_accuracy_is_near_chance() {
    let explainer = LearnerExplainer::new(Family::LogReg, ImportanceKind::Weights, LearnerConfig::default()).unwrap();
    let mut total = 0.0;
    let runs = 40;
    for r in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + r);
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let d = Dataset::new(Matrix::from_rows(&rows).unwrap(), y, features(5)).unwrap();
        total += explainer.explain(&d, r).unwrap().accuracy.unwrap();
    }
    let mean = total / runs as f64;
    // Each holdout has 60 samples: sd of the mean over 40 runs is about 0.01.
    assert!((mean - 0.5).abs() < 0.05, "mean holdout accuracy {mean}");
}

#[test]
fn drifting_feature_dominates_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 200;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i >= n / 2);
        let mut row: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        row[4] += 3.0 * f64::from(label);
        rows.push(row);
        y.push(label);
    }
    let d = Dataset::new(Matrix::from_rows(&rows).unwrap(), y, features(6)).unwrap();
    for (family, importance) in [
        (Family::Rf, ImportanceKind::Fi),
        (Family::Et, ImportanceKind::Fi),
        (Family::Rf, ImportanceKind::Pfi),
        (Family::LogReg, ImportanceKind::Weights),
        (Family::Svm, ImportanceKind::Weights),
    ] {
        let e = LearnerExplainer::new(family, importance, small_config()).unwrap();
        let s = e.explain(&d, 3).unwrap().importance.scores;
        let top = (0..6).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(top, 4, "{family:?}/{importance:?}: {s:?}");
        let share = s[4] / s.iter().sum::<f64>();
        assert!(share > 0.5, "{family:?}/{importance:?}: share {share}");
    }
}

#[test]
fn fi_requires_trees_and_weights_require_linear_models() {
    assert!(LearnerExplainer::new(Family::LogReg, ImportanceKind::Fi, LearnerConfig::default()).is_err());
    assert!(LearnerExplainer::new(Family::Rf, ImportanceKind::Weights, LearnerConfig::default()).is_err());
    assert!(LearnerExplainer::new(Family::Svm, ImportanceKind::Pfi, LearnerConfig::default()).is_ok());
}
