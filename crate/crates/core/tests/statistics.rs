use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use driftloc::evaluation::{aggregate, Type1Metrics};
use driftloc::localization::{ks_statistic, localize_random};
use driftloc::Hops;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `P(D >= k / n)` for two samples of size `n` under the null, by the
/// reflection formula for lattice paths.
fn ks_tail(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let total = ln_choose(2 * n, n);
    let mut p = 0.0;
    let mut j = 1;
    while j * k <= n {
        let term = (ln_choose(2 * n, n - j * k) - total).exp();
        p += if j % 2 == 1 { 2.0 * term } else { -2.0 * term };
        j += 1;
    }
    p.min(1.0)
}

/// Pearson statistic and p-value, merging adjacent cells until each expects
/// at least five counts.
fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (oi, ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (cells.len() - 1) as f64;
    (stat, 1.0 - ChiSquared::new(df).unwrap().cdf(stat))
}

#[test]
fn ks_null_distribution_matches_exact_law() {
    let n = 30u64;
    let draws = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0.0; n as usize + 1];
    for _ in 0..draws {
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let d = ks_statistic(&a, &b).unwrap();
        let k = (d * n as f64).round() as usize;
        assert!((d * n as f64 - k as f64).abs() < 1e-9, "D must lie on the 1/n lattice");
        counts[k] += 1.0;
    }
    let expected: Vec<f64> = (0..=n)
        .map(|k| (ks_tail(n, k) - ks_tail(n, k + 1)) * draws as f64)
        .collect();
    assert!((expected.iter().sum::<f64>() - draws as f64).abs() < 1e-6);
    let (stat, p) = chi_square(&counts, &expected);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn random_localizer_is_uniform() {
    let sensors: Vec<String> = (0..10).map(|j| format!("s{j}")).collect();
    let draws = 5000;
    let mut counts = vec![0.0; sensors.len()];
    for seed in 0..draws {
        let r = localize_random(&sensors, seed).unwrap();
        counts[sensors.iter().position(|s| *s == r.selected).unwrap()] += 1.0;
        assert_eq!(r.scores.scores.iter().sum::<f64>(), 1.0);
    }
    let expected = vec![draws as f64 / sensors.len() as f64; sensors.len()];
    let (stat, p) = chi_square(&counts, &expected);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn aggregate_matches_streaming_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut metrics = Vec::new();
    for i in 0..301 {
        let d: u32 = rng.random_range(0..12);
        let m = Type1Metrics {
            distance_topo: Hops::Finite(d),
            distance_geo: rng.random_range(0.0..1.5),
            n_closer: rng.random_range(0..5),
            rel_dist: (i % 4 != 0).then(|| rng.random_range(1.0..6.0)),
            best3: rng.random_range(0..4),
        };
        metrics.push((if i % 3 == 0 { "a" } else { "b" }.to_owned(), m));
    }
    let report = aggregate(&metrics);
    for method in ["a", "b"] {
        let geo: Vec<f64> = metrics
            .iter()
            .filter(|(m, _)| m == method)
            .map(|(_, x)| x.distance_geo)
            .collect();
        let rel: Vec<f64> = metrics
            .iter()
            .filter(|(m, _)| m == method)
            .filter_map(|(_, x)| x.rel_dist)
            .collect();
        for (name, values) in [("distance_geo", geo), ("rel_dist", rel)] {
            // Welford.
            let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for &x in &values {
                count += 1.0;
                let delta = x - mean;
                mean += delta / count;
                m2 += delta * (x - mean);
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            };

            let row = report.get(method, name).unwrap();
            assert!((row.mean - mean).abs() < 1e-12, "{method}/{name}");
            assert!((row.std - (m2 / count).sqrt()).abs() < 1e-12, "{method}/{name}");
            assert_eq!(row.median, median, "{method}/{name}");
        }
    }
    assert_eq!(report.runs["a"] + report.runs["b"], 301);
}
