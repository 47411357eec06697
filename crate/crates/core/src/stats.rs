//! Small statistics helpers: summaries and the paired Wilcoxon signed-rank
//! test used to compare localization methods.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Median, mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Summary {
        median: median(values),
        mean,
        std: var.sqrt(),
        count: values.len(),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// `x` tends to be smaller than `y`.
    Less,
    /// `x` tends to be larger than `y`.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `x - y`.
    pub w_plus: f64,
    /// Non-zero pairs used.
    pub n: usize,
    pub z: f64,
    pub p_value: f64,
}

/// Paired Wilcoxon signed-rank test with zero differences discarded,
/// average ranks for ties, tie-corrected variance and a continuity
/// correction on the normal approximation.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> WilcoxonResult {
    assert_eq!(x.len(), y.len(), "paired samples must have equal length");
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            w_plus: 0.0,
            n: 0,
            z: 0.0,
            p_value: 1.0,
        };
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        for d in &diffs[i..=j] {
            if *d > 0.0 {
                w_plus += rank;
            }
        }
        i = j + 1;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let (z, p) = if sd == 0.0 {
        (0.0, 1.0)
    } else {
        match alternative {
            Alternative::Less => {
                let z = (w_plus - mean + 0.5) / sd;
                (z, normal.cdf(z))
            }
            Alternative::Greater => {
                let z = (w_plus - mean - 0.5) / sd;
                (z, normal.sf(z))
            }
            Alternative::TwoSided => {
                let dev = (w_plus - mean).abs();
                let z = ((dev - 0.5).max(0.0)) / sd;
                (z, (2.0 * normal.sf(z)).min(1.0))
            }
        }
    };
    WilcoxonResult {
        w_plus,
        n,
        z,
        p_value: p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_closed_form() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let one = summarize(&[4.5]).unwrap();
        assert_eq!((one.median, one.mean, one.std), (4.5, 4.5, 0.0));
        assert!(summarize(&[]).is_none());
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn wilcoxon_reference_value() {
        // Reference values from scipy.stats.wilcoxon(x, y, correction=True,
        // method="approx", zero_method="wilcox").
        let x = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30];
        let y = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29];
        let t = wilcoxon_signed_rank(&x, &y, Alternative::TwoSided);
        assert_eq!((t.n, t.w_plus), (9, 40.0));
        assert!((t.p_value - 0.044_010_984_012_951_43).abs() < 1e-9);
        let g = wilcoxon_signed_rank(&x, &y, Alternative::Greater);
        assert!((g.p_value - 0.022_005_492_006_475_714).abs() < 1e-9);
        let l = wilcoxon_signed_rank(&x, &y, Alternative::Less);
        assert!((l.p_value - 0.983_515_309_377_89).abs() < 1e-9);

        // Ties and a zero difference.
        let x2 = [1.0, 2.0, 2.0, 3.0, 5.0, 0.0, 4.0, 4.0];
        let y2 = [0.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 7.0];
        let t2 = wilcoxon_signed_rank(&x2, &y2, Alternative::TwoSided);
        assert_eq!((t2.n, t2.w_plus), (7, 21.5));
        assert!((t2.p_value - 0.234_201_283_258_763_44).abs() < 1e-9);
        let g2 = wilcoxon_signed_rank(&x2, &y2, Alternative::Greater);
        assert!((g2.p_value - 0.117_100_641_629_381_72).abs() < 1e-9);
    }

    #[test]
    fn wilcoxon_all_equal() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], Alternative::Less);
        assert_eq!(r.p_value, 1.0);
    }
}
