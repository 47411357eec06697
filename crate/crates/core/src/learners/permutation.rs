use rand::seq::SliceRandom;

use super::{accuracy, Classifier, Dataset, ImportanceVector};
use crate::error::{Error, Result};
use crate::exec::{self, Jobs};
use crate::seed;

/// Mean accuracy drop when one column of the holdout is shuffled, clipped at
/// zero and normalized. The shuffle for feature `f`, repeat `r` uses the
/// stream `derive(seed ^ hash(f), r)`.
pub fn permutation_importance<C: Classifier + ?Sized>(
    m: &C,
    holdout: &Dataset,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceVector> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    if holdout.is_empty() {
        return Err(Error::Dataset("empty holdout".into()));
    }
    let baseline = accuracy(m, holdout);
    let keys = holdout.feature_keys();
    let n = holdout.len();
    let drops = exec::map_range(holdout.n_features(), Jobs::All, |j| {
        let column = holdout.x.column(j);
        let mut row = vec![0.0; holdout.n_features()];
        let mut total = 0.0;
        for r in 0..repeats {
            let mut rng = seed::rng(seed::derive(seed ^ keys[j], r as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut correct = 0usize;
            for i in 0..n {
                row.copy_from_slice(holdout.x.row(i));
                row[j] = column[perm[i]];
                if m.predict(&row) == holdout.y[i] {
                    correct += 1;
                }
            }
            total += baseline - correct as f64 / n as f64;
        }
        (total / repeats as f64).max(0.0)
    });
    Ok(ImportanceVector::normalized(drops))
}
