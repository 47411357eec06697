//! CART-style classification trees on Gini impurity, bagged into random
//! forests or extra-trees ensembles.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, Dataset, ImportanceVector};
use crate::error::{Error, Result};
use crate::exec::{self, Jobs};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    /// Bootstrap samples, best threshold per candidate feature.
    Rf,
    /// All samples, one uniform random threshold per candidate feature.
    Et,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub kind: TreeKind,
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; `None` = floor(sqrt(features)).
    pub max_features: Option<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub jobs: Jobs,
}

impl ForestParams {
    pub fn new(kind: TreeKind, n_trees: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            kind,
            n_trees,
            max_depth,
            max_features: None,
            seed,
            jobs: Jobs::All,
        }
    }
}

/// Nested split records; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: u8,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        samples: usize,
        /// Weighted Gini decrease, as a fraction of the tree's root samples.
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: TreeNode,
    /// Total weighted impurity decrease per feature.
    pub importance: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub kind: TreeKind,
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Majority vote; ties go to class 0.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }
}

impl Classifier for Forest {
    fn predict(&self, x: &[f64]) -> u8 {
        Forest::predict(self, x)
    }
}

#[inline]
fn gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        let p = n1 / n;
        2.0 * p * (1.0 - p)
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity `n_l * g_l + n_r * g_r`.
    child_impurity: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    keys: &'a [u64],
    kind: TreeKind,
    max_depth: usize,
    max_features: usize,
    n_root: f64,
    rng: ChaCha8Rng,
    importance: Vec<f64>,
    scratch: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> (f64, f64) {
        let ones = idx.iter().filter(|&&i| self.y[i] == 1).count();
        ((idx.len() - ones) as f64, ones as f64)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> TreeNode {
        let (n0, n1) = self.counts(idx);
        let leaf = TreeNode::Leaf {
            class: u8::from(n1 > n0),
            samples: idx.len(),
        };
        if n0 == 0.0 || n1 == 0.0 || depth >= self.max_depth || idx.len() < 2 {
            return leaf;
        }
        let Some(best) = self.find_split(idx) else {
            return leaf;
        };
        let n = idx.len() as f64;
        let decrease = (n * gini(n0, n1) - best.child_impurity) / self.n_root;
        self.importance[best.feature] += decrease;

        let mut split = 0;
        for i in 0..idx.len() {
            if self.x.get(idx[i], best.feature) <= best.threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            samples: idx.len(),
            impurity_decrease: decrease,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn find_split(&mut self, idx: &[usize]) -> Option<SplitCandidate> {
        // Candidate order is keyed by feature identity.
        let node_word = self.rng.next_u64();
        let mut order: Vec<(u64, u64, usize)> = self
            .keys
            .iter()
            .enumerate()
            .map(|(j, &k)| (seed::mix(node_word ^ k), k, j))
            .collect();
        order.sort_unstable();

        let mut best: Option<SplitCandidate> = None;
        let mut examined = 0;
        for (draw, _, j) in order {
            if examined == self.max_features {
                break;
            }
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x.get(i, j);
                (lo.min(v), hi.max(v))
            });
            if !(hi > lo) {
                continue;
            }
            examined += 1;
            let cand = match self.kind {
                TreeKind::Rf => self.best_threshold(idx, j),
                TreeKind::Et => {
                    let u = seed::unit(seed::mix(draw ^ 0x5851_F42D_4C95_7F2D));
                    let mut t = lo + u * (hi - lo);
                    if t >= hi {
                        t = lo;
                    }
                    Some(self.evaluate(idx, j, t))
                }
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.child_impurity < b.child_impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn evaluate(&self, idx: &[usize], feature: usize, threshold: f64) -> SplitCandidate {
        let (mut l0, mut l1, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0);
        for &i in idx {
            let left = self.x.get(i, feature) <= threshold;
            match (left, self.y[i]) {
                (true, 0) => l0 += 1.0,
                (true, _) => l1 += 1.0,
                (false, 0) => r0 += 1.0,
                (false, _) => r1 += 1.0,
            }
        }
        SplitCandidate {
            feature,
            threshold,
            child_impurity: (l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1),
        }
    }

    fn best_threshold(&mut self, idx: &[usize], feature: usize) -> Option<SplitCandidate> {
        self.scratch.clear();
        self.scratch
            .extend(idx.iter().map(|&i| (self.x.get(i, feature), self.y[i])));
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t0, t1) = self.scratch.iter().fold(
            (0.0, 0.0),
            |(a, b), &(_, l)| if l == 1 { (a, b + 1.0) } else { (a + 1.0, b) },
        );
        let (mut l0, mut l1) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for w in 0..self.scratch.len() - 1 {
            let (v, l) = self.scratch[w];
            if l == 1 {
                l1 += 1.0;
            } else {
                l0 += 1.0;
            }
            let next = self.scratch[w + 1].0;
            if next <= v {
                continue;
            }
            let imp = (l0 + l1) * gini(l0, l1) + (t0 - l0 + t1 - l1) * gini(t0 - l0, t1 - l1);
            if best.is_none_or(|(b, _)| imp < b) {
                let mut thr = 0.5 * (v + next);
                if thr >= next {
                    thr = v;
                }
                best = Some((imp, thr));
            }
        }
        best.map(|(child_impurity, threshold)| SplitCandidate {
            feature,
            threshold,
            child_impurity,
        })
    }
}

fn fit_tree(d: &Dataset, keys: &[u64], params: &ForestParams, max_features: usize, seed: u64) -> Tree {
    let mut rng = seed::rng(seed);
    let n = d.len();
    let mut idx: Vec<usize> = match params.kind {
        TreeKind::Rf => (0..n).map(|_| rng.random_range(0..n)).collect(),
        TreeKind::Et => (0..n).collect(),
    };
    let mut b = Builder {
        x: &d.x,
        y: &d.y,
        keys,
        kind: params.kind,
        max_depth: params.max_depth,
        max_features,
        n_root: idx.len() as f64,
        rng,
        importance: vec![0.0; d.n_features()],
        scratch: Vec::with_capacity(n),
    };
    let root = b.build(&mut idx, 0);
    Tree {
        root,
        importance: b.importance,
    }
}

/// Fit a random forest or extra-trees ensemble. Tree `i` uses the stream
/// `derive(seed, i)`, so the result is independent of worker count.
pub fn fit_tree_ensemble(d: &Dataset, params: &ForestParams) -> Result<Forest> {
    d.require_both_classes()?;
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    let f = d.n_features();
    let max_features = params
        .max_features
        .unwrap_or_else(|| ((f as f64).sqrt().floor() as usize).max(1))
        .clamp(1, f.max(1));
    let keys = d.feature_keys();
    let trees = exec::map_range(params.n_trees, params.jobs, |t| {
        fit_tree(d, &keys, params, max_features, seed::derive(params.seed, t as u64))
    });
    Ok(Forest {
        kind: params.kind,
        params: params.clone(),
        n_features: f,
        trees,
    })
}

/// Mean over trees of the total weighted Gini decrease per feature,
/// normalized to unit sum.
pub fn impurity_importance(m: &super::FittedModel) -> Result<ImportanceVector> {
    let super::FittedModel::Forest(forest) = m else {
        return Err(Error::ImportanceMismatch {
            family: m.family().name(),
            importance: "fi",
        });
    };
    let mut total = vec![0.0; forest.n_features];
    for t in &forest.trees {
        for (acc, v) in total.iter_mut().zip(&t.importance) {
            *acc += v;
        }
    }
    let n = forest.trees.len().max(1) as f64;
    Ok(ImportanceVector::normalized(total.into_iter().map(|v| v / n).collect()))
}
