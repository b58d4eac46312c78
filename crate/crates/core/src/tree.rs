//! Bagged CART trees and the ±1 prediction matrix they produce.
//!
//! Trees split numeric features at midpoints between consecutive distinct
//! sorted values and pick the split with the lowest weighted Gini impurity.
//! Candidate splits are compared in exact integer arithmetic, so ties resolve
//! deterministically to the lowest feature index and then the lowest threshold.
//! One-hot indicator columns are ordinary numeric columns with a 0.5 split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
}

fn default_min_leaf() -> usize {
    1
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        label: i8,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Arena of nodes; index 0 is the root.
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub config: TreeConfig,
    pub training_seed: u64,
}

impl DecisionTree {
    pub fn predict_row(&self, x: &[f64]) -> i8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { label } => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => max = max.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Counts {
    pos: u64,
    neg: u64,
}

impl Counts {
    fn n(&self) -> u64 {
        self.pos + self.neg
    }

    /// `(pos² + neg²)`; weighted Gini of a node is `n − sq/n`.
    fn sq(&self) -> u64 {
        self.pos * self.pos + self.neg * self.neg
    }

    fn majority(&self) -> i8 {
        if self.pos >= self.neg {
            POSITIVE
        } else {
            NEGATIVE
        }
    }
}

/// `sq_l/n_l + sq_r/n_r` as an exact fraction; larger means purer children.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(l: Counts, r: Counts) -> Self {
        let (nl, nr) = (l.n() as u128, r.n() as u128);
        Self {
            num: l.sq() as u128 * nr + r.sq() as u128 * nl,
            den: nl * nr,
        }
    }

    fn better_than(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: SplitScore,
}

fn count(data: &Dataset, rows: &[usize]) -> Counts {
    let pos = rows.iter().filter(|&&i| data.labels[i] == POSITIVE).count() as u64;
    Counts {
        pos,
        neg: rows.len() as u64 - pos,
    }
}

fn best_split(data: &Dataset, rows: &[usize], total: Counts, min_leaf: usize) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    let mut pairs: Vec<(f64, i8)> = Vec::with_capacity(rows.len());
    for feature in 0..data.n_features() {
        pairs.clear();
        pairs.extend(rows.iter().map(|&i| (data.row(i)[feature], data.labels[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = Counts { pos: 0, neg: 0 };
        for k in 0..pairs.len() - 1 {
            if pairs[k].1 == POSITIVE {
                left.pos += 1;
            } else {
                left.neg += 1;
            }
            let (v, next) = (pairs[k].0, pairs[k + 1].0);
            if v == next {
                continue;
            }
            let n_left = k + 1;
            if n_left < min_leaf || pairs.len() - n_left < min_leaf {
                continue;
            }
            let right = Counts {
                pos: total.pos - left.pos,
                neg: total.neg - left.neg,
            };
            let score = SplitScore::new(left, right);
            let threshold = v + (next - v) / 2.0;
            // strict improvement keeps the earliest feature and threshold on ties
            if best.as_ref().map_or(true, |b| score.better_than(&b.score)) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

/// Grows one tree on `sample_indices` (duplicates allowed, as produced by a
/// bootstrap). Deterministic in its inputs; `seed` is recorded only.
pub fn train_tree(
    train: &Dataset,
    sample_indices: &[usize],
    config: &TreeConfig,
    seed: u64,
) -> Result<DecisionTree> {
    if sample_indices.is_empty() {
        return Err(Error::EmptySample);
    }
    let min_leaf = config.min_leaf.max(1);
    let mut nodes = vec![Node::Leaf { label: POSITIVE }];
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, sample_indices.to_vec(), 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let counts = count(train, &rows);
        let stop = counts.pos == 0
            || counts.neg == 0
            || config.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < 2 * min_leaf;
        let split = if stop {
            None
        } else {
            best_split(train, &rows, counts, min_leaf)
        };
        match split {
            None => nodes[slot] = Node::Leaf {
                label: counts.majority(),
            },
            Some(c) => {
                let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| train.row(i)[c.feature] <= c.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { label: POSITIVE });
                nodes.push(Node::Leaf { label: POSITIVE });
                nodes[slot] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                stack.push((right, r_rows, depth + 1));
                stack.push((left, l_rows, depth + 1));
            }
        }
    }
    Ok(DecisionTree {
        nodes,
        n_features: train.n_features(),
        config: *config,
        training_seed: seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPool {
    pub trees: Vec<DecisionTree>,
    pub bag_seed: u64,
}

impl ClassifierPool {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }
}

/// Seed for the `i`-th bag (SplitMix64 finalizer over `bag_seed` and `i`).
pub fn tree_seed(bag_seed: u64, i: usize) -> u64 {
    let mut z = bag_seed
        .wrapping_add((i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform with-replacement sample of `n` row indices out of `0..n`.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Trains `l` trees in parallel, each on its own bootstrap of `train`.
/// Seeds are derived up front so the pool does not depend on scheduling.
pub fn train_pool(train: &Dataset, l: usize, config: &TreeConfig, bag_seed: u64) -> Result<ClassifierPool> {
    if l == 0 {
        return Err(Error::InvalidParams("pool size must be at least 1".into()));
    }
    let n = train.n_rows();
    let trees = (0..l)
        .into_par_iter()
        .map(|i| {
            let seed = tree_seed(bag_seed, i);
            train_tree(train, &bootstrap_indices(n, seed), config, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassifierPool { trees, bag_seed })
}

/// The `m × l` vote matrix; every entry is -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
}

impl PredictionMatrix {
    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            if let Some(bad) = r.iter().find(|&&v| v != POSITIVE && v != NEGATIVE) {
                return Err(Error::InvalidParams(format!("vote {bad} is not ±1")));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, s: usize) -> &[i8] {
        &self.values[s * self.cols..(s + 1) * self.cols]
    }

    pub fn get(&self, s: usize, r: usize) -> i8 {
        self.values[s * self.cols + r]
    }

    pub fn column(&self, r: usize) -> Vec<i8> {
        (0..self.rows).map(|s| self.get(s, r)).collect()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for s in 0..self.rows {
            let row = self.row(s);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            values,
        }
    }

    /// Keeps the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &s in rows {
            values.extend_from_slice(self.row(s));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            values,
        }
    }

    /// Row-wise concatenation.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: other.cols,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            values,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_vec(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape is consistent")
    }
}

/// Entry `(s, r)` is tree `r`'s vote on row `s`. An empty `data` gives a
/// `0 × l` matrix.
pub fn predict_matrix(pool: &ClassifierPool, data: &Dataset) -> Result<PredictionMatrix> {
    let l = pool.len();
    if data.n_rows() > 0 && data.n_features() != pool.n_features() {
        return Err(Error::DimensionMismatch {
            expected: pool.n_features(),
            actual: data.n_features(),
        });
    }
    let m = data.n_rows();
    if m == 0 {
        return Ok(PredictionMatrix::empty(l));
    }
    let values: Vec<i8> = (0..m)
        .into_par_iter()
        .flat_map_iter(|s| {
            let x = data.row(s);
            pool.trees.iter().map(move |t| t.predict_row(x))
        })
        .collect();
    Ok(PredictionMatrix {
        rows: m,
        cols: l,
        values,
    })
}
