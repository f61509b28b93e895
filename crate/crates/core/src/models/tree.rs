//! CART trees over sparse rows: Gini classification trees and MSE regression
//! trees.
//!
//! Split search gathers the nonzero entries of the node's samples per column,
//! so a column that is all-zero inside a node costs nothing. Implicit zeros
//! form one group at value 0.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, SparseRow};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureSampling {
    All,
    /// Examine `ceil(sqrt(V))` randomly drawn columns per split.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features: FeatureSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Class weights (classification) or a single output value (regression).
        value: Vec<f64>,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &SparseRow) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Returns the leaf index each sample lands in.
    pub fn leaf_index(&self, row: &SparseRow) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Node statistics with additive updates.
trait Stats: Clone {
    fn add(&mut self, sample: usize, sign: f64);
    /// Impurity times weight, so children compare by plain sums.
    fn weighted_impurity(&self) -> f64;
    fn weight(&self) -> f64;
    fn minus(&self, other: &Self) -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn is_pure(&self) -> bool;
}

#[derive(Clone)]
struct GiniStats<'a> {
    y: &'a [usize],
    counts: Vec<f64>,
    total: f64,
}

impl Stats for GiniStats<'_> {
    fn add(&mut self, sample: usize, sign: f64) {
        self.counts[self.y[sample]] += sign;
        self.total += sign;
    }

    fn weighted_impurity(&self) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        self.total - self.counts.iter().map(|c| c * c).sum::<f64>() / self.total
    }

    fn weight(&self) -> f64 {
        self.total
    }

    fn minus(&self, other: &Self) -> Self {
        GiniStats {
            y: self.y,
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a - b)
                .collect(),
            total: self.total - other.total,
        }
    }

    fn plus(&self, other: &Self) -> Self {
        GiniStats {
            y: self.y,
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            total: self.total + other.total,
        }
    }

    fn is_pure(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0.5).count() <= 1
    }
}

#[derive(Clone)]
struct MseStats<'a> {
    target: &'a [f64],
    sum: f64,
    sum_sq: f64,
    n: f64,
}

impl Stats for MseStats<'_> {
    fn add(&mut self, sample: usize, sign: f64) {
        let t = self.target[sample];
        self.sum += sign * t;
        self.sum_sq += sign * t * t;
        self.n += sign;
    }

    fn weighted_impurity(&self) -> f64 {
        if self.n <= 0.0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.n).max(0.0)
    }

    fn weight(&self) -> f64 {
        self.n
    }

    fn minus(&self, other: &Self) -> Self {
        MseStats {
            target: self.target,
            sum: self.sum - other.sum,
            sum_sq: self.sum_sq - other.sum_sq,
            n: self.n - other.n,
        }
    }

    fn plus(&self, other: &Self) -> Self {
        MseStats {
            target: self.target,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            n: self.n + other.n,
        }
    }

    fn is_pure(&self) -> bool {
        self.weighted_impurity() <= 1e-14 * self.n.max(1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    feature: u32,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(b) => {
                if (self.score - b.score).abs() <= 1e-12 * (1.0 + b.score.abs()) {
                    (self.feature, self.threshold) < (b.feature, b.threshold)
                } else {
                    self.score < b.score
                }
            }
        }
    }
}

/// Reusable per-column buckets of `(value, sample)` pairs.
struct Gather {
    buckets: Vec<Vec<(f64, u32)>>,
    touched: Vec<u32>,
}

impl Gather {
    fn new(n_cols: usize) -> Self {
        Gather {
            buckets: vec![Vec::new(); n_cols],
            touched: Vec::new(),
        }
    }

    fn fill(&mut self, rows: &[SparseRow], samples: &[usize]) {
        for &c in &self.touched {
            self.buckets[c as usize].clear();
        }
        self.touched.clear();
        for &s in samples {
            for (c, v) in rows[s].iter() {
                let bucket = &mut self.buckets[c];
                if bucket.is_empty() {
                    self.touched.push(c as u32);
                }
                bucket.push((v, s as u32));
            }
        }
        self.touched.sort_unstable();
    }
}

struct Builder<'a, S: Stats> {
    rows: &'a [SparseRow],
    params: TreeParams,
    n_cols: usize,
    gather: Gather,
    leaf: &'a dyn Fn(&[usize]) -> Vec<f64>,
    empty: S,
}

impl<'a, S: Stats> Builder<'a, S> {
    fn stats_of(&self, samples: &[usize]) -> S {
        let mut s = self.empty.clone();
        for &i in samples {
            s.add(i, 1.0);
        }
        s
    }

    /// Best split of `column` given its gathered nonzeros (sorted in place).
    fn scan_column(&self, col: u32, entries: &mut [(f64, u32)], node: &S) -> Option<Candidate> {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nonzero = self.empty.clone();
        for &(_, s) in entries.iter() {
            nonzero.add(s as usize, 1.0);
        }
        let zeros = node.minus(&nonzero);
        let zero_at = if zeros.weight() > 0.5 {
            Some(entries.partition_point(|e| e.0 < 0.0))
        } else {
            None
        };

        let mut best: Option<Candidate> = None;
        let mut left = self.empty.clone();
        let mut prev: Option<f64> = None;
        // Step `k` visits the zero block (if it sits before entry `k`) and then entry `k`.
        for k in 0..=entries.len() {
            let zero = (zero_at == Some(k)).then_some(None);
            let entry = entries.get(k).copied().map(Some);
            for g in [zero, entry].into_iter().flatten() {
                let value = g.map_or(0.0, |e| e.0);
                if let Some(p) = prev {
                    if value > p && left.weight() > 0.5 && node.weight() - left.weight() > 0.5 {
                        let right = node.minus(&left);
                        let cand = Candidate {
                            score: left.weighted_impurity() + right.weighted_impurity(),
                            feature: col,
                            threshold: midpoint(p, value),
                        };
                        if cand.beats(&best) {
                            best = Some(cand);
                        }
                    }
                }
                match g {
                    None => left = left.plus(&zeros),
                    Some((_, s)) => left.add(s as usize, 1.0),
                }
                prev = Some(value);
            }
        }
        best
    }

    fn best_split(&mut self, samples: &[usize], node: &S, rng: &mut Rng) -> Option<Candidate> {
        self.gather.fill(self.rows, samples);
        let touched = std::mem::take(&mut self.gather.touched);
        let candidates: Vec<u32> = match self.params.features {
            FeatureSampling::All => touched.clone(),
            FeatureSampling::Sqrt => {
                let mtry = (self.n_cols as f64).sqrt().ceil() as usize;
                let varying: Vec<u32> = touched
                    .iter()
                    .copied()
                    .filter(|&c| self.varies(c, samples.len()))
                    .collect();
                sample_like_sequential_draws(&varying, self.n_cols, mtry, rng)
            }
        };
        let mut best: Option<Candidate> = None;
        for col in candidates {
            let mut entries = std::mem::take(&mut self.gather.buckets[col as usize]);
            if let Some(c) = self.scan_column(col, &mut entries, node) {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
            self.gather.buckets[col as usize] = entries;
        }
        self.gather.touched = touched;
        best
    }

    /// A gathered column is constant in the node when every sample has the
    /// same nonzero value.
    fn varies(&self, col: u32, n_samples: usize) -> bool {
        let b = &self.gather.buckets[col as usize];
        if b.len() < n_samples {
            return true;
        }
        let first = b[0].0;
        b.iter().any(|e| e.0 != first)
    }

    fn build(mut self, samples: Vec<usize>, rng: &mut Rng) -> Tree {
        let mut nodes: Vec<Node> = vec![Node::Leaf { value: Vec::new() }];
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, samples, 0)];
        while let Some((slot, samples, depth)) = stack.pop() {
            let stats = self.stats_of(&samples);
            let can_split = samples.len() >= self.params.min_samples_split
                && self.params.max_depth.is_none_or(|d| depth < d)
                && !stats.is_pure();
            let split = if can_split {
                self.best_split(&samples, &stats, rng)
            } else {
                None
            };
            match split {
                None => nodes[slot] = Node::Leaf { value: (self.leaf)(&samples) },
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .iter()
                        .partition(|&&s| self.rows[s].get(c.feature as usize) <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: Vec::new() });
                    nodes.push(Node::Leaf { value: Vec::new() });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    // Guard against rounding up onto `b`.
    if m >= b {
        a
    } else {
        m
    }
}

/// Chooses which varying columns a split examines when columns are drawn one
/// at a time without replacement from all `n_cols` until at least `mtry` have
/// been drawn and at least one of them varies. Constant columns never yield a
/// split, so only the varying ones are returned.
fn sample_like_sequential_draws(varying: &[u32], n_cols: usize, mtry: usize, rng: &mut Rng) -> Vec<u32> {
    if varying.is_empty() {
        return Vec::new();
    }
    // Varying columns among the first `mtry` draws: hypergeometric.
    let mut good = varying.len();
    let mut total = n_cols.max(varying.len());
    let mut hits = 0;
    for _ in 0..mtry.min(total) {
        if rng.random_range(0..total) < good {
            hits += 1;
            good -= 1;
        }
        total -= 1;
    }
    let hits = hits.max(1);
    let mut pool = varying.to_vec();
    for i in 0..hits {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(hits);
    pool
}

/// Gini classification tree. Leaves hold class counts.
pub fn fit_classifier(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    samples: Vec<usize>,
    params: TreeParams,
    rng: &mut Rng,
) -> Tree {
    let leaf = |s: &[usize]| {
        let mut counts = vec![0.0; n_classes];
        for &i in s {
            counts[y[i]] += 1.0;
        }
        counts
    };
    let builder = Builder {
        rows: &x.rows,
        params,
        n_cols: x.n_cols,
        gather: Gather::new(x.n_cols),
        leaf: &leaf,
        empty: GiniStats {
            y,
            counts: vec![0.0; n_classes],
            total: 0.0,
        },
    };
    builder.build(samples, rng)
}

/// Least-squares regression tree on `target`. Leaves hold `leaf_value(samples)`.
pub fn fit_regressor(
    x: &FeatureMatrix,
    target: &[f64],
    samples: Vec<usize>,
    params: TreeParams,
    leaf_value: &dyn Fn(&[usize]) -> f64,
    rng: &mut Rng,
) -> Tree {
    let leaf = |s: &[usize]| vec![leaf_value(s)];
    let builder = Builder {
        rows: &x.rows,
        params,
        n_cols: x.n_cols,
        gather: Gather::new(x.n_cols),
        leaf: &leaf,
        empty: MseStats {
            target,
            sum: 0.0,
            sum_sq: 0.0,
            n: 0.0,
        },
    };
    builder.build(samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    const FULL: TreeParams = TreeParams {
        max_depth: None,
        min_samples_split: 2,
        features: FeatureSampling::All,
    };

    fn fit(rows: &[Vec<f64>], y: &[usize]) -> Tree {
        let x = FeatureMatrix::from_dense(rows);
        fit_classifier(&x, y, 2, (0..y.len()).collect(), FULL, &mut substream(0, "t"))
    }

    fn predict(t: &Tree, row: &[f64]) -> usize {
        let v = t.leaf_value(&SparseRow::from_dense(row));
        if v[1] > v[0] {
            1
        } else {
            0
        }
    }

    #[test]
    fn memorizes_separable_points() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.2, 0.9], vec![0.9, 0.3]];
        let y = [0, 1, 0, 1];
        let t = fit(&rows, &y);
        for (r, &c) in rows.iter().zip(&y) {
            assert_eq!(predict(&t, r), c);
        }
    }

    #[test]
    fn zero_block_and_negatives_are_ordered() {
        let rows = vec![vec![-2.0], vec![0.0], vec![0.0], vec![3.0]];
        let y = [1, 0, 0, 1];
        let t = fit(&rows, &y);
        for (r, &c) in rows.iter().zip(&y) {
            assert_eq!(predict(&t, r), c);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn ties_pick_lowest_feature() {
        // Both columns separate perfectly; column 0 wins.
        let rows = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        let t = fit(&rows, &[1, 0]);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn identical_rows_with_mixed_labels_stay_a_leaf() {
        let t = fit(&[vec![1.0], vec![1.0]], &[0, 1]);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn regression_depth_limit() {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let target: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let x = FeatureMatrix::from_dense(&rows);
        let mean = |s: &[usize]| s.iter().map(|&i| target[i]).sum::<f64>() / s.len() as f64;
        let params = TreeParams {
            max_depth: Some(3),
            ..FULL
        };
        let t = fit_regressor(&x, &target, (0..16).collect(), params, &mean, &mut substream(0, "r"));
        assert_eq!(t.depth(), 3);
        assert_eq!(t.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count(), 8);
    }

    #[test]
    fn sequential_draws_return_at_least_one_varying_column() {
        let mut rng = substream(1, "d");
        for _ in 0..100 {
            let got = sample_like_sequential_draws(&[5, 9], 3000, 55, &mut rng);
            assert!(!got.is_empty() && got.len() <= 2);
        }
        let all = sample_like_sequential_draws(&[1, 2, 3], 3, 3, &mut rng);
        assert_eq!(all.len(), 3);
    }
}
