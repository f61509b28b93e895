use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_classifier, fit_regressor, FeatureSampling, Tree, TreeParams};
use super::argmax;
use crate::features::{FeatureMatrix, SparseRow};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        n_trees: usize,
        bootstrap: bool,
        params: TreeParams,
        seed: u64,
    ) -> Self {
        let n = y.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, &format!("forest/tree/{t}"));
                let samples: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                fit_classifier(x, y, n_classes, samples, params, &mut rng)
            })
            .collect();
        Forest { n_classes, trees }
    }

    /// Fraction of trees voting for each class.
    pub fn votes(&self, row: &SparseRow) -> Vec<f64> {
        let mut v = vec![0.0; self.n_classes];
        for t in &self.trees {
            v[argmax(t.leaf_value(row))] += 1.0;
        }
        let n = self.trees.len().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

/// One-vs-rest gradient boosting on the binomial log-loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosting {
    pub learning_rate: f64,
    /// Prior log-odds per class.
    pub init: Vec<f64>,
    pub heads: Vec<Vec<Tree>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Boosting {
    pub fn fit(
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        n_rounds: usize,
        max_depth: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Self {
        let n = y.len();
        let params = TreeParams {
            max_depth: Some(max_depth),
            min_samples_split: 2,
            features: FeatureSampling::All,
        };
        let fitted: Vec<(f64, Vec<Tree>)> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let target: Vec<f64> = y.iter().map(|&c| if c == k { 1.0 } else { 0.0 }).collect();
                let p = (target.iter().sum::<f64>() / n as f64).clamp(1e-12, 1.0 - 1e-12);
                let init = (p / (1.0 - p)).ln();
                let mut f = vec![init; n];
                let mut rng = substream(seed, &format!("boosting/{k}"));
                let mut trees = Vec::with_capacity(n_rounds);
                for _ in 0..n_rounds {
                    let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
                    let residual: Vec<f64> = target.iter().zip(&prob).map(|(t, p)| t - p).collect();
                    let newton = |s: &[usize]| {
                        let num: f64 = s.iter().map(|&i| residual[i]).sum();
                        let den: f64 = s.iter().map(|&i| prob[i] * (1.0 - prob[i])).sum();
                        if den.abs() < 1e-12 {
                            0.0
                        } else {
                            num / den
                        }
                    };
                    let tree = fit_regressor(x, &residual, (0..n).collect(), params, &newton, &mut rng);
                    for (fi, row) in f.iter_mut().zip(&x.rows) {
                        *fi += learning_rate * tree.leaf_value(row)[0];
                    }
                    trees.push(tree);
                }
                (init, trees)
            })
            .collect();
        let (init, heads) = fitted.into_iter().unzip();
        Boosting {
            learning_rate,
            init,
            heads,
        }
    }

    pub fn raw_scores(&self, row: &SparseRow) -> Vec<f64> {
        self.init
            .iter()
            .zip(&self.heads)
            .map(|(init, trees)| {
                init + self.learning_rate * trees.iter().map(|t| t.leaf_value(row)[0]).sum::<f64>()
            })
            .collect()
    }

    /// Per-head sigmoid probabilities normalised to sum to one.
    pub fn proba(&self, row: &SparseRow) -> Vec<f64> {
        let mut p: Vec<f64> = self.raw_scores(row).into_iter().map(sigmoid).collect();
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        }
        p
    }
}
