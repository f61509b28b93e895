use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, SparseRow};

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub class_log_prior: Vec<f64>,
    /// `feature_log_prob[c][j] = ln((N_cj + alpha) / (N_c + alpha * V))`.
    pub feature_log_prob: Vec<Vec<f64>>,
}

impl NaiveBayes {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, alpha: f64) -> Self {
        let v = x.n_cols;
        let mut counts = vec![vec![0.0; v]; n_classes];
        let mut docs = vec![0usize; n_classes];
        for (row, &c) in x.rows.iter().zip(y) {
            docs[c] += 1;
            for (j, val) in row.iter() {
                counts[c][j] += val;
            }
        }
        let n = y.len() as f64;
        let class_log_prior = docs
            .iter()
            .map(|&d| if d == 0 { f64::NEG_INFINITY } else { (d as f64 / n).ln() })
            .collect();
        let feature_log_prob = counts
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum::<f64>() + alpha * v as f64;
                row.into_iter().map(|c| ((c + alpha) / total).ln()).collect()
            })
            .collect();
        NaiveBayes {
            class_log_prior,
            feature_log_prob,
        }
    }

    /// Joint log-likelihood per class.
    pub fn joint_log_likelihood(&self, row: &SparseRow) -> Vec<f64> {
        self.class_log_prior
            .iter()
            .zip(&self.feature_log_prob)
            .map(|(prior, logp)| prior + row.dot_dense(logp))
            .collect()
    }
}
