use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, SparseRow};

/// One-vs-rest linear SVM trained on the primal hinge objective
/// `lambda/2 ||w||^2 + mean(max(0, 1 - y (w.x + b)))` with `lambda = 1 / (C n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Deterministic full-batch subgradient descent, step `eta0 / sqrt(t)`,
/// returning the average of the iterates from the second half of the run.
fn fit_binary(x: &FeatureMatrix, positive: &[bool], c: f64, epochs: usize) -> (Vec<f64>, f64) {
    let v = x.n_cols;
    let n = positive.len() as f64;
    let lambda = 1.0 / (c * n);
    let eta0 = 1.0;
    let mut w = vec![0.0; v];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; v];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    for t in 1..=epochs {
        let mut g = vec![0.0; v];
        let mut gb = 0.0;
        for (row, &pos) in x.rows.iter().zip(positive) {
            let yi = if pos { 1.0 } else { -1.0 };
            if yi * (row.dot_dense(&w) + b) < 1.0 {
                for (j, xv) in row.iter() {
                    g[j] -= yi * xv;
                }
                gb -= yi;
            }
        }
        let eta = eta0 / (t as f64).sqrt();
        for j in 0..v {
            w[j] -= eta * (g[j] / n + lambda * w[j]);
        }
        b -= eta * gb / n;
        if 2 * t > epochs {
            averaged += 1;
            let a = 1.0 / averaged as f64;
            for j in 0..v {
                avg_w[j] += a * (w[j] - avg_w[j]);
            }
            avg_b += a * (b - avg_b);
        }
    }
    (avg_w, avg_b)
}

impl LinearSvm {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, c: f64, epochs: usize) -> Self {
        let heads: Vec<(Vec<f64>, f64)> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let positive: Vec<bool> = y.iter().map(|&c| c == k).collect();
                fit_binary(x, &positive, c, epochs)
            })
            .collect();
        let (weights, bias) = heads.into_iter().unzip();
        LinearSvm { weights, bias }
    }

    pub fn margins(&self, row: &SparseRow) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| row.dot_dense(w) + b)
            .collect()
    }
}
