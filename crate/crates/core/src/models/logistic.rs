use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SparseRow};

/// Multinomial logistic regression. Parameters are laid out as `K * V`
/// row-major weights followed by `K` intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub n_classes: usize,
    pub n_features: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTrace {
    pub losses: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    pub final_grad_inf_norm: f64,
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn logits(params: &[f64], k: usize, v: usize, row: &SparseRow) -> Vec<f64> {
    (0..k)
        .map(|c| row.dot_dense(&params[c * v..(c + 1) * v]) + params[k * v + c])
        .collect()
}

/// Mean cross-entropy plus `lambda / (2n) * ||W||^2` (intercepts unpenalized),
/// and its gradient.
pub fn loss_and_gradient(
    params: &[f64],
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let (k, v) = (n_classes, x.n_cols);
    let n = y.len() as f64;
    let chunk = 256;
    let (mut loss, mut grad) = x
        .rows
        .par_chunks(chunk)
        .zip(y.par_chunks(chunk))
        .map(|(rows, ys)| {
            let mut g = vec![0.0; k * v + k];
            let mut l = 0.0;
            for (row, &yi) in rows.iter().zip(ys) {
                let mut p = logits(params, k, v, row);
                let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + p.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                l += lse - p[yi];
                softmax_in_place(&mut p);
                p[yi] -= 1.0;
                for c in 0..k {
                    let d = p[c];
                    if d == 0.0 {
                        continue;
                    }
                    for (j, xv) in row.iter() {
                        g[c * v + j] += d * xv;
                    }
                    g[k * v + c] += d;
                }
            }
            (l, g)
        })
        .reduce(
            || (0.0, vec![0.0; k * v + k]),
            |(la, mut ga), (lb, gb)| {
                for (a, b) in ga.iter_mut().zip(gb) {
                    *a += b;
                }
                (la + lb, ga)
            },
        );
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    let mut penalty = 0.0;
    for (i, w) in params[..k * v].iter().enumerate() {
        penalty += w * w;
        grad[i] += lambda / n * w;
    }
    loss += lambda / (2.0 * n) * penalty;
    (loss, grad)
}

impl Logistic {
    /// Full-batch gradient descent with Armijo backtracking.
    pub fn fit(
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        c: f64,
        max_epochs: usize,
        tol: f64,
    ) -> Result<(Self, LogisticTrace)> {
        let lambda = 1.0 / c;
        let mut params = vec![0.0; n_classes * x.n_cols + n_classes];
        let (mut loss, mut grad) = loss_and_gradient(&params, x, y, n_classes, lambda);
        let mut losses = vec![loss];
        let mut step = 1.0;
        let mut epochs = 0;
        let inf_norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        while epochs < max_epochs && inf_norm(&grad) >= tol {
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            step *= 2.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                let (l, g) = loss_and_gradient(&trial, x, y, n_classes, lambda);
                if l <= loss - 1e-4 * step * g2 {
                    accepted = Some((trial, l, g));
                    break;
                }
                step /= 2.0;
            }
            let Some((p, l, g)) = accepted else {
                break;
            };
            if l > loss + 1e-12 * loss.abs().max(1.0) {
                return Err(Error::Invalid(format!(
                    "logistic regression loss increased at epoch {epochs}: {loss} -> {l}"
                )));
            }
            params = p;
            loss = l;
            grad = g;
            losses.push(loss);
            epochs += 1;
        }
        let final_grad_inf_norm = inf_norm(&grad);
        Ok((
            Logistic {
                n_classes,
                n_features: x.n_cols,
                params,
            },
            LogisticTrace {
                losses,
                epochs,
                converged: final_grad_inf_norm < tol,
                final_grad_inf_norm,
            },
        ))
    }

    pub fn logits(&self, row: &SparseRow) -> Vec<f64> {
        logits(&self.params, self.n_classes, self.n_features, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng as _;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = substream(5, "grad");
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random() }).collect())
            .collect();
        let x = FeatureMatrix::from_dense(&rows);
        let y = [0, 1, 2, 1, 0];
        let params: Vec<f64> = (0..3 * 8 + 3).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, grad) = loss_and_gradient(&params, &x, &y, 3, 0.7);
        let h = 1e-5;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (loss_and_gradient(&up, &x, &y, 3, 0.7).0
                - loss_and_gradient(&down, &x, &y, 3, 0.7).0)
                / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-5 || (numeric - grad[i]).abs() < 1e-10, "param {i}: {numeric} vs {}", grad[i]);
        }
    }

    #[test]
    fn losses_never_increase() {
        let x = FeatureMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.9, 0.2], vec![0.1, 0.8]]);
        let (_, trace) = Logistic::fit(&x, &[0, 1, 0, 1], 2, 1.0, 1000, 1e-6).unwrap();
        assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.converged);
    }
}
