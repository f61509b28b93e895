use serde::{Deserialize, Serialize};

use crate::features::{FeatureMatrix, SparseRow};

/// Exact k-nearest-neighbour majority vote (Euclidean distance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub rows: Vec<SparseRow>,
    pub labels: Vec<usize>,
}

impl Knn {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, k: usize) -> Self {
        Knn {
            k,
            n_classes,
            rows: x.rows.clone(),
            labels: y.to_vec(),
        }
    }

    /// Neighbour indices, nearest first; distance ties go to the lower training index.
    pub fn neighbors(&self, row: &SparseRow) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (row.dist2(r), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Vote fractions per class.
    pub fn votes(&self, row: &SparseRow) -> Vec<f64> {
        let nn = self.neighbors(row);
        let mut v = vec![0.0; self.n_classes];
        for i in &nn {
            v[self.labels[*i]] += 1.0;
        }
        let total = nn.len().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= total);
        v
    }
}
