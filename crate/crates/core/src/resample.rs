//! SMOTE oversampling of minority classes. Apply to training data only.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SparseRow};
use crate::rng;

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTarget {
    pub class: usize,
    pub current: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub targets: Vec<ClassTarget>,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl ResamplePlan {
    /// Equalize every class to the majority count.
    pub fn equalize(y: &[usize], k_neighbors: usize, seed: u64) -> Result<Self> {
        if k_neighbors == 0 {
            return Err(Error::Invalid("k_neighbors must be at least 1".into()));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in y {
            *counts.entry(c).or_insert(0) += 1;
        }
        let majority = counts.values().copied().max().unwrap_or(0);
        Ok(ResamplePlan {
            targets: counts
                .into_iter()
                .map(|(class, current)| ClassTarget {
                    class,
                    current,
                    target: majority,
                })
                .collect(),
            k_neighbors,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub x: FeatureMatrix,
    pub y: Vec<usize>,
    /// For each synthetic row (in output order after the originals), the two
    /// original rows it interpolates between.
    pub parents: Vec<(usize, usize)>,
    pub plan: ResamplePlan,
}

/// Oversamples every minority class up to the majority count.
///
/// Originals come first and unchanged; synthetic rows follow grouped by class.
/// Each synthetic row is `x + u * (z - x)` for a random class member `x`, one
/// of its `min(k, n_c - 1)` nearest same-class neighbors `z` (Euclidean, ties
/// to the lower row index) and `u ~ U[0, 1)`.
pub fn smote(x: &FeatureMatrix, y: &[usize], k: usize, seed: u64) -> Result<SmoteOutput> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let plan = ResamplePlan::equalize(y, k, seed)?;
    for t in &plan.targets {
        if t.current < t.target && t.current < 2 {
            return Err(Error::TooFewSamples {
                class: t.class.to_string(),
                count: t.current,
            });
        }
    }

    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let mut parents = Vec::new();
    for t in &plan.targets {
        let deficit = t.target - t.current;
        if deficit == 0 {
            continue;
        }
        let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == t.class).collect();
        let k_eff = k.min(members.len() - 1);
        let mut rng = rng::substream(seed, &format!("smote/{}", t.class));
        let mut neighbor_cache: HashMap<usize, Vec<usize>> = HashMap::new();
        for n in 0..deficit {
            let a = members[rng.random_range(0..members.len())];
            let neighbors = neighbor_cache
                .entry(a)
                .or_insert_with(|| nearest(x, &members, a, k_eff));
            let b = neighbors[rng.random_range(0..neighbors.len())];
            let u: f64 = rng.random();
            out_x.rows.push(interpolate(&x.rows[a], &x.rows[b], u));
            out_x.row_ids.push(format!("smote-{}-{n}", t.class));
            out_y.push(t.class);
            parents.push((a, b));
        }
    }
    Ok(SmoteOutput {
        x: out_x,
        y: out_y,
        parents,
        plan,
    })
}

fn nearest(x: &FeatureMatrix, members: &[usize], a: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&m| m != a)
        .map(|&m| (x.rows[a].dist2(&x.rows[m]), m))
        .collect();
    d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    d.into_iter().take(k).map(|(_, m)| m).collect()
}

fn interpolate(a: &SparseRow, b: &SparseRow, u: f64) -> SparseRow {
    let (mut i, mut j) = (0, 0);
    let mut row = SparseRow::default();
    while i < a.indices.len() || j < b.indices.len() {
        let ia = a.indices.get(i).copied().unwrap_or(u32::MAX);
        let ib = b.indices.get(j).copied().unwrap_or(u32::MAX);
        let (col, va, vb) = if ia == ib {
            i += 1;
            j += 1;
            (ia, a.values[i - 1], b.values[j - 1])
        } else if ia < ib {
            i += 1;
            (ia, a.values[i - 1], 0.0)
        } else {
            j += 1;
            (ib, 0.0, b.values[j - 1])
        };
        let v = va + u * (vb - va);
        if v != 0.0 {
            row.indices.push(col);
            row.values.push(v);
        }
    }
    row
}
