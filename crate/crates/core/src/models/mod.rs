//! Seven classifiers behind one train/predict interface.

mod ensemble;
mod knn;
mod logistic;
mod naive_bayes;
mod svm;
pub mod tree;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ensemble::{Boosting, Forest};
pub use knn::Knn;
pub use logistic::{loss_and_gradient, Logistic, LogisticTrace};
pub use naive_bayes::NaiveBayes;
pub use svm::LinearSvm;
use tree::{FeatureSampling, Tree, TreeParams};

use crate::corpus::LabelEncoding;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    NaiveBayes,
    LogisticRegression,
    DecisionTree,
    RandomForest,
    Svm,
    GradientBoosting,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::NaiveBayes,
        ModelKind::LogisticRegression,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Svm,
        ModelKind::GradientBoosting,
        ModelKind::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive-bayes",
            ModelKind::LogisticRegression => "logistic-regression",
            ModelKind::DecisionTree => "decision-tree",
            ModelKind::RandomForest => "random-forest",
            ModelKind::Svm => "svm",
            ModelKind::GradientBoosting => "gradient-boosting",
            ModelKind::Knn => "knn",
        }
    }

    /// Whether `predict_proba` is available.
    pub fn has_probabilities(self) -> bool {
        matches!(
            self,
            ModelKind::NaiveBayes
                | ModelKind::LogisticRegression
                | ModelKind::RandomForest
                | ModelKind::GradientBoosting
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let kind = match key.as_str() {
            "naive-bayes" | "nb" => ModelKind::NaiveBayes,
            "logistic-regression" | "lr" => ModelKind::LogisticRegression,
            "decision-tree" | "dt" => ModelKind::DecisionTree,
            "random-forest" | "rf" => ModelKind::RandomForest,
            "svm" => ModelKind::Svm,
            "gradient-boosting" | "gb" => ModelKind::GradientBoosting,
            "knn" => ModelKind::Knn,
            _ => return Err(Error::Invalid(format!("unknown model kind `{s}`"))),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

/// Per-kind hyperparameters. Defaults are the pinned conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Hyperparameters {
    NaiveBayes {
        alpha: f64,
    },
    LogisticRegression {
        c: f64,
        max_epochs: usize,
        tol: f64,
    },
    DecisionTree {
        max_depth: Option<usize>,
        min_samples_split: usize,
    },
    RandomForest {
        n_trees: usize,
        bootstrap: bool,
        max_features: MaxFeatures,
        max_depth: Option<usize>,
        min_samples_split: usize,
    },
    Svm {
        c: f64,
        epochs: usize,
    },
    GradientBoosting {
        n_rounds: usize,
        max_depth: usize,
        learning_rate: f64,
    },
    Knn {
        neighbors: usize,
    },
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::NaiveBayes => Hyperparameters::NaiveBayes { alpha: 1.0 },
            ModelKind::LogisticRegression => Hyperparameters::LogisticRegression {
                c: 1.0,
                max_epochs: 1000,
                tol: 1e-6,
            },
            ModelKind::DecisionTree => Hyperparameters::DecisionTree {
                max_depth: None,
                min_samples_split: 2,
            },
            ModelKind::RandomForest => Hyperparameters::RandomForest {
                n_trees: 100,
                bootstrap: true,
                max_features: MaxFeatures::Sqrt,
                max_depth: None,
                min_samples_split: 2,
            },
            ModelKind::Svm => Hyperparameters::Svm { c: 1.0, epochs: 200 },
            ModelKind::GradientBoosting => Hyperparameters::GradientBoosting {
                n_rounds: 100,
                max_depth: 3,
                learning_rate: 0.1,
            },
            ModelKind::Knn => Hyperparameters::Knn { neighbors: 3 },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::NaiveBayes { .. } => ModelKind::NaiveBayes,
            Hyperparameters::LogisticRegression { .. } => ModelKind::LogisticRegression,
            Hyperparameters::DecisionTree { .. } => ModelKind::DecisionTree,
            Hyperparameters::RandomForest { .. } => ModelKind::RandomForest,
            Hyperparameters::Svm { .. } => ModelKind::Svm,
            Hyperparameters::GradientBoosting { .. } => ModelKind::GradientBoosting,
            Hyperparameters::Knn { .. } => ModelKind::Knn,
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("{}: {m}", self.kind())));
        match *self {
            Hyperparameters::NaiveBayes { alpha } if !(alpha > 0.0) => bad("alpha must be > 0"),
            Hyperparameters::LogisticRegression { c, tol, .. } if !(c > 0.0) || !(tol > 0.0) => {
                bad("C and tol must be > 0")
            }
            Hyperparameters::DecisionTree {
                min_samples_split, ..
            } if min_samples_split < 2 => bad("min_samples_split must be >= 2"),
            Hyperparameters::RandomForest {
                n_trees,
                min_samples_split,
                ..
            } if n_trees == 0 || min_samples_split < 2 => {
                bad("n_trees must be >= 1 and min_samples_split >= 2")
            }
            Hyperparameters::Svm { c, epochs } if !(c > 0.0) || epochs == 0 => {
                bad("C must be > 0 and epochs >= 1")
            }
            Hyperparameters::GradientBoosting {
                max_depth,
                learning_rate,
                ..
            } if max_depth == 0 || !(learning_rate >= 0.0) => {
                bad("max_depth must be >= 1 and learning_rate >= 0")
            }
            Hyperparameters::Knn { neighbors: 0 } => bad("neighbors must be >= 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(hyperparameters: Hyperparameters, seed: u64) -> Result<Self> {
        hyperparameters.validate()?;
        Ok(ModelSpec {
            hyperparameters,
            seed,
        })
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        ModelSpec {
            hyperparameters: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.hyperparameters.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedParams {
    NaiveBayes(NaiveBayes),
    LogisticRegression(Logistic),
    DecisionTree(Tree),
    RandomForest(Forest),
    Svm(LinearSvm),
    GradientBoosting(Boosting),
    Knn(Knn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_samples: usize,
    pub n_features: usize,
    pub seed: u64,
    pub wall_time_ms: u64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub encoding: LabelEncoding,
    pub meta: TrainingMeta,
    pub params: FittedParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub rows: Vec<Vec<f64>>,
    /// True when rows are probabilities.
    pub calibrated: bool,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fits `spec` on rows `x` with encoded labels `y` in `0..encoding.len()`.
pub fn train(spec: &ModelSpec, x: &FeatureMatrix, y: &[usize], encoding: &LabelEncoding) -> Result<TrainedModel> {
    spec.hyperparameters.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let k = encoding.len();
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::Invalid(format!("encoded label {bad} outside 0..{k}")));
    }
    let mut present = vec![false; k];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }

    let started = Instant::now();
    let mut iterations = None;
    let mut converged = None;
    let params = match spec.hyperparameters {
        Hyperparameters::NaiveBayes { alpha } => FittedParams::NaiveBayes(NaiveBayes::fit(x, y, k, alpha)),
        Hyperparameters::LogisticRegression { c, max_epochs, tol } => {
            let (m, trace) = Logistic::fit(x, y, k, c, max_epochs, tol)?;
            iterations = Some(trace.epochs);
            converged = Some(trace.converged);
            FittedParams::LogisticRegression(m)
        }
        Hyperparameters::DecisionTree {
            max_depth,
            min_samples_split,
        } => {
            let params = TreeParams {
                max_depth,
                min_samples_split,
                features: FeatureSampling::All,
            };
            let mut rng = substream(spec.seed, "decision-tree");
            FittedParams::DecisionTree(tree::fit_classifier(x, y, k, (0..y.len()).collect(), params, &mut rng))
        }
        Hyperparameters::RandomForest {
            n_trees,
            bootstrap,
            max_features,
            max_depth,
            min_samples_split,
        } => {
            let params = TreeParams {
                max_depth,
                min_samples_split,
                features: match max_features {
                    MaxFeatures::Sqrt => FeatureSampling::Sqrt,
                    MaxFeatures::All => FeatureSampling::All,
                },
            };
            FittedParams::RandomForest(Forest::fit(x, y, k, n_trees, bootstrap, params, spec.seed))
        }
        Hyperparameters::Svm { c, epochs } => {
            iterations = Some(epochs);
            FittedParams::Svm(LinearSvm::fit(x, y, k, c, epochs))
        }
        Hyperparameters::GradientBoosting {
            n_rounds,
            max_depth,
            learning_rate,
        } => {
            iterations = Some(n_rounds);
            FittedParams::GradientBoosting(Boosting::fit(x, y, k, n_rounds, max_depth, learning_rate, spec.seed))
        }
        Hyperparameters::Knn { neighbors } => FittedParams::Knn(Knn::fit(x, y, k, neighbors)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        encoding: encoding.clone(),
        meta: TrainingMeta {
            n_samples: y.len(),
            n_features: x.n_cols,
            seed: spec.seed,
            wall_time_ms: started.elapsed().as_millis() as u64,
            iterations,
            converged,
        },
        params,
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols != self.meta.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.meta.n_features,
                actual: x.n_cols,
            });
        }
        Ok(())
    }

    /// Per-class scores for every row. Probabilities for NB, LR, RF and GB;
    /// leaf class fractions, vote fractions or raw margins otherwise.
    pub fn decision_scores(&self, x: &FeatureMatrix) -> Result<Scores> {
        self.check_width(x)?;
        let rows = x
            .rows
            .par_iter()
            .map(|row| match &self.params {
                FittedParams::NaiveBayes(m) => {
                    let mut z = m.joint_log_likelihood(row);
                    logistic::softmax_in_place(&mut z);
                    z
                }
                FittedParams::LogisticRegression(m) => {
                    let mut z = m.logits(row);
                    logistic::softmax_in_place(&mut z);
                    z
                }
                FittedParams::DecisionTree(t) => {
                    let leaf = t.leaf_value(row);
                    let total: f64 = leaf.iter().sum();
                    leaf.iter().map(|c| c / total).collect()
                }
                FittedParams::RandomForest(f) => f.votes(row),
                FittedParams::Svm(m) => m.margins(row),
                FittedParams::GradientBoosting(b) => b.proba(row),
                FittedParams::Knn(m) => m.votes(row),
            })
            .collect();
        Ok(Scores {
            rows,
            calibrated: self.kind().has_probabilities(),
        })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        if !self.kind().has_probabilities() {
            return Err(Error::Unsupported(self.kind().as_str()));
        }
        Ok(self.decision_scores(x)?.rows)
    }

    /// Encoded label per row; ties go to the lowest encoded label.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self.decision_scores(x)?.rows.iter().map(|r| argmax(r)).collect())
    }

    /// Writes the model file: one JSON envelope line, then the parameter blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blob = bincode::serialize(&self.params).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let envelope = Envelope {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            kind: self.kind(),
            spec: self.spec.clone(),
            encoding: self.encoding.clone(),
            meta: self.meta.clone(),
            blob_len: blob.len() as u64,
            blob_sha256: hex::encode(Sha256::digest(&blob)),
        };
        let mut out = serde_json::to_vec(&envelope)?;
        out.push(b'\n');
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ModelFormat("missing envelope line".into()))?;
        let envelope: Envelope = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::ModelFormat(format!("bad envelope: {e}")))?;
        if envelope.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format `{}`", envelope.format)));
        }
        if envelope.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", envelope.version)));
        }
        let blob = &bytes[nl + 1..];
        if blob.len() as u64 != envelope.blob_len {
            return Err(Error::ModelFormat(format!(
                "blob is {} bytes, envelope says {}",
                blob.len(),
                envelope.blob_len
            )));
        }
        if hex::encode(Sha256::digest(blob)) != envelope.blob_sha256 {
            return Err(Error::ModelFormat("blob checksum mismatch".into()));
        }
        let params: FittedParams = bincode::deserialize(blob).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if envelope.kind != envelope.spec.kind() || !params_match(&params, envelope.kind) {
            return Err(Error::ModelFormat("kind does not match parameters".into()));
        }
        Ok(TrainedModel {
            spec: envelope.spec,
            encoding: envelope.encoding,
            meta: envelope.meta,
            params,
        })
    }
}

fn params_match(p: &FittedParams, kind: ModelKind) -> bool {
    matches!(
        (p, kind),
        (FittedParams::NaiveBayes(_), ModelKind::NaiveBayes)
            | (FittedParams::LogisticRegression(_), ModelKind::LogisticRegression)
            | (FittedParams::DecisionTree(_), ModelKind::DecisionTree)
            | (FittedParams::RandomForest(_), ModelKind::RandomForest)
            | (FittedParams::Svm(_), ModelKind::Svm)
            | (FittedParams::GradientBoosting(_), ModelKind::GradientBoosting)
            | (FittedParams::Knn(_), ModelKind::Knn)
    )
}

pub const MODEL_FORMAT: &str = "smellscope-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    kind: ModelKind,
    spec: ModelSpec,
    encoding: LabelEncoding,
    meta: TrainingMeta,
    blob_len: u64,
    blob_sha256: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::SmellLabel;

    fn enc(k: usize) -> LabelEncoding {
        LabelEncoding::from_labels(&SmellLabel::ALL[..k]).unwrap()
    }

    #[test]
    fn naive_bayes_closed_form() {
        // Rows are the one-hot TF-IDF vectors of docs "a" and "b".
        let x = FeatureMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = train(&ModelSpec::default_for(ModelKind::NaiveBayes, 0), &x, &[0, 1], &enc(2)).unwrap();
        let q = FeatureMatrix::from_dense(&[vec![1.0, 0.0]]);
        assert_eq!(m.predict(&q).unwrap(), vec![0]);
        // theta_0 = (2/3, 1/3), theta_1 = (1/3, 2/3), equal priors.
        let p = m.predict_proba(&q).unwrap();
        assert!((p[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[0][1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_and_shape_errors() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0]]);
        for kind in ModelKind::ALL {
            let spec = ModelSpec::default_for(kind, 0);
            assert!(matches!(train(&spec, &x, &[1, 1], &enc(2)), Err(Error::SingleClass)));
            assert!(matches!(train(&spec, &x, &[0], &enc(2)), Err(Error::DimensionMismatch { .. })));
        }
    }

    #[test]
    fn knn_needs_a_neighbor() {
        assert!(ModelSpec::new(Hyperparameters::Knn { neighbors: 0 }, 0).is_err());
    }

    #[test]
    fn knn_votes_and_ties() {
        let x = FeatureMatrix::from_dense(&[vec![0.0], vec![0.1], vec![0.2], vec![5.0]]);
        let spec = ModelSpec::default_for(ModelKind::Knn, 0);
        let m = train(&spec, &x, &[0, 0, 1, 2], &enc(3)).unwrap();
        assert_eq!(m.predict(&FeatureMatrix::from_dense(&[vec![0.0]])).unwrap(), vec![0]);
        let m = train(&spec, &x, &[1, 2, 0, 2], &enc(3)).unwrap();
        // Neighbours of 0.1 are rows 1, 0, 2 with labels {2, 1, 0}.
        assert_eq!(m.predict(&FeatureMatrix::from_dense(&[vec![0.1]])).unwrap(), vec![0]);
    }

    #[test]
    fn zero_weight_logistic_is_uniform() {
        let x = FeatureMatrix::from_dense(&[vec![1.0, 0.0]]);
        let m = TrainedModel {
            spec: ModelSpec::default_for(ModelKind::LogisticRegression, 0),
            encoding: enc(3),
            meta: TrainingMeta {
                n_samples: 0,
                n_features: 2,
                seed: 0,
                wall_time_ms: 0,
                iterations: None,
                converged: None,
            },
            params: FittedParams::LogisticRegression(Logistic {
                n_classes: 3,
                n_features: 2,
                params: vec![0.0; 9],
            }),
        };
        for p in &m.predict_proba(&x).unwrap()[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unsupported_probabilities() {
        let x = FeatureMatrix::from_dense(&[vec![0.0], vec![1.0]]);
        for kind in [ModelKind::Svm, ModelKind::Knn, ModelKind::DecisionTree] {
            let m = train(&ModelSpec::default_for(kind, 0), &x, &[0, 1], &enc(2)).unwrap();
            assert!(matches!(m.predict_proba(&x), Err(Error::Unsupported(_))));
            assert!(!m.decision_scores(&x).unwrap().calibrated);
        }
    }

    #[test]
    fn width_is_checked() {
        let x = FeatureMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let m = train(&ModelSpec::default_for(ModelKind::NaiveBayes, 0), &x, &[0, 1], &enc(2)).unwrap();
        let narrow = FeatureMatrix::from_dense(&[vec![1.0]]);
        assert!(matches!(m.predict(&narrow), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn corrupted_blob_is_rejected() {
        let x = FeatureMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let m = train(&ModelSpec::default_for(ModelKind::NaiveBayes, 0), &x, &[0, 1], &enc(2)).unwrap();
        let mut bytes = m.to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(matches!(TrainedModel::from_bytes(&bytes), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
    }
}
