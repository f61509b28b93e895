//! Comment-smell dataset tooling: inline comment extraction, TF-IDF features,
//! SMOTE resampling, seven classical classifiers, evaluation and an LLM
//! labelling client.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod extractor;
pub mod features;
pub mod label;
pub mod llm;
pub mod models;
pub mod resample;
pub mod rng;
pub mod synthetic;

pub use corpus::{CodeField, CommentRecord, Dataset, LabelEncoding, Language, LineSpan};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, SparseRow, Vocabulary};
pub use label::SmellLabel;
pub use models::{ModelKind, ModelSpec, TrainedModel};
