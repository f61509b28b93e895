//! Stratified k-fold and the train/evaluate pipeline shared by the hold-out
//! and cross-validation protocols.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confusion_matrix, EvalReport, RunMetadata};
use crate::corpus::{Dataset, LabelEncoding};
use crate::error::{Error, Result};
use crate::features::{fit_vocabulary, tfidf_transform_with_ids, tokenize_with, FeatureMatrix, TokenizerOptions, Vocabulary};
use crate::label::SmellLabel;
use crate::models::{train, ModelSpec, TrainedModel};
use crate::resample::{smote, DEFAULT_K_NEIGHBORS};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Folds over class labels: members of each class are shuffled and dealt
/// round-robin, continuing where the previous class stopped.
pub fn stratified_kfold_labels<L: Ord + Copy>(labels: &[L], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Invalid(format!("k must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::Invalid(format!("k = {k} exceeds {} samples", labels.len())));
    }
    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = rng::substream(seed, "kfold");
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            Fold { train, validation }
        })
        .collect())
}

pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    stratified_kfold_labels(&d.labels()?, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub smote: bool,
    pub smote_k: usize,
    pub tokenizer: TokenizerOptions,
    /// Append each record's code segment to its comment before tokenizing.
    pub with_code: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            smote: true,
            smote_k: DEFAULT_K_NEIGHBORS,
            tokenizer: TokenizerOptions::default(),
            with_code: false,
        }
    }
}

/// Features for one train/test partition. The vocabulary and encoding see the
/// training half only; SMOTE (when enabled) touches only `x_train`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocabulary: Vocabulary,
    pub encoding: LabelEncoding,
    pub x_train: FeatureMatrix,
    pub y_train: Vec<usize>,
    pub x_test: FeatureMatrix,
    pub y_test: Vec<usize>,
    pub synthetic_rows: usize,
}

pub fn prepare_features(
    train_set: &Dataset,
    test_set: &Dataset,
    encoding: Option<&LabelEncoding>,
    opts: &PipelineOptions,
    seed: u64,
) -> Result<Prepared> {
    let docs = |d: &Dataset| -> Vec<Vec<String>> {
        d.records
            .iter()
            .map(|r| {
                let mut tokens = tokenize_with(&r.comment_text, opts.tokenizer);
                if let (true, Some(code)) = (opts.with_code, r.code.segment()) {
                    tokens.extend(tokenize_with(code, opts.tokenizer));
                }
                tokens
            })
            .collect()
    };
    let ids = |d: &Dataset| d.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
    let train_docs = docs(train_set);
    let vocabulary = fit_vocabulary(&train_docs)?;
    let train_labels = train_set.labels()?;
    let encoding = match encoding {
        Some(e) => e.clone(),
        None => LabelEncoding::fit(&train_labels)?,
    };
    let mut x_train = tfidf_transform_with_ids(&train_docs, &vocabulary, ids(train_set));
    let mut y_train = encoding.encode_all(&train_labels)?;
    let x_test = tfidf_transform_with_ids(&docs(test_set), &vocabulary, ids(test_set));
    let y_test = encoding.encode_all(&test_set.labels()?)?;
    let mut synthetic_rows = 0;
    if opts.smote {
        let out = smote(&x_train, &y_train, opts.smote_k, seed)?;
        synthetic_rows = out.parents.len();
        x_train = out.x;
        y_train = out.y;
    }
    Ok(Prepared {
        vocabulary,
        encoding,
        x_train,
        y_train,
        x_test,
        y_test,
        synthetic_rows,
    })
}

/// Fits on `train_set` and scores on the untouched `test_set`.
pub fn fit_and_evaluate(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    encoding: Option<&LabelEncoding>,
    opts: &PipelineOptions,
    metadata: RunMetadata,
) -> Result<(TrainedModel, Prepared, EvalReport)> {
    let prepared = prepare_features(train_set, test_set, encoding, opts, rng::child_seed(spec.seed, "smote"))?;
    let model = train(spec, &prepared.x_train, &prepared.y_train, &prepared.encoding)?;
    let pred = model.predict(&prepared.x_test)?;
    let cm = confusion_matrix(&prepared.y_test, &pred, prepared.encoding.labels())?;
    Ok((model, prepared, EvalReport::from_confusion(cm, metadata)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub pipeline: PipelineOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 10,
            seed: 0,
            pipeline: PipelineOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub index: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub vocabulary_size: usize,
    pub synthetic_rows: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub seed: u64,
    pub mean_mcc: f64,
    pub mean_accuracy: f64,
    pub folds: Vec<FoldOutcome>,
}

/// Stratified k-fold cross-validation. The vocabulary, TF-IDF weights and
/// SMOTE are refit inside every fold; validation folds are never resampled.
/// Folds share one label encoding over the dataset's label set so that
/// per-fold reports line up.
pub fn cross_validate(spec: &ModelSpec, d: &Dataset, opts: &CvOptions) -> Result<CvResult> {
    cross_validate_with(spec, d, opts, None)
}

/// [`cross_validate`] with a configuration hash stamped into every fold report.
pub fn cross_validate_with(spec: &ModelSpec, d: &Dataset, opts: &CvOptions, config_hash: Option<&str>) -> Result<CvResult> {
    let folds = stratified_kfold(d, opts.k, opts.seed)?;
    let labels: Vec<SmellLabel> = d.labels()?;
    let encoding = LabelEncoding::fit(&labels)?;
    let dataset_hash = d.content_hash();
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let train_set = d.subset(&fold.train);
            let val_set = d.subset(&fold.validation);
            let fold_spec = ModelSpec {
                seed: rng::child_seed(spec.seed, &format!("fold/{i}")),
                ..spec.clone()
            };
            let meta = RunMetadata {
                protocol: format!("cv-{}-fold", opts.k),
                model: Some(spec.clone()),
                dataset_hash: Some(dataset_hash.clone()),
                seed: Some(opts.seed),
                fold: Some(i),
                config_hash: config_hash.map(str::to_string),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            };
            let (_, prepared, report) =
                fit_and_evaluate(&fold_spec, &train_set, &val_set, Some(&encoding), &opts.pipeline, meta)?;
            Ok(FoldOutcome {
                index: i,
                train_size: fold.train.len(),
                validation_size: fold.validation.len(),
                vocabulary_size: prepared.vocabulary.len(),
                synthetic_rows: prepared.synthetic_rows,
                report,
            })
        })
        .collect::<Result<_>>()?;
    let n = outcomes.len() as f64;
    Ok(CvResult {
        k: opts.k,
        seed: opts.seed,
        mean_mcc: outcomes.iter().map(|f| f.report.mcc).sum::<f64>() / n,
        mean_accuracy: outcomes.iter().map(|f| f.report.accuracy).sum::<f64>() / n,
        folds: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_classes_split_evenly() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let folds = stratified_kfold_labels(&labels, 10, 3).unwrap();
        for f in &folds {
            let ones = f.validation.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!((f.validation.len(), ones), (10, 5));
        }
    }

    #[test]
    fn small_class_spreads_one_per_fold() {
        let labels: Vec<u8> = std::iter::repeat_n(0, 7).chain(std::iter::repeat_n(1, 30)).collect();
        let folds = stratified_kfold_labels(&labels, 10, 1).unwrap();
        let mut per_fold: Vec<usize> = folds
            .iter()
            .map(|f| f.validation.iter().filter(|&&i| labels[i] == 0).count())
            .collect();
        per_fold.sort();
        assert_eq!(per_fold, [0, 0, 0, 1, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn code_tokens_enter_features_only_on_request() {
        let mut d = crate::synthetic::separable_dataset(2, 6, 1);
        for r in &mut d.records {
            r.code = crate::corpus::CodeField::Segment("zebrafish.quokka();".into());
        }
        let plain = PipelineOptions {
            smote: false,
            ..PipelineOptions::default()
        };
        let coded = PipelineOptions { with_code: true, ..plain };
        let vocab = |o: &PipelineOptions| prepare_features(&d, &d, None, o, 0).unwrap().vocabulary;
        assert!(vocab(&plain).index_of("zebrafish").is_none());
        let v = vocab(&coded);
        assert!(v.index_of("zebrafish").is_some() && v.index_of("quokka").is_some());
    }

    #[test]
    fn bad_k() {
        assert!(stratified_kfold_labels(&[0u8, 1], 1, 0).is_err());
        assert!(stratified_kfold_labels(&[0u8, 1], 3, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(labels in proptest::collection::vec(0u8..6, 10..200), seed in 0u64..50) {
            let folds = stratified_kfold_labels(&labels, 10, seed).unwrap();
            let mut seen = vec![0; labels.len()];
            for f in &folds {
                for &i in &f.validation {
                    seen[i] += 1;
                }
                prop_assert_eq!(f.train.len() + f.validation.len(), labels.len());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            for c in 0u8..6 {
                let counts: Vec<usize> = folds
                    .iter()
                    .map(|f| f.validation.iter().filter(|&&i| labels[i] == c).count())
                    .collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
            prop_assert_eq!(&folds, &stratified_kfold_labels(&labels, 10, seed).unwrap());
        }
    }
}
