use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use smellscope_core::corpus::{
    dedup, load_dataset, remove_minority_classes, stratified_split, Dataset, DatasetFormat,
    DEFAULT_MINORITY_THRESHOLD, DEFAULT_TEST_FRACTION,
};
use smellscope_core::eval::{cross_validate_with, fit_and_evaluate, CvOptions, EvalReport, PipelineOptions, RunMetadata};
use smellscope_core::extractor::{extract_records, scan_tree, ScanOptions};
use smellscope_core::features::{StopWords, TokenizerOptions};
use smellscope_core::llm::{
    compare_runs, evaluate_predictions, run_batch, BatchOptions, ChatBackend, HttpBackend, KeywordMockBackend,
    LlmParams, PromptTemplate, RetryPolicy,
};
use smellscope_core::models::{ModelKind, ModelSpec};
use smellscope_core::resample::DEFAULT_K_NEIGHBORS;
use smellscope_core::rng::child_seed;

use crate::config::{parse_models, pick, FileConfig, RunConfig};
use crate::{CompareArgs, CvArgs, ExtractArgs, LlmArgs, ModelArgs, PrepareArgs, TrainEvalArgs};

pub const DEFAULT_SEED: u64 = 42;
const VERSION: &str = env!("CARGO_PKG_VERSION");

pub enum Outcome {
    Done,
    NeedsReview(usize),
}

/// Provenance stamped into (or beside) every artifact.
#[derive(Debug, Serialize)]
struct ArtifactMeta<'a> {
    tool_version: &'static str,
    config: &'a RunConfig,
    config_hash: String,
    dataset_hash: Option<String>,
    seed: Option<u64>,
}

impl<'a> ArtifactMeta<'a> {
    fn new(config: &'a RunConfig, dataset_hash: Option<String>, seed: Option<u64>) -> Self {
        ArtifactMeta {
            tool_version: VERSION,
            config,
            config_hash: config.hash(),
            dataset_hash,
            seed,
        }
    }

    fn run_metadata(&self, protocol: &str, model: Option<ModelSpec>) -> RunMetadata {
        RunMetadata {
            protocol: protocol.into(),
            model,
            dataset_hash: self.dataset_hash.clone(),
            seed: self.seed,
            fold: None,
            config_hash: Some(self.config_hash.clone()),
            tool_version: VERSION.into(),
        }
    }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Metadata for formats that cannot carry it, as `<file>.meta.json`.
fn write_sidecar(path: &Path, meta: &ArtifactMeta) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    write_json(&PathBuf::from(name), meta)
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path, DatasetFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

pub fn extract(a: ExtractArgs) -> Result<Outcome> {
    let opts = ScanOptions {
        include: a.include.clone(),
        exclude: a.exclude.clone(),
    };
    let project = a.project.clone().unwrap_or_else(|| {
        a.root
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".into())
    });
    let review_path = a.review.clone().unwrap_or_else(|| {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".review.json");
        PathBuf::from(name)
    });
    let config = RunConfig::new(
        "extract",
        json!({
            "root": a.root,
            "out": a.out,
            "review": review_path,
            "include": a.include,
            "exclude": a.exclude,
            "project": project,
        }),
    );
    let files = scan_tree(&a.root, &opts)?;
    let (records, review) = extract_records(&files, &project);
    let dataset = Dataset::new(records)?;
    let meta = ArtifactMeta::new(&config, Some(dataset.content_hash()), None);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    dataset.save(&a.out, DatasetFormat::from_path(&a.out))?;
    write_sidecar(&a.out, &meta)?;
    write_json(&review_path, &json!({ "metadata": meta, "items": review }))?;
    println!(
        "extracted {} comment(s) from {} file(s); {} need review",
        dataset.len(),
        files.len(),
        review.len()
    );
    Ok(if review.is_empty() {
        Outcome::Done
    } else {
        Outcome::NeedsReview(review.len())
    })
}

pub fn prepare(a: PrepareArgs, file: &FileConfig) -> Result<Outcome> {
    let threshold = pick(a.threshold, file.threshold, DEFAULT_MINORITY_THRESHOLD);
    let config = RunConfig::new(
        "prepare",
        json!({ "dataset": a.dataset, "out_dir": a.out_dir, "threshold": threshold }),
    );
    let raw = load(&a.dataset)?;
    let (deduped, dedup_report) = dedup(&raw)?;
    let (filtered, filter_report) = remove_minority_classes(&deduped, threshold)?;
    let meta = ArtifactMeta::new(&config, Some(raw.content_hash()), None);
    std::fs::create_dir_all(&a.out_dir)?;
    let out = a.out_dir.join("dataset.csv");
    filtered.save(&out, DatasetFormat::Csv)?;
    write_sidecar(&out, &meta)?;
    write_json(
        &a.out_dir.join("prepare-report.json"),
        &json!({
            "metadata": meta,
            "output_dataset_hash": filtered.content_hash(),
            "dedup": dedup_report,
            "filter": filter_report,
            "histogram_before": raw.histogram(),
            "histogram_after": filtered.histogram(),
        }),
    )?;
    println!(
        "dedup {} -> {}; minority filter (threshold {threshold}) {} -> {} records, {} classes kept",
        dedup_report.before,
        dedup_report.after,
        filter_report.before,
        filter_report.after,
        filter_report.classes.iter().filter(|c| c.kept).count()
    );
    Ok(Outcome::Done)
}

struct ModelSettings {
    kinds: Vec<ModelKind>,
    seed: u64,
    pipeline: PipelineOptions,
}

fn model_settings(a: &ModelArgs, file: &FileConfig) -> Result<ModelSettings> {
    let names = if a.models.is_empty() {
        file.models.clone().unwrap_or_else(|| vec!["all".into()])
    } else {
        a.models.clone()
    };
    Ok(ModelSettings {
        kinds: parse_models(&names)?,
        seed: pick(a.seed, file.seed, DEFAULT_SEED),
        pipeline: PipelineOptions {
            smote: pick(a.no_smote.then_some(false), file.smote, true),
            smote_k: pick(a.smote_k, file.smote_k, DEFAULT_K_NEIGHBORS),
            tokenizer: TokenizerOptions {
                keep_short_tokens: pick(a.keep_short_tokens.then_some(true), file.keep_short_tokens, false),
            },
            with_code: pick(a.with_code.then_some(true), file.with_code, false),
        },
    })
}

fn model_spec(kind: ModelKind, seed: u64) -> ModelSpec {
    ModelSpec::default_for(kind, child_seed(seed, &format!("model/{kind}")))
}

pub fn train_eval(a: TrainEvalArgs, file: &FileConfig) -> Result<Outcome> {
    let s = model_settings(&a.common, file)?;
    let test_fraction = pick(a.test_fraction, file.test_fraction, DEFAULT_TEST_FRACTION);
    let config = RunConfig::new(
        "train-eval",
        json!({
            "dataset": a.common.dataset,
            "out_dir": a.common.out_dir,
            "models": s.kinds,
            "seed": s.seed,
            "test_fraction": test_fraction,
            "pipeline": s.pipeline,
            "stop_words": StopWords::english().hash(),
        }),
    );
    let d = load(&a.common.dataset)?;
    let meta = ArtifactMeta::new(&config, Some(d.content_hash()), Some(s.seed));
    let (train_set, test_set) = stratified_split(&d, test_fraction, s.seed)?;
    write_json(
        &a.common.out_dir.join("split.json"),
        &json!({
            "metadata": meta,
            "test_fraction": test_fraction,
            "train": train_set.histogram(),
            "test": test_set.histogram(),
        }),
    )?;
    let mut summary = Vec::new();
    let mut training = Vec::new();
    for kind in &s.kinds {
        let spec = model_spec(*kind, s.seed);
        let run_meta = meta.run_metadata("holdout", Some(spec.clone()));
        let (model, prepared, report) = fit_and_evaluate(&spec, &train_set, &test_set, None, &s.pipeline, run_meta)
            .with_context(|| format!("training {kind}"))?;
        let dir = a.common.out_dir.join(kind.as_str());
        report.write_files(&dir)?;
        let model_path = dir.join("model.bin");
        model.save(&model_path)?;
        write_sidecar(&model_path, &meta)?;
        write(&dir.join("vocabulary.json"), prepared.vocabulary.to_json()?)?;
        let mut resampled = BTreeMap::new();
        for &y in &prepared.y_train {
            *resampled.entry(prepared.encoding.decode(y)?).or_insert(0usize) += 1;
        }
        training.push(json!({
            "model": kind,
            "vocabulary_size": prepared.vocabulary.len(),
            "synthetic_rows": prepared.synthetic_rows,
            "train_counts_after_resampling": resampled,
        }));
        summary.push((*kind, report));
    }
    write_summary(&a.common.out_dir, &meta, &summary, &training)?;
    print!("{}", summary_table(&summary));
    Ok(Outcome::Done)
}

fn summary_table(rows: &[(ModelKind, EvalReport)]) -> String {
    let mut out = format!("{:<20}  {:>8}  {:>6}  {:>11}\n", "model", "accuracy", "MCC", "weighted F1");
    for (kind, r) in rows {
        let _ = writeln!(
            out,
            "{:<20}  {:>8.2}  {:>6.2}  {:>11.2}",
            kind.as_str(),
            r.accuracy,
            r.mcc,
            r.weighted_avg.f1
        );
    }
    out
}

fn write_summary(dir: &Path, meta: &ArtifactMeta, rows: &[(ModelKind, EvalReport)], training: &[Value]) -> Result<()> {
    let models: Vec<_> = rows
        .iter()
        .zip(training)
        .map(|((k, r), t)| {
            json!({
                "model": k,
                "accuracy": r.accuracy,
                "mcc": r.mcc,
                "weighted_f1": r.weighted_avg.f1,
                "training": t,
            })
        })
        .collect();
    write_json(&dir.join("summary.json"), &json!({ "metadata": meta, "models": models }))?;
    let header = meta.run_metadata("holdout", None).header_line();
    write(&dir.join("summary.txt"), format!("{header}\n{}", summary_table(rows)))
}

pub fn cv(a: CvArgs, file: &FileConfig) -> Result<Outcome> {
    let s = model_settings(&a.common, file)?;
    let k = pick(a.k, file.k_folds, 10);
    let config = RunConfig::new(
        "cv",
        json!({
            "dataset": a.common.dataset,
            "out_dir": a.common.out_dir,
            "models": s.kinds,
            "seed": s.seed,
            "k": k,
            "pipeline": s.pipeline,
            "stop_words": StopWords::english().hash(),
        }),
    );
    let d = load(&a.common.dataset)?;
    let meta = ArtifactMeta::new(&config, Some(d.content_hash()), Some(s.seed));
    let opts = CvOptions {
        k,
        seed: s.seed,
        pipeline: s.pipeline,
    };
    let mut results = Vec::new();
    let mut table = format!("{:<20}  {:>13}  {:>8}\n", "model", "mean accuracy", "mean MCC");
    for kind in &s.kinds {
        let spec = model_spec(*kind, s.seed);
        let r = cross_validate_with(&spec, &d, &opts, Some(&meta.config_hash))
            .with_context(|| format!("cross-validating {kind}"))?;
        let _ = writeln!(table, "{:<20}  {:>13.2}  {:>8.2}", kind.as_str(), r.mean_accuracy, r.mean_mcc);
        results.push(json!({ "model": kind, "result": r }));
    }
    std::fs::create_dir_all(&a.common.out_dir)?;
    write_json(&a.common.out_dir.join("cv.json"), &json!({ "metadata": meta, "models": results }))?;
    let header = meta.run_metadata(&format!("cv-{k}-fold"), None).header_line();
    write(&a.common.out_dir.join("cv.txt"), format!("{header}\n{table}"))?;
    print!("{table}");
    Ok(Outcome::Done)
}

pub fn llm(a: LlmArgs, file: &FileConfig) -> Result<Outcome> {
    let defaults = LlmParams::default();
    let params = LlmParams {
        model: pick(a.model.clone(), file.llm_model.clone(), defaults.model),
        temperature: pick(a.temperature, file.temperature, defaults.temperature),
        max_tokens: pick(a.max_tokens, file.max_tokens, defaults.max_tokens),
        top_p: pick(a.top_p, file.top_p, defaults.top_p),
        endpoint: pick(a.endpoint.clone(), file.endpoint.clone(), defaults.endpoint),
        timeout_secs: pick(a.timeout_secs, file.timeout_secs, defaults.timeout_secs),
        retry: RetryPolicy {
            max_attempts: pick(a.max_attempts, file.max_attempts, defaults.retry.max_attempts),
            ..defaults.retry
        },
    };
    let include_code = pick(a.with_code.then_some(true), file.with_code, false);
    let cache = a.cache.clone().unwrap_or_else(|| a.out_dir.join("cache"));
    let mut batch = BatchOptions::new(&cache, include_code);
    batch.concurrency = pick(a.concurrency, file.concurrency, batch.concurrency);
    let template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::bundled(),
    };
    let config = RunConfig::new(
        "llm",
        json!({
            "dataset": a.dataset,
            "out_dir": a.out_dir,
            "template": a.template,
            "template_hash": template.hash(),
            "include_code": include_code,
            "cache": cache,
            "mock": a.mock,
            "params": params,
            "concurrency": batch.concurrency,
        }),
    );
    let d = load(&a.dataset)?;
    let meta = ArtifactMeta::new(&config, Some(d.content_hash()), None);
    let backend: Box<dyn ChatBackend> = if a.mock {
        Box::new(KeywordMockBackend::new(&template.comment_heading))
    } else {
        Box::new(HttpBackend::from_env(Duration::from_secs(params.timeout_secs))?)
    };
    let (predictions, manifest) = run_batch(&d, &template, &params, backend.as_ref(), &batch)
        .context("LLM run stopped; finished responses are cached and a rerun resumes")?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut lines = String::new();
    for p in &predictions {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    let pred_path = a.out_dir.join("predictions.jsonl");
    write(&pred_path, lines)?;
    write_sidecar(&pred_path, &meta)?;
    write_json(&a.out_dir.join("manifest.json"), &json!({ "metadata": meta, "manifest": manifest }))?;
    let protocol = if include_code { "llm-with-code" } else { "llm-comment-only" };
    let report = evaluate_predictions(&d, &predictions, meta.run_metadata(protocol, None))?;
    report.write_files(&a.out_dir)?;
    print!("{}", report.render_text());
    println!("requests sent: {}, served from cache: {}", manifest.sent, manifest.total - manifest.sent);
    Ok(Outcome::Done)
}

pub fn compare(a: CompareArgs) -> Result<Outcome> {
    let ra = EvalReport::load(&a.a).with_context(|| format!("loading {}", a.a.display()))?;
    let rb = EvalReport::load(&a.b).with_context(|| format!("loading {}", a.b.display()))?;
    let cmp = compare_runs(&ra, &rb)?;
    let text = cmp.render_text();
    print!("{text}");
    if let Some(out) = &a.out {
        let config = RunConfig::new("compare", json!({ "a": a.a, "b": a.b, "out": out }));
        let meta = ArtifactMeta::new(&config, ra.metadata.dataset_hash.clone(), ra.metadata.seed);
        write_json(out, &json!({ "metadata": meta, "comparison": cmp }))?;
    }
    Ok(Outcome::Done)
}
