use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::backend::{ChatBackend, Usage};
use super::prompt::{build_prompt, PromptTemplate};
use super::{normalize_label, LlmParams, LlmPrediction};
use crate::corpus::{Dataset, LabelEncoding};
use crate::error::{Error, Result};
use crate::eval::{confusion_matrix_with_unparseable, EvalReport, RunMetadata};
use crate::label::SmellLabel;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOptions {
    pub include_code: bool,
    pub cache_dir: PathBuf,
    /// Requests in flight at once.
    pub concurrency: usize,
}

impl BatchOptions {
    pub fn new(cache_dir: impl Into<PathBuf>, include_code: bool) -> Self {
        BatchOptions {
            include_code,
            cache_dir: cache_dir.into(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub id: String,
    pub raw: String,
    pub usage: Option<Usage>,
    pub requested_at: u64,
    pub responded_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RecordStatus {
    Pending,
    Done { from_cache: bool },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub cache_key: String,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub dataset_hash: String,
    pub include_code: bool,
    pub params: LlmParams,
    pub template_hash: String,
    pub total: usize,
    pub completed: usize,
    pub sent: usize,
    pub complete: bool,
    pub records: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn run_key(&self) -> String {
        let v = json!({
            "dataset": self.dataset_hash,
            "template": self.template_hash,
            "include_code": self.include_code,
            "model": self.params.model,
            "temperature": self.params.temperature.to_bits(),
            "max_tokens": self.params.max_tokens,
            "top_p": self.params.top_p.to_bits(),
        });
        hex::encode(Sha256::digest(v.to_string()))
    }
}

/// Cache key over everything that shapes the response: record, template and
/// sampling parameters. Endpoint, timeout and retry policy are excluded.
pub fn cache_key(id: &str, template_hash: &str, params: &LlmParams, include_code: bool) -> String {
    let v = json!({
        "id": id,
        "template": template_hash,
        "include_code": include_code,
        "model": params.model,
        "temperature": params.temperature.to_bits(),
        "max_tokens": params.max_tokens,
        "top_p": params.top_p.to_bits(),
    });
    hex::encode(Sha256::digest(v.to_string()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_cache(path: &Path, key: &str) -> Option<CacheEntry> {
    let text = std::fs::read_to_string(path).ok()?;
    let entry: CacheEntry = serde_json::from_str(&text).ok()?;
    (entry.key == key).then_some(entry)
}

fn prediction(entry: CacheEntry, from_cache: bool) -> LlmPrediction {
    LlmPrediction {
        label: normalize_label(&entry.raw),
        id: entry.id,
        raw: entry.raw,
        requested_at: entry.requested_at,
        responded_at: entry.responded_at,
        usage: entry.usage,
        from_cache,
    }
}

/// Classifies every record, one request per record, reusing cached responses.
///
/// The manifest is written to `cache_dir/manifest-<run>.json` whether or not
/// the run finishes. On a backend error no new requests are started, finished
/// responses stay cached, and the error is returned; rerunning resumes.
/// Predictions come back sorted by record id.
pub fn run_batch(
    d: &Dataset,
    template: &PromptTemplate,
    params: &LlmParams,
    backend: &dyn ChatBackend,
    opts: &BatchOptions,
) -> Result<(Vec<LlmPrediction>, RunManifest)> {
    template.validate()?;
    std::fs::create_dir_all(&opts.cache_dir).map_err(|e| Error::io(&opts.cache_dir, e))?;
    let template_hash = template.hash();
    let keys: Vec<String> = d
        .records
        .iter()
        .map(|r| cache_key(&r.id, &template_hash, params, opts.include_code))
        .collect();
    let path_of = |key: &str| opts.cache_dir.join(format!("{key}.json"));

    let mut results: Vec<Option<LlmPrediction>> = vec![None; d.len()];
    let mut statuses: Vec<RecordStatus> = vec![RecordStatus::Pending; d.len()];
    let mut pending = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        match read_cache(&path_of(key), key) {
            Some(entry) => {
                results[i] = Some(prediction(entry, true));
                statuses[i] = RecordStatus::Done { from_cache: true };
            }
            None => pending.push(i),
        }
    }

    let next = AtomicUsize::new(0);
    let sent = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let fresh: Mutex<Vec<(usize, Result<CacheEntry>)>> = Mutex::new(Vec::new());
    let workers = opts.concurrency.max(1).min(pending.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(slot) else {
                    break;
                };
                let record = &d.records[i];
                let prompt = build_prompt(record, template, opts.include_code);
                let requested_at = now_ms();
                sent.fetch_add(1, Ordering::SeqCst);
                let outcome = backend.complete(&prompt, params).and_then(|c| {
                    let entry = CacheEntry {
                        key: keys[i].clone(),
                        id: record.id.clone(),
                        raw: c.text,
                        usage: c.usage,
                        requested_at,
                        responded_at: now_ms(),
                    };
                    write_atomic(&path_of(&keys[i]), &serde_json::to_vec_pretty(&entry)?)?;
                    Ok(entry)
                });
                if outcome.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                fresh.lock().expect("no poisoned workers").push((i, outcome));
            });
        }
    });

    let mut first_error = None;
    let mut fresh = fresh.into_inner().expect("no poisoned workers");
    fresh.sort_by_key(|(i, _)| *i);
    for (i, outcome) in fresh {
        match outcome {
            Ok(entry) => {
                results[i] = Some(prediction(entry, false));
                statuses[i] = RecordStatus::Done { from_cache: false };
            }
            Err(e) => {
                statuses[i] = RecordStatus::Failed { message: e.to_string() };
                first_error.get_or_insert(e);
            }
        }
    }

    let completed = results.iter().filter(|r| r.is_some()).count();
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_hash: d.content_hash(),
        include_code: opts.include_code,
        params: params.clone(),
        template_hash,
        total: d.len(),
        completed,
        sent: sent.load(Ordering::SeqCst),
        complete: completed == d.len(),
        records: d
            .records
            .iter()
            .zip(keys)
            .zip(statuses)
            .map(|((r, cache_key), status)| ManifestEntry {
                id: r.id.clone(),
                cache_key,
                status,
            })
            .collect(),
    };
    let manifest_path = opts.cache_dir.join(format!("manifest-{}.json", &manifest.run_key()[..16]));
    write_atomic(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    if let Some(e) = first_error {
        return Err(e);
    }
    let mut predictions: Vec<LlmPrediction> = results.into_iter().map(|p| p.expect("all done")).collect();
    predictions.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((predictions, manifest))
}

/// Scores predictions against gold labels over all ten categories.
/// Unparseable responses count as wrong and are reported separately.
pub fn evaluate_predictions(d: &Dataset, predictions: &[LlmPrediction], metadata: RunMetadata) -> Result<EvalReport> {
    let by_id: HashMap<&str, &LlmPrediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let encoding = LabelEncoding::from_labels(&SmellLabel::ALL)?;
    let mut y_true = Vec::with_capacity(d.len());
    let mut y_pred = Vec::with_capacity(d.len());
    for r in &d.records {
        let gold = r.label.ok_or_else(|| Error::Unlabeled(r.id.clone()))?;
        let p = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no prediction for `{}`", r.id)))?;
        y_true.push(encoding.encode(gold)?);
        y_pred.push(p.label.label().map(|l| encoding.encode(l)).transpose()?);
    }
    let cm = confusion_matrix_with_unparseable(&y_true, &y_pred, encoding.labels())?;
    Ok(EvalReport::from_confusion(cm, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::record;
    use crate::llm::backend::{Completion, KeywordMockBackend};

    struct Counting<'a> {
        inner: &'a dyn ChatBackend,
        calls: AtomicUsize,
        fail_on: Option<&'a str>,
    }

    impl ChatBackend for Counting<'_> {
        fn complete(&self, prompt: &str, params: &LlmParams) -> Result<Completion> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail_on.is_some_and(|f| prompt.contains(f)) {
                return Err(Error::Transport {
                    attempts: 3,
                    message: "boom".into(),
                });
            }
            self.inner.complete(prompt, params)
        }
    }

    fn dataset() -> Dataset {
        Dataset::new(vec![
            record("b", "// TODO handle this", Some(SmellLabel::Task)),
            record("a", "// increment the counter by one", Some(SmellLabel::Obvious)),
            record("c", "// ~~~~~~~~~~", Some(SmellLabel::Beautification)),
            record("d", "// mystery words here please", Some(SmellLabel::Vague)),
        ])
        .unwrap()
    }

    #[test]
    fn warm_cache_sends_nothing_and_orders_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let t = PromptTemplate::bundled();
        let mock = KeywordMockBackend::new(&t.comment_heading);
        let backend = Counting {
            inner: &mock,
            calls: AtomicUsize::new(0),
            fail_on: None,
        };
        let opts = BatchOptions::new(dir.path(), false);
        let (preds, manifest) = run_batch(&dataset(), &t, &LlmParams::default(), &backend, &opts).unwrap();
        assert_eq!(preds.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c", "d"]);
        assert_eq!(manifest.sent, 4);
        assert!(manifest.complete);
        let (again, manifest) = run_batch(&dataset(), &t, &LlmParams::default(), &backend, &opts).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 4);
        assert_eq!(manifest.sent, 0);
        assert!(again.iter().all(|p| p.from_cache));
        let report = evaluate_predictions(&dataset(), &again, RunMetadata::default()).unwrap();
        assert_eq!(report.confusion.total(), 4);
    }

    #[test]
    fn failure_leaves_a_resumable_cache() {
        let dir = tempfile::tempdir().unwrap();
        let t = PromptTemplate::bundled();
        let mock = KeywordMockBackend::new(&t.comment_heading);
        let mut opts = BatchOptions::new(dir.path(), true);
        opts.concurrency = 1;
        let flaky = Counting {
            inner: &mock,
            calls: AtomicUsize::new(0),
            fail_on: Some("~~~~~~~~~~"),
        };
        assert!(run_batch(&dataset(), &t, &LlmParams::default(), &flaky, &opts).is_err());
        let manifests: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| {
                let name = e.unwrap().file_name().into_string().unwrap();
                name.starts_with("manifest-").then_some(name)
            })
            .collect();
        assert_eq!(manifests.len(), 1);
        let healthy = Counting {
            inner: &mock,
            calls: AtomicUsize::new(0),
            fail_on: None,
        };
        let (_, m) = run_batch(&dataset(), &t, &LlmParams::default(), &healthy, &opts).unwrap();
        // Only the two records not reached or failed before are sent again.
        assert_eq!(healthy.calls.load(Ordering::SeqCst), 2);
        assert_eq!(m.sent, 2);
    }

    #[test]
    fn keys_change_with_parameters() {
        let p = LlmParams::default();
        let base = cache_key("x", "t", &p, false);
        assert_ne!(base, cache_key("x", "t", &p, true));
        let hotter = LlmParams {
            temperature: 0.3,
            ..p.clone()
        };
        assert_ne!(base, cache_key("x", "t", &hotter, false));
        let elsewhere = LlmParams {
            endpoint: "http://localhost".into(),
            ..p
        };
        assert_eq!(base, cache_key("x", "t", &elsewhere, false));
    }
}
