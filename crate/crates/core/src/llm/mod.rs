//! LLM labelling: prompt construction, pinned sampling parameters, response
//! normalization, cached batch runs and run comparison.

mod backend;
mod batch;
mod prompt;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use backend::{parse_response, request_body, ChatBackend, Completion, HttpBackend, KeywordMockBackend, Usage, API_KEY_ENV};
pub use batch::{cache_key, evaluate_predictions, run_batch, BatchOptions, CacheEntry, ManifestEntry, RecordStatus, RunManifest};
pub use prompt::{build_prompt, CategoryEntry, PromptTemplate};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::label::SmellLabel;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub endpoint: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams {
            model: "gpt-4".into(),
            temperature: 0.2,
            max_tokens: 10,
            top_p: 0.1,
            endpoint: DEFAULT_ENDPOINT.into(),
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

/// A response mapped onto the taxonomy, or the explicit unparseable marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizedLabel {
    Label(SmellLabel),
    Unparseable,
}

impl NormalizedLabel {
    pub fn label(self) -> Option<SmellLabel> {
        match self {
            NormalizedLabel::Label(l) => Some(l),
            NormalizedLabel::Unparseable => None,
        }
    }
}

/// Lowercases, trims, strips surrounding punctuation and quotes, collapses
/// whitespace and looks the result up in the alias table. Anything without
/// an exact alias match is unparseable.
pub fn normalize_label(raw: &str) -> NormalizedLabel {
    let lowered = raw.to_lowercase();
    let stripped = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    match SmellLabel::from_alias(&collapsed) {
        Some(l) => NormalizedLabel::Label(l),
        None => NormalizedLabel::Unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmPrediction {
    pub id: String,
    pub raw: String,
    pub label: NormalizedLabel,
    /// Milliseconds since the Unix epoch.
    pub requested_at: u64,
    pub responded_at: u64,
    pub usage: Option<Usage>,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Delta {
    pub label: SmellLabel,
    pub f1_a: f64,
    pub f1_b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub rows: Vec<F1Delta>,
    pub accuracy_delta: f64,
    pub mcc_delta: f64,
}

fn round2(v: f64) -> f64 {
    // Adding 0.0 turns -0.0 into 0.0.
    (v * 100.0).round() / 100.0 + 0.0
}

impl RunComparison {
    /// Two-decimal table: class, F1 of each run and the increase.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.display_name().len())
            .max()
            .unwrap_or(0)
            .max("accuracy".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>8}", "", "F1 a", "F1 b", "increase");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.2}  {:>6.2}  {:>8.2}",
                r.label.display_name(),
                r.f1_a,
                r.f1_b,
                round2(r.delta)
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>8.2}", "accuracy", "", "", round2(self.accuracy_delta));
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>8.2}", "MCC", "", "", round2(self.mcc_delta));
        out
    }

    /// Per-class increase rounded to two decimals, as shown in the table.
    pub fn rounded_delta(&self, label: SmellLabel) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| round2(r.delta))
    }
}

/// Per-class F1 deltas `b - a` plus accuracy and MCC deltas.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<RunComparison> {
    let set = |r: &EvalReport| r.per_class.iter().map(|c| c.label).collect::<BTreeSet<_>>();
    if set(a) != set(b) {
        return Err(Error::LabelSetMismatch);
    }
    let rows = a
        .per_class
        .iter()
        .map(|ca| {
            let f1_b = b.f1_of(ca.label).expect("label sets match");
            F1Delta {
                label: ca.label,
                f1_a: ca.f1,
                f1_b,
                delta: f1_b - ca.f1,
            }
        })
        .collect();
    Ok(RunComparison {
        rows,
        accuracy_delta: b.accuracy - a.accuracy,
        mcc_delta: b.mcc - a.mcc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_label("Obvious."), NormalizedLabel::Label(SmellLabel::Obvious));
        assert_eq!(
            normalize_label("commented out code"),
            NormalizedLabel::Label(SmellLabel::CommentedOutCode)
        );
        assert_eq!(normalize_label("  \"Not a   smell\"  "), NormalizedLabel::Label(SmellLabel::NotASmell));
        assert_eq!(normalize_label("TOO_MUCH_INFO"), NormalizedLabel::Label(SmellLabel::TooMuchInfo));
        assert_eq!(normalize_label("this comment seems fine"), NormalizedLabel::Unparseable);
        assert_eq!(normalize_label(""), NormalizedLabel::Unparseable);
    }

    proptest! {
        #[test]
        fn normalization_is_total_and_idempotent(raw in "\\PC{0,40}") {
            let once = normalize_label(&raw);
            if let NormalizedLabel::Label(l) = once {
                prop_assert_eq!(normalize_label(l.as_str()), once);
                prop_assert_eq!(normalize_label(l.display_name()), once);
            }
        }
    }
}
