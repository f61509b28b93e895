//! Confusion matrices, per-class metrics, multiclass MCC and report files.

mod cv;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cv::{
    cross_validate, cross_validate_with, fit_and_evaluate, prepare_features, stratified_kfold, stratified_kfold_labels, CvOptions,
    CvResult, Fold, FoldOutcome, PipelineOptions, Prepared,
};

use crate::error::{Error, Result};
use crate::label::SmellLabel;
use crate::models::ModelSpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Rows are true classes, columns predicted classes. Predictions that map to
/// no class are kept per true class in `unparseable`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<SmellLabel>,
    pub counts: Vec<Vec<u64>>,
    pub unparseable: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparseable.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// True count per class, including unparseable predictions.
    pub fn row_totals(&self) -> Vec<u64> {
        self.counts
            .iter()
            .zip(&self.unparseable)
            .map(|(r, u)| r.iter().sum::<u64>() + u)
            .collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.k()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn unparseable_total(&self) -> u64 {
        self.unparseable.iter().sum()
    }

    /// `true,<labels...>,unparseable` header then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push_str(",unparseable\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l.as_str());
            for c in &self.counts[i] {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{}", self.unparseable[i]);
        }
        out
    }
}

/// Counts `(true, predicted)` pairs over encoded labels `0..labels.len()`.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], labels: &[SmellLabel]) -> Result<ConfusionMatrix> {
    let pred: Vec<Option<usize>> = y_pred.iter().map(|&p| Some(p)).collect();
    confusion_matrix_with_unparseable(y_true, &pred, labels)
}

/// Like [`confusion_matrix`]; `None` predictions are unparseable and count as wrong.
pub fn confusion_matrix_with_unparseable(
    y_true: &[usize],
    y_pred: &[Option<usize>],
    labels: &[SmellLabel],
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Invalid("confusion matrix of zero samples".into()));
    }
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut unparseable = vec![0u64; k];
    let oov = |v: usize| Error::Invalid(format!("encoded label {v} outside 0..{k}"));
    for (&t, p) in y_true.iter().zip(y_pred) {
        if t >= k {
            return Err(oov(t));
        }
        match *p {
            Some(p) if p >= k => return Err(oov(p)),
            Some(p) => counts[t][p] += 1,
            None => unparseable[t] += 1,
        }
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
        unparseable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SmellLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Precision, recall and F1 per class; any 0/0 is 0.
pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let rows = cm.row_totals();
    let cols = cm.col_totals();
    cm.labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let tp = cm.counts[i][i] as f64;
            let precision = ratio(tp, cols[i] as f64);
            let recall = ratio(tp, rows[i] as f64);
            ClassMetrics {
                label,
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support: rows[i],
            }
        })
        .collect()
}

pub fn macro_average(rows: &[ClassMetrics]) -> Averages {
    let n = rows.len() as f64;
    Averages {
        precision: ratio(rows.iter().map(|r| r.precision).sum(), n),
        recall: ratio(rows.iter().map(|r| r.recall).sum(), n),
        f1: ratio(rows.iter().map(|r| r.f1).sum(), n),
    }
}

pub fn weighted_average(rows: &[ClassMetrics]) -> Averages {
    let total: f64 = rows.iter().map(|r| r.support as f64).sum();
    let w = |f: fn(&ClassMetrics) -> f64| ratio(rows.iter().map(|r| r.support as f64 * f(r)).sum(), total);
    Averages {
        precision: w(|r| r.precision),
        recall: w(|r| r.recall),
        f1: w(|r| r.f1),
    }
}

/// Gorodkin's multiclass MCC. Unparseable predictions form one extra
/// predicted column. A zero denominator gives 0.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let t: Vec<f64> = cm.row_totals().into_iter().map(|v| v as f64).collect();
    let p: Vec<f64> = cm.col_totals().into_iter().map(|v| v as f64).collect();
    let u = cm.unparseable_total() as f64;
    let tp: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
    let p2: f64 = p.iter().map(|v| v * v).sum::<f64>() + u * u;
    let t2: f64 = t.iter().map(|v| v * v).sum();
    let den = ((s * s - p2) * (s * s - t2)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (c * s - tp) / den
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// `holdout`, `cv-fold`, `llm` or similar.
    pub protocol: String,
    pub model: Option<ModelSpec>,
    pub dataset_hash: Option<String>,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
    /// Hash of the resolved run configuration, when run from the command line.
    pub config_hash: Option<String>,
    pub tool_version: String,
}

impl RunMetadata {
    /// One `# key=value ...` line for text artifacts.
    pub fn header_line(&self) -> String {
        let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
        format!(
            "# protocol={} model={} seed={} dataset_hash={} config_hash={} version={}",
            self.protocol,
            self.model.as_ref().map_or("-".to_string(), |m| m.kind().to_string()),
            self.seed.map_or("-".to_string(), |s| s.to_string()),
            opt(&self.dataset_hash),
            opt(&self.config_hash),
            self.tool_version
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub mcc: f64,
    pub unparseable: u64,
    pub confusion: ConfusionMatrix,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix, metadata: RunMetadata) -> Self {
        let per_class = class_metrics(&cm);
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            accuracy: ratio(cm.trace() as f64, cm.total() as f64),
            macro_avg: macro_average(&per_class),
            weighted_avg: weighted_average(&per_class),
            mcc: mcc(&cm),
            unparseable: cm.unparseable_total(),
            per_class,
            confusion: cm,
            metadata,
        }
    }

    pub fn f1_of(&self, label: SmellLabel) -> Option<f64> {
        self.per_class.iter().find(|r| r.label == label).map(|r| r.f1)
    }

    /// Fixed-width table: one row per class, then accuracy, averages and MCC.
    pub fn render_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|r| r.label.display_name().len())
            .max()
            .unwrap_or(0)
            .max("weighted avg".len());
        let total = self.confusion.total();
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}", "", "precision", "recall", "f1-score", "support");
        for r in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                r.label.display_name(),
                r.precision,
                r.recall,
                r.f1,
                r.support
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>6}  {:>8.2}  {:>7}", "accuracy", "", "", self.accuracy, total);
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                name, a.precision, a.recall, a.f1, total
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>28.2}", "MCC", self.mcc);
        if self.unparseable > 0 {
            let _ = writeln!(out, "{:<width$}  {:>37}", "unparseable", self.unparseable);
        }
        out
    }

    /// Writes `report.json`, `report.txt` and `confusion.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        put("report.json", serde_json::to_string_pretty(self)? + "\n")?;
        put("report.txt", format!("{}\n{}", self.metadata.header_line(), self.render_text()))?;
        put("confusion.csv", self.confusion.to_csv())?;
        put("confusion.csv.meta.json", serde_json::to_string_pretty(&self.metadata)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const AB: [SmellLabel; 2] = [SmellLabel::Beautification, SmellLabel::CommentedOutCode];

    fn cm2(a: u64, b: u64, c: u64, d: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            labels: AB.to_vec(),
            counts: vec![vec![a, b], vec![c, d]],
            unparseable: vec![0, 0],
        }
    }

    #[test]
    fn direct_counts() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], &AB).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let diag = confusion_matrix(&[0, 1, 1], &[0, 1, 1], &AB).unwrap();
        assert_eq!(diag.counts, vec![vec![1, 0], vec![0, 2]]);
        assert!(confusion_matrix(&[], &[], &AB).is_err());
        assert!(confusion_matrix(&[0], &[2], &AB).is_err());
        assert!(confusion_matrix(&[0, 1], &[0], &AB).is_err());
    }

    #[test]
    fn perfect_and_degenerate() {
        let r = EvalReport::from_confusion(cm2(3, 0, 0, 4), RunMetadata::default());
        assert!(r.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
        assert_eq!(r.mcc, 1.0);
        assert_eq!(mcc(&cm2(3, 0, 4, 0)), 0.0);
        let three = ConfusionMatrix {
            labels: vec![AB[0], AB[1], SmellLabel::Task],
            counts: vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 0]],
            unparseable: vec![0; 3],
        };
        let m = class_metrics(&three);
        assert_eq!((m[2].precision, m[2].recall, m[2].f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn symmetric_two_by_two() {
        // (3*3 - 1*1) / sqrt(4*4*4*4) = 8/16
        assert!((mcc(&cm2(3, 1, 1, 3)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unparseable_counts_as_wrong() {
        let cm = confusion_matrix_with_unparseable(&[0, 0, 1, 1], &[Some(0), None, Some(1), None], &AB).unwrap();
        let r = EvalReport::from_confusion(cm, RunMetadata::default());
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.unparseable, 2);
        assert_eq!(r.per_class[0].support, 2);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert!(r.confusion.to_csv().lines().nth(1).unwrap().ends_with(",1"));
    }

    #[test]
    fn text_table_has_every_row() {
        let r = EvalReport::from_confusion(cm2(3, 1, 1, 3), RunMetadata::default());
        let t = r.render_text();
        assert!(t.contains("Beautification"));
        assert!(t.contains("weighted avg"));
        assert!(t.contains("MCC"));
    }

    fn binary_mcc(tp: f64, fn_: f64, fp: f64, tn: f64) -> f64 {
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if den == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / den
        }
    }

    proptest! {
        #[test]
        fn gorodkin_reduces_to_binary(a in 0u64..40, b in 0u64..40, c in 0u64..40, d in 0u64..40) {
            prop_assume!(a + b + c + d > 0);
            let got = mcc(&cm2(a, b, c, d));
            let want = binary_mcc(a as f64, b as f64, c as f64, d as f64);
            prop_assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }

        #[test]
        fn permuting_labels_keeps_accuracy_and_mcc(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..40),
        ) {
            let labels = [SmellLabel::Obvious, SmellLabel::Task, SmellLabel::Vague];
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let a = EvalReport::from_confusion(confusion_matrix(&t, &p, &labels).unwrap(), RunMetadata::default());
            let perm = [2usize, 0, 1];
            let t2: Vec<usize> = t.iter().map(|&v| perm[v]).collect();
            let p2: Vec<usize> = p.iter().map(|&v| perm[v]).collect();
            let labels2 = [labels[1], labels[2], labels[0]];
            let b = EvalReport::from_confusion(confusion_matrix(&t2, &p2, &labels2).unwrap(), RunMetadata::default());
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-15);
            prop_assert!((a.mcc - b.mcc).abs() < 1e-12);
            for r in &a.per_class {
                let q = b.per_class.iter().find(|x| x.label == r.label).unwrap();
                prop_assert_eq!(r, q);
            }
        }

        #[test]
        fn accuracy_is_micro_recall(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let labels = &SmellLabel::ALL[..4];
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let r = EvalReport::from_confusion(confusion_matrix(&t, &p, labels).unwrap(), RunMetadata::default());
            let micro_recall = r.confusion.trace() as f64 / r.per_class.iter().map(|m| m.support).sum::<u64>() as f64;
            prop_assert!((r.accuracy - micro_recall).abs() < 1e-15);
            prop_assert_eq!(r.confusion.total() as usize, t.len());
        }
    }
}
