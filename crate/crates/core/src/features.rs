//! Tokenization, vocabulary fitting and TF-IDF vectorization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STOP_WORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// The embedded English stop-word list.
pub struct StopWords {
    words: BTreeSet<String>,
    hash: String,
}

impl StopWords {
    pub fn english() -> &'static StopWords {
        static LIST: OnceLock<StopWords> = OnceLock::new();
        LIST.get_or_init(|| StopWords {
            words: STOP_WORDS_EN
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
            hash: hex::encode(Sha256::digest(STOP_WORDS_EN.as_bytes())),
        })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// SHA-256 of the shipped list, recorded alongside fitted vocabularies.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerOptions {
    pub keep_short_tokens: bool,
}

/// Lowercased alphanumeric unigrams with stop words and (by default)
/// single-character tokens removed.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, TokenizerOptions::default())
}

pub fn tokenize_with(text: &str, opts: TokenizerOptions) -> Vec<String> {
    let stop = StopWords::english();
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| opts.keep_short_tokens || t.chars().count() > 1)
        .filter(|t| !stop.contains(t))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Terms in column order (lexicographic).
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    stop_list_hash: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }

    /// Smoothed inverse document frequency: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, column: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[column] as f64)).ln() + 1.0
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: Vocabulary = serde_json::from_str(s)?;
        if v.terms.len() != v.df.len() {
            return Err(Error::Invalid("vocabulary terms and df differ in length".into()));
        }
        v.rebuild_index();
        Ok(v)
    }
}

/// Fits a vocabulary on training documents. `df` counts documents, not occurrences.
pub fn fit_vocabulary(docs: &[Vec<String>]) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::Invalid("cannot fit a vocabulary on an empty corpus".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let distinct: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut vocab = Vocabulary {
        terms: df.keys().map(|t| t.to_string()).collect(),
        df: df.values().copied().collect(),
        n_docs: docs.len(),
        stop_list_hash: StopWords::english().hash().to_string(),
        index: HashMap::new(),
    };
    vocab.rebuild_index();
    Ok(vocab)
}

/// Sparse row with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut row = SparseRow::default();
        for (i, v) in pairs {
            if row.indices.last() == Some(&i) {
                *row.values.last_mut().expect("paired") += v;
            } else {
                row.indices.push(i);
                row.values.push(v);
            }
        }
        row
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseRow::from_pairs(
            values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        )
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, col: usize) -> f64 {
        match self.indices.binary_search(&(col as u32)) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * w[i]).sum()
    }

    pub fn dot(&self, other: &SparseRow) -> f64 {
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean distance, computed by merging the two supports.
    pub fn dist2(&self, other: &SparseRow) -> f64 {
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < self.indices.len() || b < other.indices.len() {
            let ia = self.indices.get(a).copied().unwrap_or(u32::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(u32::MAX);
            let d = if ia == ib {
                let d = self.values[a] - other.values[b];
                a += 1;
                b += 1;
                d
            } else if ia < ib {
                a += 1;
                self.values[a - 1]
            } else {
                b += 1;
                other.values[b - 1]
            };
            acc += d * d;
        }
        acc
    }
}

/// Documents × vocabulary terms. Row ids align with record ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_cols: usize,
    pub rows: Vec<SparseRow>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, rows: Vec<SparseRow>, row_ids: Vec<String>) -> Result<Self> {
        if rows.len() != row_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: row_ids.len(),
            });
        }
        if let Some(bad) = rows
            .iter()
            .flat_map(|r| r.indices.iter())
            .find(|&&i| i as usize >= n_cols)
        {
            return Err(Error::Invalid(format!("column {bad} outside width {n_cols}")));
        }
        Ok(FeatureMatrix {
            n_cols,
            rows,
            row_ids,
        })
    }

    pub fn from_dense(data: &[Vec<f64>]) -> Self {
        let n_cols = data.first().map_or(0, Vec::len);
        FeatureMatrix {
            n_cols,
            rows: data.iter().map(|r| SparseRow::from_dense(r)).collect(),
            row_ids: (0..data.len()).map(|i| i.to_string()).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            n_cols: self.n_cols,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Writes the documented triplet format: one JSON header line, then one
    /// `row col value` line per stored entry in row-major order.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = TripletHeader {
            format: TRIPLET_FORMAT.to_string(),
            version: 1,
            rows: self.n_rows(),
            cols: self.n_cols,
            nnz: self.rows.iter().map(SparseRow::nnz).sum(),
            row_ids: self.row_ids.clone(),
        };
        let io = |e| Error::io(path, e);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for (r, row) in self.rows.iter().enumerate() {
            for (c, v) in row.iter() {
                writeln!(w, "{r} {c} {v:?}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty triplet file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let header: TripletHeader = serde_json::from_str(&header_line)?;
        if header.format != TRIPLET_FORMAT || header.version != 1 {
            return Err(Error::Invalid(format!("unsupported matrix format {}", header.format)));
        }
        let mut pairs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); header.rows];
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let bad = || Error::MalformedRow {
                row: k + 2,
                reason: format!("bad triplet `{line}`"),
            };
            let mut parts = line.split_whitespace();
            let r: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            pairs.get_mut(r).ok_or_else(bad)?.push((c, v));
        }
        FeatureMatrix::new(
            header.cols,
            pairs.into_iter().map(SparseRow::from_pairs).collect(),
            header.row_ids,
        )
    }
}

const TRIPLET_FORMAT: &str = "smellscope-sparse-triplets";

#[derive(Debug, Serialize, Deserialize)]
struct TripletHeader {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    nnz: usize,
    row_ids: Vec<String>,
}

/// TF-IDF weights, L2-normalized per row. Out-of-vocabulary tokens are ignored.
pub fn tfidf_transform(docs: &[Vec<String>], vocab: &Vocabulary) -> FeatureMatrix {
    let ids = (0..docs.len()).map(|i| i.to_string()).collect();
    tfidf_transform_with_ids(docs, vocab, ids)
}

pub fn tfidf_transform_with_ids(docs: &[Vec<String>], vocab: &Vocabulary, row_ids: Vec<String>) -> FeatureMatrix {
    let rows = docs.iter().map(|doc| tfidf_row(doc, vocab)).collect();
    FeatureMatrix {
        n_cols: vocab.len(),
        rows,
        row_ids,
    }
}

fn tfidf_row(doc: &[String], vocab: &Vocabulary) -> SparseRow {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for t in doc {
        if let Some(i) = vocab.index_of(t) {
            *tf.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut row = SparseRow {
        indices: tf.keys().map(|&i| i as u32).collect(),
        values: tf.iter().map(|(&i, &f)| f * vocab.idf(i)).collect(),
    };
    let norm = row.norm();
    if norm > 0.0 {
        row.values.iter_mut().for_each(|v| *v /= norm);
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn stop_list_is_pinned() {
        assert_eq!(StopWords::english().len(), 318);
        assert_eq!(StopWords::english().hash().len(), 64);
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("Set the value"), ["set", "value"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("x += 1 // loop counter"), ["loop", "counter"]);
        assert_eq!(tokenize("snake_case camelCase"), ["snake", "case", "camelcase"]);
        assert_eq!(
            tokenize_with("x y", TokenizerOptions { keep_short_tokens: true }),
            ["x", "y"]
        );
    }

    #[test]
    fn vocabulary_counts_documents() {
        let v = fit_vocabulary(&docs(&[&["a", "b"], &["b", "c"]])).unwrap();
        assert_eq!(v.terms(), ["a", "b", "c"]);
        assert_eq!((v.df("a"), v.df("b"), v.df("c")), (Some(1), Some(2), Some(1)));
        assert_eq!(v.n_docs(), 2);

        let v = fit_vocabulary(&docs(&[&["a", "a", "a"]])).unwrap();
        assert_eq!(v.df("a"), Some(1));
        assert!(fit_vocabulary(&[]).is_err());
    }

    #[test]
    fn test_only_terms_stay_out() {
        let v = fit_vocabulary(&docs(&[&["train"]])).unwrap();
        let m = tfidf_transform(&docs(&[&["only", "test"]]), &v);
        assert_eq!(m.rows[0].nnz(), 0);
    }

    #[test]
    fn tfidf_hand_computed() {
        let d = docs(&[&["a", "b"], &["b"]]);
        let v = fit_vocabulary(&d).unwrap();
        let idf_a = (3.0f64 / 2.0).ln() + 1.0;
        assert!((v.idf(v.index_of("a").unwrap()) - idf_a).abs() < 1e-12);
        assert!((v.idf(v.index_of("b").unwrap()) - 1.0).abs() < 1e-12);
        assert!((idf_a - 1.4055).abs() < 1e-4);
        let m = tfidf_transform(&d, &v);
        let norm = (idf_a * idf_a + 1.0).sqrt();
        assert!((m.rows[0].get(0) - idf_a / norm).abs() < 1e-12);
        assert!((m.rows[0].get(1) - 1.0 / norm).abs() < 1e-12);
        assert!((m.rows[1].get(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_document_row_is_normalized_tf() {
        let d = docs(&[&["a", "a", "b"]]);
        let v = fit_vocabulary(&d).unwrap();
        let m = tfidf_transform(&d, &v);
        let n = 5f64.sqrt();
        assert!((m.rows[0].get(0) - 2.0 / n).abs() < 1e-12);
        assert!((m.rows[0].get(1) - 1.0 / n).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let v = fit_vocabulary(&docs(&[&["a", "b"], &["b", "c"]])).unwrap();
        let back = Vocabulary::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index_of("c"), Some(2));
    }

    #[test]
    fn triplet_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::from_dense(&[vec![0.0, 0.1, 0.0], vec![1.0 / 3.0, 0.0, 2.5]]);
        let p = dir.path().join("m.triplets");
        m.write_triplets(&p).unwrap();
        assert_eq!(FeatureMatrix::read_triplets(&p).unwrap(), m);
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(prop::collection::vec("[a-e]{2}", 0..6), 1..12)
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "[ -~]{0,60}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn rows_are_unit_or_zero(train in arb_docs(), test in arb_docs()) {
            let v = fit_vocabulary(&train).unwrap();
            let m = tfidf_transform(&test, &v);
            for (doc, row) in test.iter().zip(&m.rows) {
                prop_assert!(row.values.iter().all(|&w| w >= 0.0));
                if doc.iter().any(|t| v.index_of(t).is_some()) {
                    prop_assert!((row.norm() - 1.0).abs() < 1e-9);
                } else {
                    prop_assert_eq!(row.nnz(), 0);
                }
            }
            for c in 0..v.len() {
                prop_assert!(v.idf(c) >= 1.0);
            }
        }

        #[test]
        fn transform_is_row_independent(train in arb_docs(), pick in prop::collection::vec(any::<prop::sample::Index>(), 1..5)) {
            let v = fit_vocabulary(&train).unwrap();
            let full = tfidf_transform(&train, &v);
            let idx: Vec<usize> = pick.iter().map(|i| i.index(train.len())).collect();
            let subset: Vec<Vec<String>> = idx.iter().map(|&i| train[i].clone()).collect();
            let part = tfidf_transform(&subset, &v);
            for (k, &i) in idx.iter().enumerate() {
                prop_assert_eq!(&part.rows[k], &full.rows[i]);
            }
        }

        #[test]
        fn identical_docs_have_cosine_one(doc in prop::collection::vec("[a-e]{2}", 1..6)) {
            let d = vec![doc.clone(), doc];
            let v = fit_vocabulary(&d).unwrap();
            let m = tfidf_transform(&d, &v);
            prop_assert!((m.rows[0].dot(&m.rows[1]) - 1.0).abs() < 1e-9);
        }
    }
}
