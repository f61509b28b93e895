//! Small labelled corpora with disjoint per-class keyword vocabularies, for
//! tests, benchmarks and smoke runs.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::corpus::{CodeField, CommentRecord, Dataset, Language, LineSpan};
use crate::label::SmellLabel;
use crate::rng::substream;

const KEYWORDS: [(SmellLabel, [&str; 8]); 10] = [
    (SmellLabel::Beautification, ["dashes", "banner", "stars", "divider", "ruler", "separator", "hashes", "frame"]),
    (SmellLabel::CommentedOutCode, ["println", "printf", "int", "return", "foo", "bar", "baz", "semicolon"]),
    (SmellLabel::Irrelevant, ["weather", "lunch", "coffee", "holiday", "football", "pizza", "music", "garden"]),
    (SmellLabel::Misleading, ["actually", "wrong", "supposedly", "claims", "lies", "outdated", "incorrect", "stale"]),
    (SmellLabel::NonLocalInfo, ["offsite", "module", "global", "remote", "package", "distant", "upstream", "config"]),
    (SmellLabel::NotASmell, ["precondition", "invariant", "workaround", "ensures", "guarantees", "reason", "rationale", "caveat"]),
    (SmellLabel::Obvious, ["increment", "getter", "setter", "constructor", "assign", "loop", "declare", "counter"]),
    (SmellLabel::Task, ["todo", "fixme", "hack", "later", "implement", "pending", "xxx", "followup"]),
    (SmellLabel::TooMuchInfo, ["history", "changelog", "story", "meeting", "discussion", "ticket", "timeline", "author"]),
    (SmellLabel::Vague, ["stuff", "thing", "kinda", "maybe", "misc", "various", "sorta", "things"]),
];

const FILLER: [&str; 6] = ["value", "method", "result", "data", "code", "list"];

/// The labels used by [`separable_dataset`] for `n_classes` classes.
pub fn classes(n_classes: usize) -> Vec<SmellLabel> {
    // Spread over the table so small corpora mix NA and code-bound labels.
    let order = [5, 6, 7, 0, 1, 9, 3, 8, 2, 4];
    let mut out: Vec<SmellLabel> = order[..n_classes.min(10)].iter().map(|&i| KEYWORDS[i].0).collect();
    out.sort();
    out
}

/// `per_class` comments per class. Each comment has 3 to 5 of its class's
/// keywords and up to 2 shared filler words.
pub fn separable_dataset(n_classes: usize, per_class: usize, seed: u64) -> Dataset {
    let mut rng = substream(seed, "synthetic");
    let mut records = Vec::new();
    for label in classes(n_classes) {
        let words = &KEYWORDS.iter().find(|(l, _)| *l == label).expect("label in table").1;
        for i in 0..per_class {
            let n_kw = rng.random_range(3..=5);
            let mut text: Vec<&str> = (0..n_kw).map(|_| *words.choose(&mut rng).expect("non-empty")).collect();
            for _ in 0..rng.random_range(0..=2) {
                text.push(FILLER.choose(&mut rng).expect("non-empty"));
            }
            let line = records.len() + 1;
            records.push(CommentRecord {
                id: format!("syn-{}-{i}", label.as_str()),
                project: "synthetic".into(),
                language: Language::Java,
                file_path: "Synthetic.java".into(),
                line_span: LineSpan::single(line),
                comment_text: text.join(" "),
                code: if label.is_na_category() {
                    CodeField::Na
                } else {
                    CodeField::Segment("x++;".into())
                },
                label: Some(label),
            });
        }
    }
    Dataset::new(records).expect("ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn vocabularies_are_disjoint() {
        let mut seen = HashSet::new();
        for (_, words) in KEYWORDS {
            for w in words.iter() {
                assert!(seen.insert(*w), "{w} repeated");
            }
        }
        for w in FILLER {
            assert!(!seen.contains(w));
        }
        let stop = crate::features::StopWords::english();
        assert!(seen.iter().chain(FILLER.iter()).all(|w| !stop.contains(w)));
    }

    #[test]
    fn shape_and_determinism() {
        let d = separable_dataset(4, 50, 7);
        assert_eq!(d.len(), 200);
        assert_eq!(d.histogram().values().copied().collect::<Vec<_>>(), vec![50; 4]);
        assert_eq!(d, separable_dataset(4, 50, 7));
    }
}
