//! Shared inputs for the criterion benches.

use smellscope_core::eval::{confusion_matrix, ConfusionMatrix};
use smellscope_core::features::{fit_vocabulary, tfidf_transform, tokenize};
use smellscope_core::synthetic::separable_dataset;
use smellscope_core::{FeatureMatrix, LabelEncoding, SmellLabel};

/// Tokenized comments of the synthetic corpus.
pub fn docs(n_classes: usize, per_class: usize, seed: u64) -> Vec<Vec<String>> {
    separable_dataset(n_classes, per_class, seed)
        .records
        .iter()
        .map(|r| tokenize(&r.comment_text))
        .collect()
}

/// TF-IDF rows and encoded labels of the synthetic corpus.
pub fn features(n_classes: usize, per_class: usize, seed: u64) -> (FeatureMatrix, Vec<usize>, LabelEncoding) {
    let d = separable_dataset(n_classes, per_class, seed);
    let docs: Vec<Vec<String>> = d.records.iter().map(|r| tokenize(&r.comment_text)).collect();
    let vocab = fit_vocabulary(&docs).expect("non-empty corpus");
    let labels = d.labels().expect("labelled");
    let enc = LabelEncoding::fit(&labels).expect("several classes");
    let y = enc.encode_all(&labels).expect("fitted on these labels");
    (tfidf_transform(&docs, &vocab), y, enc)
}

/// Imbalanced copy of [`features`]: class `c` keeps `per_class >> c` rows.
pub fn imbalanced(n_classes: usize, per_class: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let (x, y, _) = features(n_classes, per_class, seed);
    let keep: Vec<usize> = (0..y.len())
        .filter(|&i| i % per_class < (per_class >> y[i]).max(2))
        .collect();
    (x.select(&keep), keep.iter().map(|&i| y[i]).collect())
}

/// A `k`-class confusion matrix over `n` deterministic predictions.
pub fn confusion(k: usize, n: usize) -> ConfusionMatrix {
    let t: Vec<usize> = (0..n).map(|i| i % k).collect();
    let p: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % k).collect();
    confusion_matrix(&t, &p, &SmellLabel::ALL[..k]).expect("labels in range")
}

/// A Java file with `methods` methods, each carrying a few inline comments.
pub fn java_source(methods: usize) -> String {
    let mut s = String::from("class Generated {\n");
    for m in 0..methods {
        s.push_str(&format!(
            "    int m{m}(int a) {{\n        // start value\n        int x = a; // copy\n        /* loop over\n           the range */\n        for (int i = 0; i < a; i++) {{\n            x += i;\n        }}\n        return x;\n    }}\n\n"
        ));
    }
    s.push_str("}\n");
    s
}
