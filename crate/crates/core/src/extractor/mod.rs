//! Inline comment extraction and comment-to-code scope association.

mod lexer;
mod scan;
mod scope;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CodeField, CommentRecord, Language, LineSpan};
use crate::error::{Error, Result};
use crate::label::SmellLabel;

pub use scan::{scan_tree, ScanOptions};
pub use scope::{ScopeDecision, ScopeRule};

use lexer::{Lexed, RawComment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    /// Path as reported in records, `/`-separated.
    pub path: String,
    pub language: Language,
    pub lines: Vec<String>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, language: Language, text: &str) -> Self {
        let lines = text
            .split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        SourceFile {
            path: path.into(),
            language,
            lines,
        }
    }

    /// Reads a file from disk. Invalid UTF-8 is replaced lossily with a warning.
    pub fn read(path: &Path, display: impl Into<String>, language: Option<Language>) -> Result<Self> {
        let language = language
            .or_else(|| Language::from_extension(path))
            .ok_or_else(|| Error::Invalid(format!("cannot infer language of {}", path.display())))?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: invalid UTF-8, decoding lossily", path.display());
                String::from_utf8_lossy(e.as_bytes()).into_owned()
            }
        };
        Ok(SourceFile::new(display, language, &text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommentKind {
    Line,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionContext {
    OwnLine,
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineComment {
    pub file: String,
    pub line_span: LineSpan,
    /// Comment content without delimiters; one line per physical line.
    pub text: String,
    pub kind: CommentKind,
    pub position: PositionContext,
    /// 0-based char column of the opening delimiter on the first line.
    pub column: usize,
    /// 0-based char column just past the closing delimiter on the last line.
    pub end_column: usize,
}

/// Lexed view of one source file, shared by extraction and scope association.
pub struct SourceAnalysis<'a> {
    pub(crate) src: &'a SourceFile,
    pub(crate) lexed: Lexed,
    pub(crate) lines: scope::LineFacts,
}

impl<'a> SourceAnalysis<'a> {
    pub fn new(src: &'a SourceFile) -> Self {
        let chars: Vec<Vec<char>> = src.lines.iter().map(|l| l.chars().collect()).collect();
        let lexed = lexer::lex(src.language, &chars);
        let lines = scope::LineFacts::compute(src.language, &lexed, &src.lines);
        SourceAnalysis { src, lexed, lines }
    }

    pub fn comments(&self) -> Vec<InlineComment> {
        let mut out: Vec<InlineComment> = Vec::new();
        let mut pending: Option<(InlineComment, usize)> = None;
        for raw in &self.lexed.comments {
            if raw.doc || self.is_file_pragma(raw) {
                continue;
            }
            let Some(comment) = self.to_inline(raw) else {
                if let Some(p) = pending.take() {
                    out.push(p.0);
                }
                continue;
            };
            // Consecutive own-line `//`/`#` comments in one column merge.
            if let Some((prev, prev_end_line)) = pending.as_mut() {
                let mergeable = comment.kind == CommentKind::Line
                    && comment.position == PositionContext::OwnLine
                    && prev.kind == CommentKind::Line
                    && prev.position == PositionContext::OwnLine
                    && prev.column == comment.column
                    && raw.start.line == *prev_end_line + 1;
                if mergeable {
                    prev.text.push('\n');
                    prev.text.push_str(&comment.text);
                    prev.line_span.end = comment.line_span.end;
                    prev.end_column = comment.end_column;
                    *prev_end_line = raw.start.line;
                    continue;
                }
            }
            if let Some(p) = pending.take() {
                out.push(p.0);
            }
            pending = Some((comment, raw.end.line));
        }
        if let Some(p) = pending {
            out.push(p.0);
        }
        out.into_iter().filter_map(trim_comment).collect()
    }

    fn is_file_pragma(&self, raw: &RawComment) -> bool {
        if self.src.language != Language::Python || raw.start.line > 1 || raw.start.col != 0 {
            return false;
        }
        let body = raw.body[0].as_str();
        (raw.start.line == 0 && body.starts_with('!'))
            || (body.contains("coding:") || body.contains("coding="))
    }

    fn to_inline(&self, raw: &RawComment) -> Option<InlineComment> {
        let kind = if raw.block {
            CommentKind::Block
        } else {
            CommentKind::Line
        };
        let body: Vec<String> = raw
            .body
            .iter()
            .enumerate()
            .map(|(i, line)| {
                let t = line.trim();
                if raw.block && i > 0 {
                    t.trim_start_matches('*').trim().to_string()
                } else {
                    t.to_string()
                }
            })
            .collect();
        let code_before = self.lexed.masked[raw.start.line][..raw.start.col]
            .iter()
            .any(|c| !c.is_whitespace());
        let code_after = self.lexed.masked[raw.end.line]
            .get(raw.end.col + 1..)
            .is_some_and(|rest| rest.iter().any(|c| !c.is_whitespace()));
        let position = if code_before || code_after {
            PositionContext::Trailing
        } else {
            PositionContext::OwnLine
        };
        Some(InlineComment {
            file: self.src.path.clone(),
            line_span: LineSpan {
                start: raw.start.line + 1,
                end: raw.end.line + 1,
            },
            text: body.join("\n"),
            kind,
            position,
            column: raw.start.col,
            end_column: raw.end.col + 1,
        })
    }

    /// Decides which code the comment talks about.
    pub fn associate(&self, c: &InlineComment, label_hint: Option<SmellLabel>) -> Result<ScopeDecision> {
        if c.file != self.src.path || c.line_span.end > self.src.lines.len() || c.line_span.start == 0 {
            return Err(Error::SourceMismatch(self.src.path.clone()));
        }
        Ok(scope::associate(self, c, label_hint))
    }
}

/// Drops blank edge lines; returns `None` for comments with no text at all.
fn trim_comment(mut c: InlineComment) -> Option<InlineComment> {
    let lines: Vec<&str> = c.text.split('\n').collect();
    let first = lines.iter().position(|l| !l.is_empty())?;
    let last = lines.iter().rposition(|l| !l.is_empty())?;
    c.text = lines[first..=last].join("\n");
    if c.kind == CommentKind::Line {
        // Merged line comments map one text line to one source line.
        c.line_span.start += first;
        c.line_span.end = c.line_span.start + (last - first);
    }
    Some(c)
}

/// Inline comments of `src` in document order. Documentation comments
/// (`/** */`) and everything inside literals are never reported.
pub fn extract_inline_comments(src: &SourceFile) -> Vec<InlineComment> {
    SourceAnalysis::new(src).comments()
}

pub fn associate_code_segment(
    c: &InlineComment,
    src: &SourceFile,
    label_hint: Option<SmellLabel>,
) -> Result<ScopeDecision> {
    SourceAnalysis::new(src).associate(c, label_hint)
}

/// A comment whose scope needs a human decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    pub file_path: String,
    pub line_span: LineSpan,
    pub comment: String,
    pub reason: String,
}

/// Extracts every comment of `files` as an unlabeled record, with its code
/// segment resolved where the heuristics allow.
pub fn extract_records(files: &[SourceFile], project: &str) -> (Vec<CommentRecord>, Vec<ReviewItem>) {
    use rayon::prelude::*;

    let per_file: Vec<Vec<(CommentRecord, Option<ReviewItem>)>> = files
        .par_iter()
        .map(|src| {
            let analysis = SourceAnalysis::new(src);
            analysis
                .comments()
                .into_iter()
                .map(|c| {
                    let decision = analysis.associate(&c, None).expect("comment comes from this file");
                    let id = format!("{}:{}", src.path, c.line_span.start);
                    let review = decision.needs_review.then(|| ReviewItem {
                        id: id.clone(),
                        file_path: src.path.clone(),
                        line_span: c.line_span,
                        comment: c.text.clone(),
                        reason: "no single-line or block scope applies".into(),
                    });
                    let code = match decision.rule {
                        ScopeRule::NaCategory => CodeField::Na,
                        ScopeRule::Ambiguous => CodeField::Unresolved,
                        _ => CodeField::Segment(decision.segment.clone()),
                    };
                    let record = CommentRecord {
                        id,
                        project: project.to_string(),
                        language: src.language,
                        file_path: src.path.clone(),
                        line_span: c.line_span,
                        comment_text: c.text,
                        code,
                        label: None,
                    };
                    (record, review)
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut reviews = Vec::new();
    for (record, review) in per_file.into_iter().flatten() {
        records.push(record);
        reviews.extend(review);
    }
    (records, reviews)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn java(text: &str) -> SourceFile {
        SourceFile::new("A.java", Language::Java, text)
    }

    fn python(text: &str) -> SourceFile {
        SourceFile::new("a.py", Language::Python, text)
    }

    #[test]
    fn trailing_java_comment() {
        let cs = extract_inline_comments(&java("int x = 0; // counter"));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].text, "counter");
        assert_eq!(cs[0].kind, CommentKind::Line);
        assert_eq!(cs[0].position, PositionContext::Trailing);
    }

    #[test]
    fn javadoc_is_skipped() {
        let src = "class A {\n    /** Returns x */\n    int x() { return x; }\n}";
        assert!(extract_inline_comments(&java(src)).is_empty());
    }

    #[test]
    fn python_string_hash_is_not_a_comment() {
        assert!(extract_inline_comments(&python("s = \"# not a comment\"")).is_empty());
        assert!(extract_inline_comments(&python("def f():\n    \"\"\"Doc # no.\"\"\"\n    return 1")).is_empty());
    }

    #[test]
    fn consecutive_line_comments_merge() {
        let src = "    // first\n    // second\n\n    // third\n  // fourth\nx();";
        let cs = extract_inline_comments(&java(src));
        let got: Vec<_> = cs.iter().map(|c| (c.text.as_str(), c.line_span.start, c.line_span.end)).collect();
        assert_eq!(got, vec![("first\nsecond", 1, 2), ("third", 4, 4), ("fourth", 5, 5)]);
    }

    #[test]
    fn trailing_comments_do_not_merge() {
        let cs = extract_inline_comments(&python("a = 1  # one\nb = 2  # two"));
        assert_eq!(cs.len(), 2);
    }

    #[test]
    fn block_comment_text_strips_stars() {
        let cs = extract_inline_comments(&java("/*\n * Some words\n * here\n */\nfoo();"));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].text, "Some words\nhere");
        assert_eq!(cs[0].kind, CommentKind::Block);
        assert_eq!(cs[0].line_span, LineSpan { start: 1, end: 4 });
    }

    #[test]
    fn shebang_and_coding_lines_are_skipped() {
        let cs = extract_inline_comments(&python("#!/usr/bin/env python\n# -*- coding: utf-8 -*-\n# real\nx = 1"));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].text, "real");
    }

    #[test]
    fn empty_comments_are_dropped() {
        assert!(extract_inline_comments(&python("#\nx = 1 #")).is_empty());
    }

    #[test]
    fn association_rejects_foreign_comment() {
        let a = java("x(); // y");
        let mut c = extract_inline_comments(&a).remove(0);
        c.file = "B.java".into();
        assert!(matches!(associate_code_segment(&c, &a, None), Err(Error::SourceMismatch(_))));
    }

    fn literal_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("//".to_string()),
                Just("#".to_string()),
                Just("/*".to_string()),
                "[a-z ]{0,4}".prop_map(|s| s),
            ],
            1..6,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn markers_inside_literals_never_yield_comments(body in literal_text(), n in 0usize..3) {
            let mut java_src = String::from("class A {\n");
            let mut py_src = String::new();
            for i in 0..=n {
                java_src.push_str(&format!("  String s{i} = \"{body}\"; char c{i} = '/';\n"));
                py_src.push_str(&format!("s{i} = '{body}' + \"{body}\"\nt{i} = '''{body}\n{body}'''\n"));
            }
            java_src.push('}');
            prop_assert!(extract_inline_comments(&java(&java_src)).is_empty());
            prop_assert!(extract_inline_comments(&python(&py_src)).is_empty());
        }

        #[test]
        fn extracted_text_is_found_in_its_span(words in prop::collection::vec("[a-z]{1,6}", 1..8), trailing in any::<bool>()) {
            let mut src = String::new();
            for (i, w) in words.iter().enumerate() {
                if trailing || i % 3 == 0 {
                    src.push_str(&format!("x{i} = 1  # {w}\n"));
                } else {
                    src.push_str(&format!("# {w}\n\ny{i} = 2\n"));
                }
            }
            let file = python(&src);
            for c in extract_inline_comments(&file) {
                let span_lines = &file.lines[c.line_span.start - 1..c.line_span.end];
                for text_line in c.text.split('\n') {
                    prop_assert!(span_lines.iter().any(|l| l.contains(text_line)));
                }
            }
        }
    }
}
