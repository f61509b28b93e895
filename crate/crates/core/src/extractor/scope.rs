//! Scope heuristics: which code a comment refers to.
//!
//! Rule order: NA categories first (only with a label hint), then same-line
//! code for trailing comments, then block openers directly above (comment is
//! the first line of the body) or below (comment heads the block), then a
//! single complete statement below or above. Anything else is ambiguous and
//! goes to manual review.

use serde::{Deserialize, Serialize};

use super::lexer::Lexed;
use super::{InlineComment, PositionContext, SourceAnalysis};
use crate::corpus::{Language, LineSpan, NA_CODE};
use crate::label::SmellLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeRule {
    NaCategory,
    SingleLineSame,
    SingleLineAbove,
    SingleLineBelow,
    BlockLevel,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeDecision {
    pub rule: ScopeRule,
    /// `NA` for NA categories, empty when ambiguous.
    pub segment: String,
    pub segment_span: Option<LineSpan>,
    pub needs_review: bool,
}

impl ScopeDecision {
    fn na() -> Self {
        ScopeDecision {
            rule: ScopeRule::NaCategory,
            segment: NA_CODE.to_string(),
            segment_span: None,
            needs_review: false,
        }
    }

    fn ambiguous() -> Self {
        ScopeDecision {
            rule: ScopeRule::Ambiguous,
            segment: String::new(),
            segment_span: None,
            needs_review: true,
        }
    }

    fn found(rule: ScopeRule, segment: String, first: usize, last: usize) -> Self {
        ScopeDecision {
            rule,
            segment,
            segment_span: Some(LineSpan {
                start: first + 1,
                end: last + 1,
            }),
            needs_review: false,
        }
    }
}

/// Per-line facts derived from the masked source. Indices are 0-based.
pub(crate) struct LineFacts {
    language: Language,
    /// Masked line, comments blanked and literal contents replaced.
    code: Vec<String>,
    starts_logical: Vec<bool>,
    ends_complete: Vec<bool>,
    /// Net `{` minus `}` (Java only).
    brace_net: Vec<i64>,
    indent: Vec<usize>,
}

impl LineFacts {
    pub(crate) fn compute(language: Language, lexed: &Lexed, raw: &[String]) -> Self {
        let n = lexed.masked.len();
        let code: Vec<String> = lexed.masked.iter().map(|l| l.iter().collect()).collect();
        let mut depth: i64 = 0;
        let mut depth_start = vec![0i64; n];
        let mut depth_end = vec![0i64; n];
        let mut brace_net = vec![0i64; n];
        for (i, line) in code.iter().enumerate() {
            depth_start[i] = depth;
            for ch in line.chars() {
                match (ch, language) {
                    ('(' | '[', _) | ('{', Language::Python) => depth += 1,
                    (')' | ']', _) | ('}', Language::Python) => depth = (depth - 1).max(0),
                    ('{', Language::Java) => brace_net[i] += 1,
                    ('}', Language::Java) => brace_net[i] -= 1,
                    _ => {}
                }
            }
            depth_end[i] = depth;
        }
        let backslash: Vec<bool> = code
            .iter()
            .map(|l| language == Language::Python && l.trim_end().ends_with('\\'))
            .collect();
        let starts_logical = (0..n)
            .map(|i| {
                !lexed.starts_in_literal[i] && depth_start[i] == 0 && !(i > 0 && backslash[i - 1])
            })
            .collect();
        let ends_complete = (0..n)
            .map(|i| {
                let next_in_literal = i + 1 < n && lexed.starts_in_literal[i + 1];
                !next_in_literal && depth_end[i] == 0 && !backslash[i]
            })
            .collect();
        let indent = raw
            .iter()
            .map(|l| l.chars().take_while(|c| c.is_whitespace()).count())
            .collect();
        LineFacts {
            language,
            code,
            starts_logical,
            ends_complete,
            brace_net,
            indent,
        }
    }

    fn len(&self) -> usize {
        self.code.len()
    }

    fn has_code(&self, i: usize) -> bool {
        !self.code[i].trim().is_empty()
    }

    fn trimmed(&self, i: usize) -> &str {
        self.code[i].trim()
    }

    fn first_word(&self, i: usize) -> &str {
        let t = self.trimmed(i).trim_start_matches('}').trim_start();
        let end = t
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(t.len());
        &t[..end]
    }

    fn logical_start(&self, mut i: usize) -> usize {
        while i > 0 && !self.starts_logical[i] {
            i -= 1;
        }
        i
    }

    fn logical_end(&self, mut i: usize) -> usize {
        while i + 1 < self.len() && !self.ends_complete[i] {
            i += 1;
        }
        i
    }

    /// One physical line holding one complete statement.
    fn is_statement(&self, i: usize) -> bool {
        if !self.has_code(i) || !self.starts_logical[i] || !self.ends_complete[i] {
            return false;
        }
        let t = self.trimmed(i);
        match self.language {
            Language::Java => self.brace_net[i] == 0 && (t.ends_with(';') || t.ends_with('}')),
            Language::Python => !t.ends_with(':'),
        }
    }

    fn is_annotation(&self, i: usize) -> bool {
        let t = self.trimmed(i);
        t.starts_with('@') && !t.ends_with(';')
    }

    /// If the logical line ending at `end` opens a block, returns the line
    /// where its header starts.
    fn opener_header(&self, end: usize) -> Option<usize> {
        if !self.has_code(end) || !self.ends_complete[end] {
            return None;
        }
        let start = self.logical_start(end);
        let word = self.first_word(start);
        match self.language {
            Language::Java => {
                let t = self.trimmed(end);
                let header_net: i64 = self.brace_net[start..=end].iter().sum();
                let starts_with_close = self.trimmed(start).starts_with('}');
                let opens = t.ends_with('{') && (header_net > 0 || (starts_with_close && header_net == 0));
                let header: String = (start..=end).map(|k| self.code[k].as_str()).collect();
                let looks_like_block = header.contains(')')
                    || matches!(word, "else" | "try" | "do" | "finally" | "static" | "synchronized");
                let is_type = header
                    .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .any(|w| matches!(w, "class" | "interface" | "enum" | "record"));
                (opens && looks_like_block && !is_type).then_some(start)
            }
            Language::Python => {
                let word = if word == "async" {
                    self.trimmed(start)["async".len()..]
                        .trim_start()
                        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                        .next()
                        .unwrap_or("")
                } else {
                    word
                };
                let opens = self.trimmed(end).ends_with(':')
                    && matches!(
                        word,
                        "def" | "for" | "while" | "if" | "elif" | "else" | "try" | "except" | "finally" | "with"
                    );
                opens.then_some(start)
            }
        }
    }

    /// Last line of the Java block whose header ends on `header_end`.
    fn java_block_end(&self, header_start: usize, header_end: usize) -> usize {
        let mut depth: i64 = 0;
        for i in header_start..self.len() {
            for ch in self.code[i].chars() {
                match ch {
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 && i > header_end {
                            return i;
                        }
                    }
                    _ => {}
                }
            }
            if i == header_end {
                depth = 1;
            }
        }
        self.len() - 1
    }
}

fn nearest_nonblank(src_lines: &[String], from: usize, up: bool) -> Option<usize> {
    let mut i = from;
    loop {
        if up {
            i = i.checked_sub(1)?;
        } else {
            i += 1;
            if i >= src_lines.len() {
                return None;
            }
        }
        if !src_lines[i].trim().is_empty() {
            return Some(i);
        }
    }
}

pub(crate) fn associate(a: &SourceAnalysis<'_>, c: &InlineComment, hint: Option<SmellLabel>) -> ScopeDecision {
    if hint.is_some_and(SmellLabel::is_na_category) {
        return ScopeDecision::na();
    }
    let raw = &a.src.lines;
    let facts = &a.lines;
    let first = c.line_span.start - 1;
    let last = c.line_span.end - 1;

    if c.position == PositionContext::Trailing {
        let before: String = raw[first].chars().take(c.column).collect();
        let (segment, line) = if before.trim().is_empty() {
            (raw[last].chars().skip(c.end_column).collect::<String>(), last)
        } else {
            (before, first)
        };
        return ScopeDecision::found(ScopeRule::SingleLineSame, segment.trim().to_string(), line, line);
    }

    let above = nearest_nonblank(raw, first, true);
    let below = nearest_nonblank(raw, last, false);

    // First line inside a block: the header sits directly above.
    if let Some(up) = above {
        if let Some(header) = facts.opener_header(up) {
            return block_decision(a, header, up);
        }
    }
    // Heading a block: the header (after any decorators) sits directly below.
    if let Some(mut down) = below {
        let decorated_from = down;
        while facts.is_annotation(down) && facts.starts_logical[down] {
            match nearest_nonblank(raw, down, false) {
                Some(next) => down = next,
                None => break,
            }
        }
        if facts.starts_logical[down] {
            let end = facts.logical_end(down);
            if facts.opener_header(end) == Some(down) {
                let mut d = block_decision(a, down, end);
                if decorated_from != down {
                    let span = d.segment_span.expect("block has a span");
                    d = block_from(a, decorated_from, span.end - 1, down);
                }
                return d;
            }
        }
    }
    if let Some(down) = below {
        if facts.is_statement(down) {
            return ScopeDecision::found(ScopeRule::SingleLineBelow, raw[down].trim().to_string(), down, down);
        }
    }
    if let Some(up) = above {
        if facts.is_statement(up) {
            return ScopeDecision::found(ScopeRule::SingleLineAbove, raw[up].trim().to_string(), up, up);
        }
    }
    ScopeDecision::ambiguous()
}

fn block_decision(a: &SourceAnalysis<'_>, header_start: usize, header_end: usize) -> ScopeDecision {
    let end = block_end(a, header_start, header_end);
    block_from(a, header_start, end, header_start)
}

fn block_end(a: &SourceAnalysis<'_>, header_start: usize, header_end: usize) -> usize {
    let facts = &a.lines;
    if facts.language == Language::Java {
        return facts.java_block_end(header_start, header_end);
    }
    let base = facts.indent[header_start];
    let mut last = header_end;
    for i in header_end + 1..facts.len() {
        if a.src.lines[i].trim().is_empty() {
            continue;
        }
        if facts.starts_logical[i] && facts.indent[i] <= base {
            break;
        }
        last = i;
    }
    last
}

/// Renders lines `first..=last` with the header's indentation removed. A Java
/// header that starts with closing braces (`} else {`) is cut after them, and
/// the last line is cut after the block's closing brace.
fn block_from(a: &SourceAnalysis<'_>, first: usize, last: usize, header: usize) -> ScopeDecision {
    let raw = &a.src.lines;
    let base = a.lines.indent[header].min(a.lines.indent[first]);
    let mut out: Vec<String> = Vec::with_capacity(last - first + 1);
    for (i, text) in raw.iter().enumerate().take(last + 1).skip(first) {
        let line: String = if i == first {
            let mut t = text.trim_start();
            if a.lines.language == Language::Java {
                t = t.trim_start_matches(|c: char| c == '}' || c.is_whitespace());
            }
            t.to_string()
        } else {
            let strip = text.chars().take(base).take_while(|c| c.is_whitespace()).count();
            text.chars().skip(strip).collect()
        };
        out.push(line);
    }
    if a.lines.language == Language::Java {
        if let Some(last_line) = out.last_mut() {
            let cut = closing_cut(&a.lines.code[last], last_line, raw[last].chars().count());
            last_line.truncate(cut);
        }
    }
    let segment = out
        .iter()
        .map(|l| l.trim_end())
        .collect::<Vec<_>>()
        .join("\n");
    ScopeDecision::found(ScopeRule::BlockLevel, segment, first, last)
}

/// Byte length of `rendered` up to and including the first `}` that brings the
/// masked line's running brace count below zero.
fn closing_cut(masked: &str, rendered: &str, raw_len: usize) -> usize {
    let offset = raw_len - rendered.chars().count();
    let mut depth = 0i64;
    for (idx, ch) in masked.chars().enumerate() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 && idx >= offset {
                    let keep_chars = idx + 1 - offset;
                    return rendered
                        .char_indices()
                        .nth(keep_chars)
                        .map(|(b, _)| b)
                        .unwrap_or(rendered.len());
                }
            }
            _ => {}
        }
    }
    rendered.len()
}
