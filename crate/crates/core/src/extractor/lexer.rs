//! Lexical state machines for Java and Python.
//!
//! Only the states that decide where comments can start are modeled:
//! code, comments, and the literal forms of each language. The output is the
//! list of raw comments plus a masked copy of the source in which comment
//! characters are blanked and literal contents replaced with `_`, so later
//! passes can count brackets without tripping over text.

use crate::corpus::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    /// 0-based line index.
    pub line: usize,
    /// 0-based char column.
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawComment {
    pub start: Pos,
    /// Position of the last char of the comment (inclusive).
    pub end: Pos,
    pub block: bool,
    pub doc: bool,
    /// Content with delimiters removed, one entry per physical line.
    pub body: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Lexed {
    pub comments: Vec<RawComment>,
    pub masked: Vec<Vec<char>>,
    /// Line begins inside a string literal or block comment.
    pub starts_in_literal: Vec<bool>,
}

struct Cursor {
    chars: Vec<char>,
    pos: Vec<Pos>,
    masked: Vec<char>,
    in_literal_at: Vec<bool>,
}

impl Cursor {
    fn new(lines: &[Vec<char>]) -> Self {
        let mut chars = Vec::new();
        let mut pos = Vec::new();
        for (li, line) in lines.iter().enumerate() {
            for (ci, &ch) in line.iter().enumerate() {
                chars.push(ch);
                pos.push(Pos { line: li, col: ci });
            }
            if li + 1 < lines.len() {
                chars.push('\n');
                pos.push(Pos {
                    line: li,
                    col: line.len(),
                });
            }
        }
        let masked = chars.clone();
        let in_literal_at = vec![false; lines.len()];
        Cursor {
            chars,
            pos,
            masked,
            in_literal_at,
        }
    }

    fn at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    fn starts_with(&self, i: usize, pat: &str) -> bool {
        pat.chars().enumerate().all(|(k, ch)| self.at(i + k) == Some(ch))
    }

    /// Replaces `[from, to)` in the masked copy, keeping newlines, and marks
    /// any line that begins inside the range.
    fn mask(&mut self, from: usize, to: usize, with: char) {
        for i in from..to.min(self.chars.len()) {
            if self.chars[i] == '\n' {
                let next_line = self.pos[i].line + 1;
                if next_line < self.in_literal_at.len() {
                    self.in_literal_at[next_line] = true;
                }
            } else {
                self.masked[i] = with;
            }
        }
    }

    fn comment(&self, from: usize, to_inclusive: usize, body_from: usize, body_to: usize, block: bool, doc: bool) -> RawComment {
        let body: String = self.chars[body_from..body_to.max(body_from)].iter().collect();
        RawComment {
            start: self.pos[from],
            end: self.pos[to_inclusive.min(self.pos.len() - 1)],
            block,
            doc,
            body: body.split('\n').map(str::to_string).collect(),
        }
    }

    /// Scans a quoted literal that ends at the next unescaped `quote`, or at an
    /// unescaped newline when `stop_at_newline`. Returns the index just past it.
    fn skip_quoted(&self, mut j: usize, quote: &str, stop_at_newline: bool) -> (usize, usize) {
        let n = self.chars.len();
        while j < n {
            let ch = self.chars[j];
            if ch == '\\' {
                j += 2;
                continue;
            }
            if stop_at_newline && ch == '\n' {
                return (j, j);
            }
            if self.starts_with(j, quote) {
                return (j, j + quote.chars().count());
            }
            j += 1;
        }
        (n, n)
    }

    fn finish(self, comments: Vec<RawComment>, line_count: usize) -> Lexed {
        let mut masked: Vec<Vec<char>> = vec![Vec::new(); line_count];
        for (i, &ch) in self.masked.iter().enumerate() {
            if self.chars[i] != '\n' {
                masked[self.pos[i].line].push(ch);
            }
        }
        Lexed {
            comments,
            masked,
            starts_in_literal: self.in_literal_at,
        }
    }
}

pub(crate) fn lex(language: Language, lines: &[Vec<char>]) -> Lexed {
    match language {
        Language::Java => lex_java(lines),
        Language::Python => lex_python(lines),
    }
}

fn lex_java(lines: &[Vec<char>]) -> Lexed {
    let mut cur = Cursor::new(lines);
    let mut comments = Vec::new();
    let n = cur.chars.len();
    let mut i = 0;
    while i < n {
        let ch = cur.chars[i];
        if cur.starts_with(i, "//") {
            let mut j = i + 2;
            while j < n && cur.chars[j] != '\n' {
                j += 1;
            }
            comments.push(cur.comment(i, j - 1, i + 2, j, false, false));
            cur.mask(i, j, ' ');
            i = j;
        } else if cur.starts_with(i, "/*") {
            let doc = cur.at(i + 2) == Some('*') && cur.at(i + 3) != Some('/');
            let body_from = if doc { i + 3 } else { i + 2 };
            let mut j = i + 2;
            while j < n && !cur.starts_with(j, "*/") {
                j += 1;
            }
            let end = (j + 2).min(n);
            comments.push(cur.comment(i, end - 1, body_from, j, true, doc));
            cur.mask(i, end, ' ');
            i = end;
        } else if cur.starts_with(i, "\"\"\"") {
            let (close, next) = cur.skip_quoted(i + 3, "\"\"\"", false);
            cur.mask(i + 3, close, '_');
            i = next;
        } else if ch == '"' || ch == '\'' {
            let quote = if ch == '"' { "\"" } else { "'" };
            let (close, next) = cur.skip_quoted(i + 1, quote, true);
            cur.mask(i + 1, close, '_');
            i = next;
        } else {
            i += 1;
        }
    }
    cur.finish(comments, lines.len())
}

fn lex_python(lines: &[Vec<char>]) -> Lexed {
    let mut cur = Cursor::new(lines);
    let mut comments = Vec::new();
    let n = cur.chars.len();
    let mut i = 0;
    while i < n {
        let ch = cur.chars[i];
        if ch == '#' {
            let mut j = i + 1;
            while j < n && cur.chars[j] != '\n' {
                j += 1;
            }
            comments.push(cur.comment(i, j - 1, i + 1, j, false, false));
            cur.mask(i, j, ' ');
            i = j;
        } else if ch == '"' || ch == '\'' {
            let triple: String = std::iter::repeat_n(ch, 3).collect();
            if cur.starts_with(i, &triple) {
                let (close, next) = cur.skip_quoted(i + 3, &triple, false);
                cur.mask(i + 3, close, '_');
                i = next;
            } else {
                let (close, next) = cur.skip_quoted(i + 1, &ch.to_string(), true);
                cur.mask(i + 1, close, '_');
                i = next;
            }
        } else {
            i += 1;
        }
    }
    cur.finish(comments, lines.len())
}
