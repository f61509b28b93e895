use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CodeField, CommentRecord};
use crate::error::{Error, Result};
use crate::label::SmellLabel;

const BUNDLED: &str = include_str!("../../data/taxonomy.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub label: SmellLabel,
    pub name: String,
    pub description: String,
    pub example: String,
    #[serde(default)]
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub answer_instruction: String,
    pub comment_heading: String,
    pub code_heading: String,
    #[serde(rename = "category")]
    pub categories: Vec<CategoryEntry>,
}

impl PromptTemplate {
    /// The template shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled taxonomy is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t: PromptTemplate =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("prompt template: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every canonical label must appear exactly once.
    pub fn validate(&self) -> Result<()> {
        for label in SmellLabel::ALL {
            let n = self.categories.iter().filter(|c| c.label == label).count();
            if n != 1 {
                return Err(Error::Invalid(format!(
                    "prompt template lists `{label}` {n} times; expected once"
                )));
            }
        }
        if self.categories.len() != SmellLabel::ALL.len() {
            return Err(Error::Invalid("prompt template has extra categories".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, so formatting-only edits to the
    /// TOML source do not change it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("template serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Renders the prompt for one record. With `include_code`, a code section is
/// appended holding the associated segment, or `NA` when the record has none.
pub fn build_prompt(r: &CommentRecord, t: &PromptTemplate, include_code: bool) -> String {
    let mut out = String::new();
    out.push_str(t.preamble.trim());
    out.push_str("\n\n");
    for (i, c) in t.categories.iter().enumerate() {
        out.push_str(&format!(
            "{}. {}: {}\n   Example: {}\n",
            i + 1,
            c.name,
            c.description.trim(),
            c.example.trim()
        ));
    }
    out.push('\n');
    out.push_str(&t.comment_heading);
    out.push('\n');
    out.push_str(r.comment_text.trim_end());
    out.push_str("\n\n");
    if include_code {
        out.push_str(&t.code_heading);
        out.push('\n');
        match &r.code {
            CodeField::Segment(s) => out.push_str(s.trim_end()),
            CodeField::Na | CodeField::Unresolved => out.push_str(crate::corpus::NA_CODE),
        }
        out.push_str("\n\n");
    }
    out.push_str(t.answer_instruction.trim());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::record;

    #[test]
    fn bundled_template_is_complete() {
        let t = PromptTemplate::bundled();
        assert_eq!(t.categories.len(), 10);
        assert_eq!(t.hash().len(), 64);
    }

    #[test]
    fn prompt_lists_every_category() {
        let t = PromptTemplate::bundled();
        let p = build_prompt(&record("1", "// increment i", None), &t, true);
        for label in SmellLabel::ALL {
            assert_eq!(p.matches(&format!(". {}:", label.display_name())).count(), 1, "{label}");
        }
    }

    #[test]
    fn code_section_follows_flag() {
        let t = PromptTemplate::bundled();
        let mut r = record("1", "// TODO later", None);
        assert!(!build_prompt(&r, &t, false).contains(&t.code_heading));
        let with = build_prompt(&r, &t, true);
        assert!(with.contains(&format!("{}\nNA\n", t.code_heading)));
        r.code = CodeField::Segment("i++;".into());
        assert!(build_prompt(&r, &t, true).contains(&format!("{}\ni++;\n", t.code_heading)));
    }

    #[test]
    fn duplicate_category_is_rejected() {
        let mut t = PromptTemplate::bundled();
        t.categories[1].label = SmellLabel::Beautification;
        assert!(t.validate().is_err());
    }
}
