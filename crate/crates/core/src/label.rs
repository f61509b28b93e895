//! Closed vocabulary of comment-smell categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// One of the ten comment categories. Variant order is the canonical
/// (lexicographic) order of the hyphenated names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SmellLabel {
    Beautification,
    CommentedOutCode,
    Irrelevant,
    Misleading,
    NonLocalInfo,
    NotASmell,
    Obvious,
    Task,
    TooMuchInfo,
    Vague,
}

impl SmellLabel {
    pub const ALL: [SmellLabel; 10] = [
        SmellLabel::Beautification,
        SmellLabel::CommentedOutCode,
        SmellLabel::Irrelevant,
        SmellLabel::Misleading,
        SmellLabel::NonLocalInfo,
        SmellLabel::NotASmell,
        SmellLabel::Obvious,
        SmellLabel::Task,
        SmellLabel::TooMuchInfo,
        SmellLabel::Vague,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SmellLabel::Beautification => "beautification",
            SmellLabel::CommentedOutCode => "commented-out-code",
            SmellLabel::Irrelevant => "irrelevant",
            SmellLabel::Misleading => "misleading",
            SmellLabel::NonLocalInfo => "non-local-info",
            SmellLabel::NotASmell => "not-a-smell",
            SmellLabel::Obvious => "obvious",
            SmellLabel::Task => "task",
            SmellLabel::TooMuchInfo => "too-much-info",
            SmellLabel::Vague => "vague",
        }
    }

    /// Human-facing spelling used in tables and prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            SmellLabel::Beautification => "Beautification",
            SmellLabel::CommentedOutCode => "Commented-out code",
            SmellLabel::Irrelevant => "Irrelevant",
            SmellLabel::Misleading => "Misleading",
            SmellLabel::NonLocalInfo => "Non-local info",
            SmellLabel::NotASmell => "Not a smell",
            SmellLabel::Obvious => "Obvious",
            SmellLabel::Task => "Task",
            SmellLabel::TooMuchInfo => "Too much info",
            SmellLabel::Vague => "Vague",
        }
    }

    /// Categories whose code context is irrelevant; their code field is `NA`.
    pub fn is_na_category(self) -> bool {
        matches!(
            self,
            SmellLabel::Beautification | SmellLabel::CommentedOutCode | SmellLabel::Task
        )
    }

    /// Looks up an alias after normalization. Accepts canonical names,
    /// display names and their space/underscore/hyphen variants.
    pub fn from_alias(raw: &str) -> Option<SmellLabel> {
        let key = alias_key(raw);
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map(|&(_, label)| label)
    }
}

/// Lowercases, trims and collapses runs of whitespace, `_` and `-` into a single `-`.
pub(crate) fn alias_key(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '_' || ch == '-' {
            pending_sep = !out.is_empty();
            continue;
        }
        if pending_sep {
            out.push('-');
            pending_sep = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

const ALIASES: &[(&str, SmellLabel)] = &[
    ("beautification", SmellLabel::Beautification),
    ("commented-out-code", SmellLabel::CommentedOutCode),
    ("commentedout-code", SmellLabel::CommentedOutCode),
    ("irrelevant", SmellLabel::Irrelevant),
    ("misleading", SmellLabel::Misleading),
    ("non-local-info", SmellLabel::NonLocalInfo),
    ("non-local-information", SmellLabel::NonLocalInfo),
    ("nonlocal-info", SmellLabel::NonLocalInfo),
    ("nonlocal-information", SmellLabel::NonLocalInfo),
    ("not-a-smell", SmellLabel::NotASmell),
    ("obvious", SmellLabel::Obvious),
    ("task", SmellLabel::Task),
    ("too-much-info", SmellLabel::TooMuchInfo),
    ("too-much-information", SmellLabel::TooMuchInfo),
    ("vague", SmellLabel::Vague),
];

impl fmt::Display for SmellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SmellLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SmellLabel::from_alias(s).ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl Serialize for SmellLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SmellLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_lexicographic() {
        let mut names: Vec<_> = SmellLabel::ALL.iter().map(|l| l.as_str()).collect();
        let sorted = {
            let mut s = names.clone();
            s.sort();
            s
        };
        assert_eq!(names, sorted);
        names.dedup();
        assert_eq!(names.len(), 10);
    }

    #[test]
    fn display_aliases_round_trip() {
        for label in SmellLabel::ALL {
            assert_eq!(SmellLabel::from_alias(label.as_str()), Some(label));
            assert_eq!(SmellLabel::from_alias(label.display_name()), Some(label));
        }
        assert_eq!(
            "Commented-out code".parse::<SmellLabel>().unwrap(),
            SmellLabel::CommentedOutCode
        );
        assert_eq!(
            "Non-local info".parse::<SmellLabel>().unwrap(),
            SmellLabel::NonLocalInfo
        );
        assert_eq!(
            SmellLabel::from_alias("too_much  info"),
            Some(SmellLabel::TooMuchInfo)
        );
    }

    #[test]
    fn unknown_alias_fails() {
        assert!("bogus".parse::<SmellLabel>().is_err());
        assert!("".parse::<SmellLabel>().is_err());
        assert!("attribution".parse::<SmellLabel>().is_err());
    }
}
