//! Flat TOML config file and flag > file > default resolution.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use smellscope_core::models::ModelKind;

/// Every key the config file may set. All are optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threshold: Option<usize>,
    pub test_fraction: Option<f64>,
    pub k_folds: Option<usize>,
    pub models: Option<Vec<String>>,
    pub smote: Option<bool>,
    pub smote_k: Option<usize>,
    pub with_code: Option<bool>,
    pub keep_short_tokens: Option<bool>,
    pub llm_model: Option<String>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<u32>,
    pub endpoint: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
    pub concurrency: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Picks the flag, then the config value, then the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn parse_models(names: &[String]) -> Result<Vec<ModelKind>> {
    let mut out = Vec::new();
    for name in names {
        for part in name.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(ModelKind::ALL);
            } else {
                out.push(part.parse::<ModelKind>()?);
            }
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        bail!("no model kinds selected");
    }
    Ok(out)
}

/// Resolved settings of one invocation, stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub settings: serde_json::Value,
}

impl RunConfig {
    pub fn new(command: &str, settings: serde_json::Value) -> Self {
        RunConfig {
            command: command.to_string(),
            settings,
        }
    }

    pub fn hash(&self) -> String {
        use smellscope_core::corpus::sha256_hex;
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None::<u8>, None, 3), 3);
    }

    #[test]
    fn model_lists() {
        assert_eq!(parse_models(&["all".into()]).unwrap().len(), 7);
        assert_eq!(
            parse_models(&["rf,knn".into(), "random-forest".into()]).unwrap(),
            vec![ModelKind::RandomForest, ModelKind::Knn]
        );
        assert!(parse_models(&["perceptron".into()]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("sed = 1").is_err());
        let c: FileConfig = toml::from_str("seed = 4\nmodels = [\"knn\"]").unwrap();
        assert_eq!(c.seed, Some(4));
    }
}
