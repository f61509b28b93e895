use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::LlmParams;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<Usage>,
}

/// Something that answers one chat-completion prompt.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &LlmParams) -> Result<Completion>;
}

/// The JSON body sent for `prompt`: one user message plus the sampling parameters.
pub fn request_body(prompt: &str, params: &LlmParams) -> serde_json::Value {
    json!({
        "model": params.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "top_p": params.top_p,
    })
}

/// Extracts `choices[0].message.content` and `usage` from a response body.
pub fn parse_response(body: &str) -> Result<Completion> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::MalformedResponse(format!("not JSON: {e}")))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| Error::MalformedResponse("missing choices[0].message.content".into()))?;
    let usage = v
        .get("usage")
        .and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok());
    Ok(Completion {
        text: text.to_string(),
        usage,
    })
}

/// Chat-completion client over HTTP with bounded retries.
pub struct HttpBackend {
    agent: ureq::Agent,
    api_key: String,
}

impl HttpBackend {
    pub fn new(api_key: String, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { agent, api_key }
    }

    /// Reads the key from `OPENAI_API_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        match std::env::var(API_KEY_ENV) {
            Ok(k) if !k.trim().is_empty() => Ok(Self::new(k, timeout)),
            _ => Err(Error::Auth(format!("{API_KEY_ENV} is not set"))),
        }
    }

    fn attempt(&self, body: &str, params: &LlmParams) -> std::result::Result<Completion, Attempt> {
        let resp = self
            .agent
            .post(&params.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => parse_response(&text).map_err(Attempt::Fatal),
            401 | 403 => Err(Attempt::Fatal(Error::Auth(format!("HTTP {status}")))),
            408 | 409 | 429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(Error::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            })),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, prompt: &str, params: &LlmParams) -> Result<Completion> {
        let body = request_body(prompt, params).to_string();
        let policy = &params.retry;
        let mut last = String::new();
        for attempt in 0..policy.max_attempts {
            if attempt > 0 {
                let wait = policy.initial_backoff_ms.saturating_mul(1u64 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body, params) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Transport {
            attempts: policy.max_attempts,
            message: last,
        })
    }
}

/// Offline stand-in that labels comments with fixed keyword rules. It reads
/// only the comment section of the prompt.
#[derive(Debug, Clone, Default)]
pub struct KeywordMockBackend {
    pub comment_heading: String,
}

impl KeywordMockBackend {
    pub fn new(comment_heading: &str) -> Self {
        KeywordMockBackend {
            comment_heading: comment_heading.to_string(),
        }
    }

    pub fn classify(comment: &str) -> &'static str {
        let body = comment
            .trim()
            .trim_start_matches(['/', '#', '*'])
            .trim()
            .to_lowercase();
        let alnum = body.chars().filter(|c| c.is_alphanumeric()).count();
        if body.contains("todo") || body.contains("fixme") || body.contains("xxx") {
            "Task"
        } else if body.len() >= 3 && alnum * 4 < body.len() {
            "Beautification"
        } else if body.ends_with(';') || body.ends_with('{') || body.contains("();") || body.contains(" = ") {
            "Commented-out code"
        } else if body.split_whitespace().count() <= 2 {
            "Vague"
        } else if ["increment", "return the", "returns the", "set the", "get the", "create a"]
            .iter()
            .any(|k| body.contains(k))
        {
            "Obvious"
        } else {
            "Not a smell"
        }
    }

    fn comment_of<'a>(&self, prompt: &'a str) -> &'a str {
        let Some(at) = prompt.find(&self.comment_heading) else {
            return prompt;
        };
        let rest = &prompt[at + self.comment_heading.len()..];
        let end = rest.find("\n\n").unwrap_or(rest.len());
        &rest[..end]
    }
}

impl ChatBackend for KeywordMockBackend {
    fn complete(&self, prompt: &str, _params: &LlmParams) -> Result<Completion> {
        Ok(Completion {
            text: Self::classify(self.comment_of(prompt)).to_string(),
            usage: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_envelope() {
        let c = parse_response(
            r#"{"choices":[{"message":{"role":"assistant","content":"Obvious"}}],"usage":{"prompt_tokens":5,"completion_tokens":1,"total_tokens":6}}"#,
        )
        .unwrap();
        assert_eq!(c.text, "Obvious");
        assert_eq!(c.usage.unwrap().total_tokens, 6);
        assert!(matches!(parse_response("{}"), Err(Error::MalformedResponse(_))));
        assert!(matches!(parse_response("nope"), Err(Error::MalformedResponse(_))));
    }

    #[test]
    fn body_carries_sampling_parameters() {
        let b = request_body("hi", &LlmParams::default());
        assert_eq!(b["temperature"].as_f64(), Some(0.2));
        assert_eq!(b["top_p"].as_f64(), Some(0.1));
        assert_eq!(b["max_tokens"].as_u64(), Some(10));
        assert_eq!(b["messages"][0]["role"], "user");
    }

    #[test]
    fn keyword_rules() {
        assert_eq!(KeywordMockBackend::classify("// TODO: later"), "Task");
        assert_eq!(KeywordMockBackend::classify("// ---------------"), "Beautification");
        assert_eq!(KeywordMockBackend::classify("//foo.bar();"), "Commented-out code");
        assert_eq!(KeywordMockBackend::classify("# increment the counter"), "Obvious");
        assert_eq!(KeywordMockBackend::classify("# hmm"), "Vague");
    }
}
