//! Chat-completion gateway, prompt templates and the prompt builders for the
//! four planning stages.

mod gateway;
pub mod heuristic;
mod http;
pub mod prompts;
mod template;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gateway::{Gateway, GatewayConfig, GatewayMode, RetryPolicy, TranscriptRecord};
pub use heuristic::HeuristicModel;
pub use http::{HttpConfig, HttpTransport};
pub use prompts::LlmSettings;
pub use template::{render_template, PromptTemplate, TemplateError, TemplateName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_refs: Vec<String>,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            image_refs: Vec::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::new(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::new(Role::User, text)
    }

    pub fn with_images(mut self, refs: impl IntoIterator<Item = String>) -> Self {
        self.image_refs.extend(refs);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub n_samples: u32,
    pub max_tokens: u32,
    pub model_name: String,
}

impl CompletionRequest {
    /// SHA-256 over the request's canonical JSON form, hex encoded.
    pub fn cache_key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Text of the first message with `role`, if any.
    pub fn message_text(&self, role: Role) -> Option<&str> {
        self.messages.iter().find(|m| m.role == role).map(|m| m.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct TransportError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    pub transient: bool,
    pub message: String,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
        }
    }
}

/// Something that answers completion requests: an HTTP endpoint, the
/// offline heuristic model, or a test stub.
pub trait Transport: Send + Sync {
    /// Returns completions for `req`. Transports that report
    /// `supports_n() == false` are only ever called with `n_samples == 1`.
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, TransportError>;

    fn supports_n(&self) -> bool {
        true
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: TransportError,
    },
    #[error("no recorded completion for request {0}")]
    CacheMiss(String),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("expected {expected} completion(s), got {got}")]
    WrongSampleCount { expected: u32, got: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(t: f64) -> CompletionRequest {
        CompletionRequest {
            messages: vec![Message::system("s"), Message::user("u").with_images(["img://1".into()])],
            temperature: t,
            n_samples: 2,
            max_tokens: 64,
            model_name: "m".into(),
        }
    }

    #[test]
    fn cache_key_is_content_addressed() {
        assert_eq!(req(0.5).cache_key(), req(0.5).cache_key());
        assert_ne!(req(0.5).cache_key(), req(0.7).cache_key());
        let mut other = req(0.5);
        other.messages[1].image_refs.clear();
        assert_ne!(other.cache_key(), req(0.5).cache_key());
        assert_eq!(req(0.5).cache_key().len(), 64);
    }
}
