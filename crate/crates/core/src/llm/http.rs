//! OpenAI-compatible `/chat/completions` transport.

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, Message, Transport, TransportError};

/// Endpoint settings. [`HttpConfig::from_env`] reads `WEBPLAN_API_BASE`
/// (default `https://api.openai.com/v1`), `WEBPLAN_API_KEY` (falling back to
/// `OPENAI_API_KEY`) and `WEBPLAN_PROVIDER_N` (`0` disables provider-side
/// sampling of several choices).
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub provider_n: bool,
}

impl HttpConfig {
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self {
            api_base: var("WEBPLAN_API_BASE").unwrap_or_else(|| "https://api.openai.com/v1".into()),
            api_key: var("WEBPLAN_API_KEY").or_else(|| var("OPENAI_API_KEY")),
            timeout: Duration::from_secs(120),
            provider_n: var("WEBPLAN_PROVIDER_N").as_deref() != Some("0"),
        }
    }
}

pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }
}

/// Image refs that are URLs become image parts; opaque refs are described in
/// text so the prompt still lists them in order.
fn message_json(m: &Message) -> Value {
    if m.image_refs.is_empty() {
        return json!({ "role": m.role.as_str(), "content": m.text });
    }
    let mut parts = vec![json!({ "type": "text", "text": m.text })];
    for r in &m.image_refs {
        if r.starts_with("http://") || r.starts_with("https://") || r.starts_with("data:") {
            parts.push(json!({ "type": "image_url", "image_url": { "url": r } }));
        } else {
            parts.push(json!({ "type": "text", "text": format!("[image: {r}]") }));
        }
    }
    json!({ "role": m.role.as_str(), "content": parts })
}

pub(crate) fn request_body(req: &CompletionRequest) -> Value {
    json!({
        "model": req.model_name,
        "messages": req.messages.iter().map(message_json).collect::<Vec<_>>(),
        "temperature": req.temperature,
        "n": req.n_samples,
        "max_tokens": req.max_tokens,
    })
}

pub(crate) fn parse_choices(body: &Value) -> Result<Vec<String>, TransportError> {
    let choices = body
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| TransportError::permanent("response has no choices array"))?;
    choices
        .iter()
        .map(|c| {
            c.pointer("/message/content")
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| TransportError::permanent("choice without message content"))
        })
        .collect()
}

impl Transport for HttpTransport {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, TransportError> {
        let mut call = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request_body(req)).map_err(|e| match e {
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                TransportError::transient(format!("http status {code}"))
            }
            ureq::Error::StatusCode(code) => TransportError::permanent(format!("http status {code}")),
            ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed => {
                TransportError::transient(e.to_string())
            }
            other => TransportError::permanent(other.to_string()),
        })?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::transient(format!("reading response: {e}")))?;
        parse_choices(&body)
    }

    fn supports_n(&self) -> bool {
        self.config.provider_n
    }
}
