//! Optional language-model endpoint: a chat-completion client, and the
//! perceiver (text to triplets) and actor (triplets to text) built on it.
//!
//! Wire protocol: `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role", "content"}], "temperature"}`; the reply
//! text is read from `choices[0].message.content`.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionSpace, ActionTriplet, EmotionLabel, Predicate, MAX_TRIPLETS};
use crate::game::PlayerId;

pub const PERCEIVE_TEMPLATE: &str = include_str!("../../assets/prompts/perceive.txt");
pub const ACTOR_TEMPLATE: &str = include_str!("../../assets/prompts/actor.txt");
pub const REACT_TEMPLATE: &str = include_str!("../../assets/prompts/react.txt");

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl LlmEndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model: "default".into(), api_key_env: None, timeout_secs: 30, max_retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

/// Blocking HTTP client for a chat-completion endpoint.
pub struct HttpChatBackend {
    config: LlmEndpointConfig,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(config: LlmEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self { config, agent }
    }

    fn once(&self, messages: &[ChatMessage]) -> Result<String, String> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.config.model, "messages": messages, "temperature": 0.0 });
        let mut req = self.agent.post(&url);
        if let Some(key) = self.config.api_key_env.as_ref().and_then(|v| std::env::var(v).ok()) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| "reply has no choices[0].message.content".to_owned())
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let attempts = self.config.max_retries as usize + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.once(messages) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("llm endpoint attempt {attempt}/{attempts} failed: {e}");
                    last = e;
                }
            }
        }
        Err(LlmError::Transport { attempts, message: last })
    }
}

/// Test double: answers every request with a closure and counts calls.
pub struct MockBackend<F> {
    reply: F,
    calls: AtomicUsize,
}

impl<F: Fn(&[ChatMessage]) -> Result<String, LlmError> + Send + Sync> MockBackend<F> {
    pub fn new(reply: F) -> Self {
        Self { reply, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F: Fn(&[ChatMessage]) -> Result<String, LlmError> + Send + Sync> ChatBackend for MockBackend<F> {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.reply)(messages)
    }
}

/// Fills `{name}` placeholders.
pub fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_owned();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// The first `{...}` object in a reply, tolerating surrounding prose or
/// code fences.
pub fn extract_json(reply: &str) -> Result<serde_json::Value, LlmError> {
    let start = reply.find('{').ok_or_else(|| LlmError::Malformed("no JSON object".into()))?;
    let end = reply.rfind('}').ok_or_else(|| LlmError::Malformed("no JSON object".into()))?;
    if end < start {
        return Err(LlmError::Malformed("no JSON object".into()));
    }
    serde_json::from_str(&reply[start..=end]).map_err(|e| LlmError::Malformed(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub triplets: Vec<ActionTriplet>,
    pub confidence: f64,
    /// True when the endpoint failed and the grammar parser was used.
    pub degraded: bool,
}

/// Extracts triplets from free text with the endpoint, dropping invalid
/// items. Falls back to the grammar parser when the endpoint errors or the
/// reply carries no readable item list.
pub fn llm_perceive(text: &str, speaker: PlayerId, num_players: usize, backend: &dyn ChatBackend) -> Perception {
    let space = ActionSpace::new(num_players);
    let prompt = fill(
        PERCEIVE_TEMPLATE,
        &[("max_player", (num_players - 1).to_string()), ("speaker", speaker.index().to_string()), ("text", text.to_owned())],
    );
    let parsed = backend.chat(&[ChatMessage::user(prompt)]).and_then(|reply| {
        let v = extract_json(&reply)?;
        let items = v["items"].as_array().ok_or_else(|| LlmError::Malformed("missing items".into()))?.clone();
        Ok((items, v["confidence"].as_f64().unwrap_or(1.0)))
    });
    match parsed {
        Ok((items, confidence)) => {
            let triplets = items
                .iter()
                .filter_map(|item| {
                    let predicate = Predicate::from_str(item["predicate"].as_str()?).ok()?;
                    let object = item["object"].as_u64()? as usize;
                    (object < num_players).then(|| ActionTriplet::new(speaker, predicate, PlayerId(object)))
                })
                .take(MAX_TRIPLETS)
                .collect();
            Perception { triplets, confidence: confidence.clamp(0.0, 1.0), degraded: false }
        }
        Err(e) => {
            log::warn!("perceiver degraded to grammar parser: {e}");
            Perception { triplets: space.parse(text, speaker), confidence: 1.0, degraded: true }
        }
    }
}

/// Turns planned triplets into a statement with the endpoint; falls back to
/// the template renderer on any failure. Returns the text and whether the
/// fallback was used.
pub fn llm_act(
    triplets: &[ActionTriplet],
    speaker: PlayerId,
    face: EmotionLabel,
    tone: EmotionLabel,
    num_players: usize,
    backend: &dyn ChatBackend,
) -> (String, bool) {
    let space = ActionSpace::new(num_players);
    let rendered = space.render(triplets).unwrap_or_else(|_| crate::action::EMPTY_STATEMENT.to_owned());
    if triplets.is_empty() {
        return (rendered, false);
    }
    let intentions = triplets.iter().map(|t| format!("- {t}")).collect::<Vec<_>>().join("\n");
    let prompt = fill(
        ACTOR_TEMPLATE,
        &[
            ("speaker", speaker.index().to_string()),
            ("intentions", intentions),
            ("face", face.to_string()),
            ("tone", tone.to_string()),
        ],
    );
    match backend.chat(&[ChatMessage::user(prompt)]) {
        Ok(text) if !text.trim().is_empty() => (text.trim().to_owned(), false),
        Ok(_) => {
            log::warn!("actor returned empty text; using template rendering");
            (rendered, true)
        }
        Err(e) => {
            log::warn!("actor failed ({e}); using template rendering");
            (rendered, true)
        }
    }
}
