//! Text summarization endpoints used to describe rankings and clusters.
//!
//! Requests are OpenAI-style chat-completion JSON bodies built here and sent
//! verbatim; the raw response body is kept alongside the extracted text so
//! every summary can be audited or replayed byte for byte.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::http::JsonEndpoint;

pub const LLM_ENDPOINT_ENV: &str = "SCALEX_LLM_ENDPOINT";
pub const LLM_MODEL_ENV: &str = "SCALEX_LLM_MODEL";

const SYSTEM_PROMPT: &str = "You describe patterns in lists of image captions. Answer concisely in plain prose.";

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

/// Serializes the chat request for `user_prompt`. Deterministic.
pub fn build_payload(model: &str, user_prompt: &str) -> String {
    let req = ChatRequest {
        model,
        messages: [
            ChatMessage {
                role: "system",
                content: SYSTEM_PROMPT,
            },
            ChatMessage {
                role: "user",
                content: user_prompt,
            },
        ],
        temperature: 0.0,
    };
    serde_json::to_string(&req).expect("chat request serializes")
}

/// Pulls the completion text out of a raw response body.
pub fn response_text(raw: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| Error::BadResponse(format!("summarizer response: {e}")))?;
    v.pointer("/choices/0/message/content")
        .or_else(|| v.get("text"))
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::BadResponse("summarizer response has no text".into()))
}

/// One request/response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: String,
    pub response: String,
    pub text: String,
}

pub trait SummarizerClient: Send + Sync {
    fn model(&self) -> &str;

    /// Sends `payload` unchanged and returns the raw response body.
    fn send(&self, payload: &str) -> Result<String>;

    /// Longest user prompt, in characters, a single request may carry.
    fn max_prompt_chars(&self) -> usize {
        12_000
    }

    fn summarize(&self, user_prompt: &str) -> Result<Exchange> {
        let request = build_payload(self.model(), user_prompt);
        let response = self.send(&request)?;
        let text = response_text(&response)?;
        Ok(Exchange {
            request,
            response,
            text,
        })
    }
}

impl<C: SummarizerClient + ?Sized> SummarizerClient for Box<C> {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn send(&self, payload: &str) -> Result<String> {
        (**self).send(payload)
    }

    fn max_prompt_chars(&self) -> usize {
        (**self).max_prompt_chars()
    }
}

pub struct HttpSummarizer {
    endpoint: JsonEndpoint,
    model: String,
}

impl HttpSummarizer {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: JsonEndpoint::new(url, timeout),
            model: model.into(),
        }
    }

    /// Configured from `SCALEX_LLM_ENDPOINT` (and optionally `SCALEX_LLM_MODEL`).
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(LLM_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::EndpointUnavailable(format!("{LLM_ENDPOINT_ENV} is not set")))?;
        let model = std::env::var(LLM_MODEL_ENV).unwrap_or_else(|_| "gpt-4o".into());
        Ok(Self::new(url, model, Duration::from_secs(120)))
    }
}

impl SummarizerClient for HttpSummarizer {
    fn model(&self) -> &str {
        &self.model
    }

    fn send(&self, payload: &str) -> Result<String> {
        self.endpoint.post(payload)
    }
}

/// Answers with the user prompt it was sent.
#[derive(Debug, Default)]
pub struct EchoSummarizer;

impl SummarizerClient for EchoSummarizer {
    fn model(&self) -> &str {
        "echo"
    }

    fn send(&self, payload: &str) -> Result<String> {
        let v: serde_json::Value = serde_json::from_str(payload)?;
        let content = v
            .pointer("/messages/1/content")
            .and_then(|c| c.as_str())
            .unwrap_or_default();
        Ok(serde_json::json!({ "text": content }).to_string())
    }
}

fn payload_key(payload: &str) -> String {
    hex::encode(Sha256::digest(payload.as_bytes()))
}

/// Serves recorded responses keyed by the SHA-256 of the request payload.
#[derive(Debug, Default)]
pub struct ReplaySummarizer {
    model: String,
    responses: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Recording {
    model: String,
    responses: BTreeMap<String, String>,
}

impl ReplaySummarizer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: Recording = serde_json::from_str(&text)?;
        Ok(Self {
            model: rec.model,
            responses: rec.responses,
        })
    }
}

impl SummarizerClient for ReplaySummarizer {
    fn model(&self) -> &str {
        &self.model
    }

    fn send(&self, payload: &str) -> Result<String> {
        self.responses
            .get(&payload_key(payload))
            .cloned()
            .ok_or_else(|| Error::EndpointUnavailable("no recorded response for request".into()))
    }
}

/// Forwards to another client and keeps every exchange for later replay.
pub struct RecordingSummarizer<C> {
    inner: C,
    log: Mutex<BTreeMap<String, String>>,
}

impl<C: SummarizerClient> RecordingSummarizer<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rec = Recording {
            model: self.inner.model().to_string(),
            responses: self.log.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        };
        let text = serde_json::to_string_pretty(&rec)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl<C: SummarizerClient> SummarizerClient for RecordingSummarizer<C> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn send(&self, payload: &str) -> Result<String> {
        let resp = self.inner.send(payload)?;
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(payload_key(payload), resp.clone());
        Ok(resp)
    }

    fn max_prompt_chars(&self) -> usize {
        self.inner.max_prompt_chars()
    }
}
