//! Chat-completion and embedding backends.
//!
//! Every model role in the pipeline (keyword extraction and column selection,
//! each SQL generator, the selector) talks to a [`ChatBackend`]. Live
//! providers speak an OpenAI-compatible HTTP API; [`MockChat`] replays a
//! script so whole pipeline runs are reproducible offline.

mod embed;
mod http;
mod mock;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embed::{cosine, CachedEmbedder, Embedder, EmbeddingVector, HashedNgramEmbedder, MOCK_EMBEDDING_DIM};
pub use http::{HttpChat, HttpEmbedder, HttpSettings};
pub use mock::{FnChat, MockChat, MockEntry};

use crate::{Error, Result};

/// Role id for keyword extraction and column selection.
pub const SCHEMA_ROLE: &str = "schema";
/// Role id for the candidate selector.
pub const SELECTOR_ROLE: &str = "selector";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(role_id: impl Into<String>, messages: Vec<Message>, temperature: f64, max_tokens: u32) -> Result<Self> {
        let req = Self {
            role_id: role_id.into(),
            messages,
            temperature,
            max_tokens,
        };
        req.validate()?;
        Ok(req)
    }

    /// Single user message.
    pub fn user(role_id: impl Into<String>, text: impl Into<String>, temperature: f64) -> Self {
        Self {
            role_id: role_id.into(),
            messages: vec![Message {
                speaker: Speaker::User,
                text: text.into(),
            }],
            temperature,
            max_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.messages.first() {
            None => return Err(Error::InvalidRequest("no messages".into())),
            Some(m) if m.speaker == Speaker::Assistant => {
                return Err(Error::InvalidRequest("first message must be system or user".into()))
            }
            _ => {}
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message texts joined by newlines; what mock matchers search.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        (**self).chat(request)
    }
}

/// Named chat backends, one per role.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    roles: BTreeMap<String, Arc<dyn ChatBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, role: impl Into<String>, backend: Arc<dyn ChatBackend>) -> &mut Self {
        self.roles.insert(role.into(), backend);
        self
    }

    pub fn get(&self, role: &str) -> Result<Arc<dyn ChatBackend>> {
        self.roles
            .get(role)
            .cloned()
            .ok_or_else(|| Error::UnboundRole(role.to_string()))
    }

    /// Dispatches on `request.role_id`.
    pub fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        self.get(&request.role_id)?.chat(request)
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.roles.keys().map(String::as_str)
    }
}
