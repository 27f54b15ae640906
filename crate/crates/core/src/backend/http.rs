use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::embed::check_inputs;
use super::{ChatBackend, ChatRequest, Embedder, EmbeddingVector, Speaker};
use crate::{Error, Result};

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSettings {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}

enum Failure {
    Transient(String),
    Fatal(String),
}

struct Client {
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl Client {
    fn new(settings: HttpSettings) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build();
        Self { settings, agent }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.settings.endpoint.trim_end_matches('/'), path);
        let token = match &self.settings.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::ConfigInvalid(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let attempts = self.settings.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.settings.backoff_ms << (attempt - 1)));
            }
            let mut req = self.agent.post(&url).set("Content-Type", "application/json");
            if let Some(t) = &token {
                req = req.set("Authorization", &format!("Bearer {t}"));
            }
            let outcome = match req.send_json(body.clone()) {
                Ok(resp) => resp.into_json::<Value>().map_err(|e| Failure::Transient(e.to_string())),
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    let msg = format!("HTTP {code}: {text}");
                    if code == 429 || code >= 500 {
                        Err(Failure::Transient(msg))
                    } else {
                        Err(Failure::Fatal(msg))
                    }
                }
                Err(e) => Err(Failure::Transient(e.to_string())),
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(msg)) => return Err(Error::BackendFailure(msg)),
                Err(Failure::Transient(msg)) => {
                    log::warn!("{url}: attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::ProviderExhausted { attempts, reason: last })
    }
}

/// Chat backend for `POST {endpoint}/chat/completions`.
pub struct HttpChat {
    client: Client,
}

impl HttpChat {
    pub fn new(settings: HttpSettings) -> Self {
        Self {
            client: Client::new(settings),
        }
    }
}

impl ChatBackend for HttpChat {
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.speaker {
                    Speaker::System => "system",
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                };
                json!({ "role": role, "content": m.text })
            })
            .collect();
        let body = json!({
            "model": self.client.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let v = self.client.post("chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::BackendFailure(format!("unexpected chat response: {v}")))
    }
}

/// Embedding backend for `POST {endpoint}/embeddings`.
pub struct HttpEmbedder {
    client: Client,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dim: usize) -> Self {
        Self {
            client: Client::new(settings),
            dim,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        check_inputs(texts)?;
        let body = json!({ "model": self.client.settings.model, "input": texts });
        let v = self.client.post("embeddings", &body)?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BackendFailure(format!("unexpected embedding response: {v}")))?;
        if data.len() != texts.len() {
            return Err(Error::BackendFailure(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|d| {
                let vals: Vec<f64> = d
                    .get("embedding")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_f64).collect())
                    .unwrap_or_default();
                if vals.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: vals.len(),
                    });
                }
                EmbeddingVector::new(vals)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the given (status, body) replies in order, one per connection,
    /// and returns the request bodies it saw.
    fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(String::from_utf8(buf).unwrap());
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            seen
        });
        (addr, handle)
    }

    fn settings(endpoint: String) -> HttpSettings {
        HttpSettings {
            endpoint,
            model: "test-model".into(),
            api_key_env: None,
            timeout_ms: 5_000,
            retries: 2,
            backoff_ms: 1,
        }
    }

    #[test]
    fn chat_round_trip_with_one_transient_failure() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"SELECT 1"}}]}"#;
        let (addr, h) = serve(vec![(503, "{}".into()), (200, ok.into())]);
        let chat = HttpChat::new(settings(addr));
        let out = chat.chat(&ChatRequest::user("g1", "write sql", 0.1)).unwrap();
        assert_eq!(out, "SELECT 1");
        let seen = h.join().unwrap();
        assert_eq!(seen.len(), 2);
        let body: Value = serde_json::from_str(&seen[1]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "write sql");
    }

    #[test]
    fn retries_are_bounded() {
        let (addr, h) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let chat = HttpChat::new(settings(addr));
        let err = chat.chat(&ChatRequest::user("g1", "x", 0.0)).unwrap_err();
        assert!(matches!(err, Error::ProviderExhausted { attempts: 3, .. }));
        assert_eq!(h.join().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (addr, h) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let chat = HttpChat::new(settings(addr));
        assert!(matches!(
            chat.chat(&ChatRequest::user("g1", "x", 0.0)),
            Err(Error::BackendFailure(_))
        ));
        assert_eq!(h.join().unwrap().len(), 1);
    }

    #[test]
    fn embedding_dimension_is_checked() {
        let body = r#"{"data":[{"embedding":[0.1,0.2,0.3]}]}"#;
        let (addr, h) = serve(vec![(200, body.into()), (200, body.into())]);
        let good = HttpEmbedder::new(settings(addr.clone()), 3);
        assert_eq!(good.embed(&["a"]).unwrap()[0].len(), 3);
        let bad = HttpEmbedder::new(settings(addr), 4);
        assert!(matches!(
            bad.embed(&["a"]),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
        h.join().unwrap();
    }
}
