use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest};
use crate::{Error, Result};

/// One scripted response. `match: null` entries answer in sequence; entries
/// with a substring answer the first request whose text contains it.
/// `repeat` entries are never consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(rename = "match")]
    pub matcher: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl MockEntry {
    pub fn any(response: impl Into<String>) -> Self {
        Self {
            matcher: None,
            response: response.into(),
            repeat: false,
        }
    }

    pub fn matching(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: Some(pattern.into()),
            response: response.into(),
            repeat: false,
        }
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug)]
struct ScriptState {
    entries: Vec<MockEntry>,
    consumed: Vec<bool>,
    /// Lowest index not yet consumed.
    cursor: usize,
}

/// Deterministic scripted chat backend.
///
/// Lookup order: the first unconsumed entry whose substring occurs in the
/// request, else the first unconsumed sequential (`match: null`) entry.
#[derive(Debug)]
pub struct MockChat {
    name: String,
    state: Mutex<ScriptState>,
    calls: AtomicUsize,
}

impl MockChat {
    pub fn new(name: impl Into<String>, entries: Vec<MockEntry>) -> Self {
        let n = entries.len();
        Self {
            name: name.into(),
            state: Mutex::new(ScriptState {
                entries,
                consumed: vec![false; n],
                cursor: 0,
            }),
            calls: AtomicUsize::new(0),
        }
    }

    /// Sequential responses, one per call.
    pub fn sequence<I, S>(name: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(name, responses.into_iter().map(MockEntry::any).collect())
    }

    /// Reads a line-delimited script of `{"match": .., "response": ..}` records.
    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_jsonl(name, &text)
    }

    pub fn parse_jsonl(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: MockEntry = serde_json::from_str(line)
                .map_err(|e| Error::ConfigInvalid(format!("mock script line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self::new(name, entries))
    }

    /// Number of `chat` calls served or refused so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        let st = self.state.lock().unwrap();
        st.consumed.iter().filter(|c| !**c).count()
    }
}

impl ChatBackend for MockChat {
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = request.full_text();
        let mut st = self.state.lock().unwrap();
        let open = |i: usize, st: &ScriptState| !st.consumed[i];
        let hit = (st.cursor..st.entries.len()).find(|&i| {
            open(i, &st)
                && st.entries[i]
                    .matcher
                    .as_deref()
                    .is_some_and(|m| text.contains(m))
        });
        let idx = hit.or_else(|| {
            (st.cursor..st.entries.len()).find(|&i| open(i, &st) && st.entries[i].matcher.is_none())
        });
        let Some(idx) = idx else {
            return Err(Error::MockExhausted(self.name.clone()));
        };
        let response = st.entries[idx].response.clone();
        if !st.entries[idx].repeat {
            st.consumed[idx] = true;
            while st.cursor < st.consumed.len() && st.consumed[st.cursor] {
                st.cursor += 1;
            }
        }
        Ok(response)
    }
}

/// Backend driven by a closure; handy for generated test traffic.
pub struct FnChat<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatBackend for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(m: &MockChat, text: &str) -> Result<String> {
        m.chat(&ChatRequest::user("r", text, 0.0))
    }

    #[test]
    fn substring_match_hits() {
        let m = MockChat::new("r", vec![MockEntry::matching("SELECT", "SELECT 1;")]);
        assert_eq!(ask(&m, "please write a SELECT").unwrap(), "SELECT 1;");
    }

    #[test]
    fn empty_script_is_exhausted() {
        let m = MockChat::new("r", vec![]);
        assert!(matches!(ask(&m, "x"), Err(Error::MockExhausted(_))));
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn sequential_entries_follow_script_order() {
        let m = MockChat::sequence("r", ["first", "second"]);
        assert_eq!(ask(&m, "same").unwrap(), "first");
        assert_eq!(ask(&m, "same").unwrap(), "second");
        assert!(ask(&m, "same").is_err());
    }

    #[test]
    fn matcher_preferred_over_sequence_and_skips_misses() {
        let m = MockChat::new(
            "r",
            vec![
                MockEntry::any("seq-1"),
                MockEntry::matching("refine", "fixed"),
                MockEntry::any("seq-2"),
            ],
        );
        assert_eq!(ask(&m, "generate").unwrap(), "seq-1");
        assert_eq!(ask(&m, "please refine").unwrap(), "fixed");
        assert_eq!(ask(&m, "please refine").unwrap(), "seq-2");
        assert_eq!(m.remaining(), 0);
    }

    #[test]
    fn repeat_entries_are_not_consumed() {
        let m = MockChat::new("r", vec![MockEntry::matching("q1", "A").repeating()]);
        for _ in 0..3 {
            assert_eq!(ask(&m, "about q1").unwrap(), "A");
        }
        assert!(ask(&m, "about q2").is_err());
    }

    #[test]
    fn parses_jsonl_scripts() {
        let text = r#"{"match": "SELECT", "response": "SELECT 1;"}

{"match": null, "response": "tail"}
"#;
        let m = MockChat::parse_jsonl("r", text).unwrap();
        assert_eq!(ask(&m, "nothing").unwrap(), "tail");
        assert_eq!(ask(&m, "SELECT").unwrap(), "SELECT 1;");
        assert!(MockChat::parse_jsonl("r", "{not json").is_err());
    }
}
