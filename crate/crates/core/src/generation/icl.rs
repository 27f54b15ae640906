use serde::{Deserialize, Serialize};

use crate::backend::{cosine, Embedder, EmbeddingVector};
use crate::filter::question_text;
use crate::Result;

/// A solved example shown to the in-context-learning generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    pub sql: String,
}

/// Demonstrations indexed by the embedding of their question and evidence.
pub struct DemoStore {
    demos: Vec<Demo>,
    vectors: Vec<EmbeddingVector>,
}

pub const DEFAULT_SHOTS: usize = 5;

impl DemoStore {
    pub fn new(demos: Vec<Demo>, embedder: &dyn Embedder) -> Result<Self> {
        let vectors = if demos.is_empty() {
            Vec::new()
        } else {
            let texts: Vec<String> = demos.iter().map(|d| key_text(&d.question, &d.evidence)).collect();
            embedder.embed(&texts.iter().map(String::as_str).collect::<Vec<_>>())?
        };
        Ok(Self { demos, vectors })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    /// The `k` demos closest to the question by cosine; ties keep insertion
    /// order. Demos whose question equals the query are skipped.
    pub fn nearest(&self, question: &str, evidence: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<&Demo>> {
        if self.demos.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = embedder.embed_one(&key_text(question, evidence))?;
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| self.demos[*i].question != question)
            .map(|(i, v)| (i, cosine(&q, v)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored.into_iter().take(k).map(|(i, _)| &self.demos[i]).collect())
    }
}

fn key_text(question: &str, evidence: &str) -> String {
    let t = question_text(question, evidence);
    if t.is_empty() {
        " ".into()
    } else {
        t
    }
}

/// Demos as prompt text.
pub fn format_demos(demos: &[&Demo]) -> String {
    demos
        .iter()
        .map(|d| {
            let mut s = format!("Question: {}\n", d.question);
            if !d.evidence.is_empty() {
                s.push_str(&format!("Evidence: {}\n", d.evidence));
            }
            s.push_str(&format!("SQL: {}", d.sql));
            s
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::HashedNgramEmbedder;

    fn demo(q: &str, sql: &str) -> Demo {
        Demo {
            question: q.into(),
            evidence: String::new(),
            sql: sql.into(),
        }
    }

    #[test]
    fn nearest_prefers_similar_questions() {
        let e = HashedNgramEmbedder::default();
        let store = DemoStore::new(
            vec![
                demo("How many orders were shipped in May?", "SELECT 1"),
                demo("List the names of customers in Oakland", "SELECT 2"),
                demo("What is the total price of all products?", "SELECT 3"),
            ],
            &e,
        )
        .unwrap();
        let got = store.nearest("Names of customers living in Fresno", "", 1, &e).unwrap();
        assert_eq!(got[0].sql, "SELECT 2");
        assert_eq!(store.nearest("x", "", 10, &e).unwrap().len(), 3);
    }

    #[test]
    fn identical_question_is_not_its_own_demo() {
        let e = HashedNgramEmbedder::default();
        let store = DemoStore::new(vec![demo("a b c", "SELECT 1"), demo("d e f", "SELECT 2")], &e).unwrap();
        let got = store.nearest("a b c", "", 5, &e).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].sql, "SELECT 2");
    }

    #[test]
    fn formats_with_optional_evidence() {
        let mut d = demo("q1", "SELECT 1");
        d.evidence = "e1".into();
        let s = format_demos(&[&d, &demo("q2", "SELECT 2")]);
        assert_eq!(s, "Question: q1\nEvidence: e1\nSQL: SELECT 1\n\nQuestion: q2\nSQL: SELECT 2");
    }
}
