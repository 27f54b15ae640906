use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatRequest};
use crate::templates::Template;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub keywords: Vec<String>,
    pub question: String,
    pub evidence: String,
    /// True when the model answer was unusable and content words were used.
    pub fallback: bool,
}

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "been", "by", "can", "did",
    "do", "does", "each", "for", "from", "give", "had", "has", "have", "how", "i", "in", "is", "it",
    "its", "list", "many", "me", "much", "name", "of", "on", "or", "please", "refers", "show",
    "than", "that", "the", "their", "them", "there", "these", "they", "this", "those", "to", "was",
    "were", "what", "when", "where", "which", "who", "whom", "whose", "why", "with", "would",
];

/// Splits a model answer into keywords: JSON string arrays, or items
/// separated by commas, semicolons or newlines, with bullets and quotes
/// stripped.
pub fn parse_keywords(response: &str) -> Vec<String> {
    let raw: Vec<String> = match serde_json::from_str::<Vec<String>>(response.trim()) {
        Ok(v) => v,
        Err(_) => response
            .split([',', ';', '\n'])
            .map(|s| {
                s.trim()
                    .trim_start_matches(['-', '*', '•'])
                    .trim_start_matches(|c: char| c.is_ascii_digit())
                    .trim_start_matches(['.', ')'])
                    .trim()
                    .trim_matches(|c: char| c == '"' || c == '\'' || c == '`')
                    .trim()
                    .to_string()
            })
            .collect(),
    };
    dedup_ci(raw)
}

fn dedup_ci(items: Vec<String>) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for k in items.into_iter().map(|k| k.trim().to_string()).filter(|k| !k.is_empty()) {
        let low = k.to_lowercase();
        if !seen.contains(&low) {
            seen.push(low);
            out.push(k);
        }
    }
    out
}

/// Non-stopword words of the question and evidence, deduplicated.
pub fn content_words(question: &str, evidence: &str) -> Vec<String> {
    let text = format!("{question} {evidence}");
    dedup_ci(
        text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.to_lowercase().as_str()))
            .map(str::to_string)
            .collect(),
    )
}

/// Asks the schema model for keywords, falling back to content words when
/// the answer yields none.
pub fn extract_keywords(
    backend: &dyn ChatBackend,
    role: &str,
    temperature: f64,
    question: &str,
    evidence: &str,
) -> Result<KeywordSet> {
    let prompt = Template::builtin("keywords")
        .expect("builtin template")
        .render(&[("question", question), ("evidence", evidence)])?;
    let response = backend.chat(&ChatRequest::user(role, prompt, temperature))?;
    let mut keywords = parse_keywords(&response);
    let fallback = keywords.is_empty();
    if fallback {
        keywords = content_words(question, evidence);
    }
    Ok(KeywordSet {
        keywords,
        question: question.to_string(),
        evidence: evidence.to_string(),
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockChat;

    #[test]
    fn parses_comma_list() {
        let m = MockChat::sequence("schema", ["schools, Alameda, free rate"]);
        let k = extract_keywords(&m, "schema", 0.0, "Which schools in Alameda?", "").unwrap();
        assert_eq!(k.keywords, vec!["schools", "Alameda", "free rate"]);
        assert!(!k.fallback);
    }

    #[test]
    fn empty_answer_falls_back_to_content_words() {
        let m = MockChat::sequence("schema", [""]);
        let k = extract_keywords(&m, "schema", 0.0, "What is the tax rate?", "rate refers to pct").unwrap();
        assert!(k.fallback);
        assert_eq!(k.keywords, vec!["tax", "rate", "pct"]);
    }

    #[test]
    fn dedup_is_case_insensitive() {
        assert_eq!(parse_keywords("tax, Tax"), vec!["tax"]);
    }

    #[test]
    fn handles_bullets_and_json() {
        assert_eq!(parse_keywords("- city\n2. \"segment\"\n* `price`"), vec!["city", "segment", "price"]);
        assert_eq!(parse_keywords(r#"["a b", "A B", "c"]"#), vec!["a b", "c"]);
    }

    #[test]
    fn backend_errors_propagate() {
        let m = MockChat::sequence("schema", Vec::<String>::new());
        assert!(extract_keywords(&m, "schema", 0.0, "q", "").is_err());
    }
}
