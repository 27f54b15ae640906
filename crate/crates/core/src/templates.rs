//! Prompt templates with `{name}` placeholders.
//!
//! Built-in templates ship as text assets; callers may load their own from
//! disk. Substitution is single-pass, so values containing `{...}` are never
//! re-expanded.

use std::collections::BTreeSet;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub text: String,
}

const BUILTIN: &[(&str, &str)] = &[
    ("keywords", include_str!("../assets/templates/keywords.txt")),
    ("column_select", include_str!("../assets/templates/column_select.txt")),
    ("gen_multitask", include_str!("../assets/templates/gen_multitask.txt")),
    ("gen_complex", include_str!("../assets/templates/gen_complex.txt")),
    ("gen_standard", include_str!("../assets/templates/gen_standard.txt")),
    ("gen_mixed", include_str!("../assets/templates/gen_mixed.txt")),
    ("gen_icl", include_str!("../assets/templates/gen_icl.txt")),
    ("refine", include_str!("../assets/templates/refine.txt")),
    ("select", include_str!("../assets/templates/select.txt")),
    ("task_question", include_str!("../assets/templates/task_question.txt")),
    ("task_evidence", include_str!("../assets/templates/task_evidence.txt")),
    ("reformat_complex", include_str!("../assets/templates/reformat_complex.txt")),
    ("reformat_standard", include_str!("../assets/templates/reformat_standard.txt")),
];

impl Template {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    pub fn builtin(id: &str) -> Option<Self> {
        BUILTIN
            .iter()
            .find(|(name, _)| *name == id)
            .map(|(name, text)| Self::new(*name, *text))
    }

    pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("template {}: {e}", path.display())))?;
        Ok(Self::new(id, text))
    }

    /// Placeholder names that appear in the text.
    pub fn placeholders(&self) -> BTreeSet<String> {
        scan(&self.text)
            .into_iter()
            .filter_map(|piece| match piece {
                Piece::Slot(name) => Some(name.to_string()),
                Piece::Lit(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder; a placeholder without a value is an error.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.text.len());
        for piece in scan(&self.text) {
            match piece {
                Piece::Lit(s) => out.push_str(s),
                Piece::Slot(name) => match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        return Err(Error::ConfigInvalid(format!(
                            "template `{}` needs a value for {{{name}}}",
                            self.id
                        )))
                    }
                },
            }
        }
        Ok(out)
    }
}

enum Piece<'a> {
    Lit(&'a str),
    Slot(&'a str),
}

fn scan(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                out.push(Piece::Lit(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Lit(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    out.push(Piece::Lit(rest));
    out
}
