use crate::sqltext::{is_keyword, lex, TokenKind};

/// Normalizes SQL text: comments removed, whitespace collapsed to single
/// spaces, keywords uppercased, literals and identifiers kept verbatim,
/// trailing semicolons dropped. Idempotent.
pub fn deformalize(sql: &str) -> String {
    let toks = lex(sql);
    let mut end = toks.len();
    // Trailing `;` (and the trivia around them) go.
    while let Some(i) = toks[..end].iter().rposition(|t| !t.is_trivia()) {
        if toks[i].kind == TokenKind::Symbol && toks[i].text == ";" {
            end = i;
        } else {
            break;
        }
    }
    let mut out = String::with_capacity(sql.len());
    let mut gap = false;
    for t in &toks[..end] {
        if t.is_trivia() {
            gap = true;
            continue;
        }
        if gap && !out.is_empty() {
            out.push(' ');
        }
        gap = false;
        if t.kind == TokenKind::Word && is_keyword(t.text) {
            out.push_str(&t.text.to_ascii_uppercase());
        } else {
            out.push_str(t.text);
        }
    }
    out
}

/// Length used for "shortest": characters of the deformalized text.
pub fn sql_length(deformalized: &str) -> usize {
    deformalized.chars().count()
}
