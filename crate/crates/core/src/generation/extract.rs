use crate::sqltext::{lex, TokenKind};

/// Pulls a SQL statement out of a model response.
///
/// Precedence: the last fenced code block, then the first statement that
/// starts with `SELECT` or `WITH`, then the whole response. Returns `None`
/// when the result is blank.
pub fn extract_sql(response: &str) -> Option<String> {
    let picked = last_fenced_block(response)
        .or_else(|| first_statement(response))
        .unwrap_or_else(|| response.to_string());
    let trimmed = picked.trim().trim_end_matches(';').trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

fn last_fenced_block(text: &str) -> Option<String> {
    let mut last = None;
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // Skip the info string (e.g. `sql`) up to the end of the line.
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                last = Some(body[..close].to_string());
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    last.filter(|b| !b.trim().is_empty())
}

fn first_statement(text: &str) -> Option<String> {
    let toks = lex(text);
    let start = toks.iter().position(|t| {
        t.kind == TokenKind::Word && (t.text.eq_ignore_ascii_case("select") || t.text.eq_ignore_ascii_case("with"))
    })?;
    let mut out = String::new();
    for t in &toks[start..] {
        if t.kind == TokenKind::Symbol && t.text == ";" {
            break;
        }
        // A blank line ends the statement when the model keeps talking.
        if t.kind == TokenKind::Whitespace && t.text.matches('\n').count() >= 2 {
            break;
        }
        out.push_str(t.text);
    }
    Some(out)
}
