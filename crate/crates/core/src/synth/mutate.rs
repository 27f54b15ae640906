use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::has_multiple_statements;
use crate::schema::SchemaDoc;
use crate::sqltext::{is_keyword, lex, Token, TokenKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    SwapColumn,
    DropJoinPredicate,
    SwapAggregate,
    PerturbLiteral,
    RemoveDistinct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub sql: String,
    pub kind: MutationKind,
}

const AGGREGATES: &[&str] = &["COUNT", "SUM", "AVG", "MIN", "MAX"];

/// Words that end an `ON` predicate.
const CLAUSE_WORDS: &[&str] = &[
    "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "WHERE", "GROUP", "ORDER", "LIMIT", "HAVING",
    "UNION", "INTERSECT", "EXCEPT", "WINDOW",
];

enum Edit {
    Replace(usize, String),
    /// Remove tokens in `[from, to)`.
    Remove(usize, usize),
}

/// Applies one seeded mutation to `gold`. The same `(gold, seed, doc)` always
/// gives the same result. Column swaps need `doc`; without it they are
/// never chosen. Queries without a `FROM` clause are not mutated.
pub fn mutate_sql(gold: &str, seed: u64, doc: Option<&SchemaDoc>) -> Result<Mutation> {
    if has_multiple_statements(gold) {
        return Err(Error::InvalidRequest("mutation needs a single statement".into()));
    }
    let toks = lex(gold);
    let sig: Vec<usize> = (0..toks.len()).filter(|&i| !toks[i].is_trivia()).collect();
    if !sig.iter().any(|&i| toks[i].is_word("FROM")) {
        return Err(Error::NoApplicableMutation(gold.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites: Vec<(MutationKind, Edit)> = Vec::new();

    for (p, &i) in sig.iter().enumerate() {
        let t = &toks[i];
        let next = sig.get(p + 1).map(|&j| &toks[j]);
        let after = sig.get(p + 2).map(|&j| &toks[j]);
        if t.kind == TokenKind::Word {
            let upper = t.text.to_ascii_uppercase();
            if AGGREGATES.contains(&upper.as_str())
                && next.is_some_and(|n| n.text == "(")
                && after.is_some_and(|a| a.text != "*")
            {
                let others: Vec<&str> = AGGREGATES.iter().copied().filter(|a| *a != upper).collect();
                let pick = others.choose(&mut rng).unwrap();
                sites.push((MutationKind::SwapAggregate, Edit::Replace(i, pick.to_string())));
            }
            if upper == "DISTINCT" {
                let end = sig.get(p + 1).copied().unwrap_or(toks.len());
                sites.push((MutationKind::RemoveDistinct, Edit::Remove(i, end)));
            }
            if upper == "ON" {
                if let Some(end) = predicate_end(&toks, &sig, p) {
                    // Drop the whitespace before ON as well.
                    let start = if i > 0 && toks[i - 1].is_trivia() { i - 1 } else { i };
                    sites.push((MutationKind::DropJoinPredicate, Edit::Remove(start, end)));
                }
            }
        }
        if t.kind == TokenKind::Number {
            if let Some(v) = perturb_number(t.text, &mut rng) {
                sites.push((MutationKind::PerturbLiteral, Edit::Replace(i, v)));
            }
        }
    }
    if let Some(doc) = doc {
        column_swaps(&toks, &sig, doc, &mut rng, &mut sites);
    }
    if sites.is_empty() {
        return Err(Error::NoApplicableMutation(gold.to_string()));
    }
    let (kind, edit) = sites.swap_remove(rand::Rng::gen_range(&mut rng, 0..sites.len()));
    let sql = apply(&toks, edit);
    Ok(Mutation { sql, kind })
}

fn apply(toks: &[Token<'_>], edit: Edit) -> String {
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        match &edit {
            Edit::Replace(at, text) if *at == i => out.push_str(text),
            Edit::Remove(from, to) if (*from..*to).contains(&i) => {}
            _ => out.push_str(t.text),
        }
    }
    out
}

/// Token index just past the predicate that follows the `ON` at `sig[p]`.
fn predicate_end(toks: &[Token<'_>], sig: &[usize], p: usize) -> Option<usize> {
    let mut depth = 0i32;
    let mut q = p + 1;
    let mut end = None;
    while let Some(&j) = sig.get(q) {
        let t = &toks[j];
        if t.text == "(" {
            depth += 1;
        } else if t.text == ")" {
            if depth == 0 {
                break;
            }
            depth -= 1;
        } else if depth == 0 && (t.text == ";" || (t.kind == TokenKind::Word && CLAUSE_WORDS.iter().any(|w| t.is_word(w)))) {
            break;
        }
        end = Some(j + 1);
        q += 1;
    }
    end
}

fn perturb_number(text: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let delta: i64 = if rand::Rng::gen_bool(rng, 0.5) { 1 } else { -1 };
    if let Ok(v) = text.parse::<i64>() {
        return Some((v + delta).to_string());
    }
    let v: f64 = text.parse().ok()?;
    let out = v + delta as f64;
    // Keep it a real literal so the type does not change.
    Some(if out.fract() == 0.0 { format!("{out:.1}") } else { out.to_string() })
}

/// Identifier tokens naming a column of a table in the query, each swappable
/// with another column of the same table.
fn column_swaps(
    toks: &[Token<'_>],
    sig: &[usize],
    doc: &SchemaDoc,
    rng: &mut ChaCha8Rng,
    sites: &mut Vec<(MutationKind, Edit)>,
) {
    let idents: Vec<Option<String>> = sig.iter().map(|&i| toks[i].ident()).collect();
    let tables: Vec<&crate::schema::TableMeta> = doc
        .tables
        .iter()
        .filter(|t| idents.iter().flatten().any(|n| n.eq_ignore_ascii_case(&t.name)))
        .collect();
    for (p, &i) in sig.iter().enumerate() {
        let Some(name) = &idents[p] else { continue };
        let t = &toks[i];
        if t.kind == TokenKind::Word && is_keyword(t.text) {
            continue;
        }
        if sig.get(p + 1).is_some_and(|&j| toks[j].text == "(") {
            continue;
        }
        let prev = p.checked_sub(1).map(|q| &toks[sig[q]]);
        if prev.is_some_and(|t| t.is_word("FROM") || t.is_word("JOIN") || t.is_word("AS")) {
            continue;
        }
        // Skip the qualifier in `alias.column`.
        if sig.get(p + 1).is_some_and(|&j| toks[j].text == ".") {
            continue;
        }
        let owners: Vec<_> = tables
            .iter()
            .filter(|tb| tb.columns.iter().any(|c| c.col.column.eq_ignore_ascii_case(name)))
            .collect();
        let Some(table) = owners.first() else { continue };
        let siblings: Vec<&str> = table
            .columns
            .iter()
            .map(|c| c.col.column.as_str())
            .filter(|c| !c.eq_ignore_ascii_case(name))
            .collect();
        if let Some(s) = siblings.choose(rng) {
            let text = if t.kind == TokenKind::QuotedIdent || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            };
            sites.push((MutationKind::SwapColumn, Edit::Replace(i, text)));
        }
    }
}
