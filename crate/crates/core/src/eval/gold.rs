use std::collections::{BTreeMap, BTreeSet};

use crate::schema::{ColumnRef, SchemaDoc};
use crate::sqltext::{is_keyword, lex, significant, Token, TokenKind};

/// Comparison operators whose right-hand string literal counts as a gold value.
const VALUE_OPS: &[&str] = &["=", "==", "!=", "<>", "LIKE", "GLOB", "IN"];

struct Scan<'a> {
    toks: Vec<Token<'a>>,
    /// Lowercased table name or alias -> table name in the document.
    names: BTreeMap<String, String>,
    /// Tables referenced by the query, in order of appearance.
    tables: Vec<String>,
    /// Token positions that name a table or alias.
    skip: BTreeSet<usize>,
}

fn scan<'a>(sql: &'a str, doc: &SchemaDoc) -> Scan<'a> {
    let toks = significant(&lex(sql));
    let mut names = BTreeMap::new();
    let mut tables = Vec::new();
    let mut skip = BTreeSet::new();
    let mut i = 0;
    while i < toks.len() {
        let opens_list = toks[i].is_word("FROM") || toks[i].is_word("JOIN");
        i += 1;
        if !opens_list {
            continue;
        }
        // FROM a [AS] x, b [AS] y JOIN ...
        while let Some(name) = toks.get(i).and_then(Token::ident) {
            let Some(table) = doc.table(&name).or_else(|| doc.tables.iter().find(|t| t.name.eq_ignore_ascii_case(&name))) else {
                break;
            };
            skip.insert(i);
            names.insert(table.name.to_lowercase(), table.name.clone());
            if !tables.contains(&table.name) {
                tables.push(table.name.clone());
            }
            i += 1;
            if toks.get(i).is_some_and(|t| t.is_word("AS")) {
                i += 1;
            }
            if let Some(alias) = toks.get(i).filter(|t| alias_like(t)).and_then(Token::ident) {
                skip.insert(i);
                names.insert(alias.to_lowercase(), table.name.clone());
                i += 1;
            }
            if toks.get(i).is_some_and(|t| t.text == ",") {
                i += 1;
                continue;
            }
            break;
        }
    }
    Scan { toks, names, tables, skip }
}

fn alias_like(t: &Token<'_>) -> bool {
    (t.kind == TokenKind::Word && !is_keyword(t.text) && !["ON", "USING", "LEFT", "RIGHT", "NATURAL", "WINDOW"].iter().any(|w| t.is_word(w)))
        || t.kind == TokenKind::QuotedIdent
}

impl Scan<'_> {
    /// The column named at token `i`, if any.
    fn column_at(&self, i: usize, doc: &SchemaDoc) -> Option<ColumnRef> {
        let t = &self.toks[i];
        if self.skip.contains(&i) || (t.kind == TokenKind::Word && is_keyword(t.text)) {
            return None;
        }
        let name = t.ident()?;
        let next = self.toks.get(i + 1).map(|t| t.text);
        if next == Some("(") || next == Some(".") {
            return None;
        }
        if i > 0 && self.toks[i - 1].is_word("AS") {
            return None;
        }
        if i >= 2 && self.toks[i - 1].text == "." {
            let q = self.toks[i - 2].ident()?;
            let table = self.names.get(&q.to_lowercase())?;
            return doc.resolve(table, &name);
        }
        self.tables.iter().find_map(|t| doc.resolve(t, &name))
    }
}

/// Columns a query reads, found by matching identifiers against the tables
/// it names (with alias resolution). Not a full SQL analysis: unqualified
/// names go to the first referenced table that has such a column.
pub fn gold_columns(sql: &str, doc: &SchemaDoc) -> BTreeSet<ColumnRef> {
    let s = scan(sql, doc);
    (0..s.toks.len()).filter_map(|i| s.column_at(i, doc)).collect()
}

/// `(column, literal)` pairs from `column op 'literal'` comparisons,
/// including each string in `column IN ('a', 'b')`.
pub fn gold_values(sql: &str, doc: &SchemaDoc) -> Vec<(ColumnRef, String)> {
    let s = scan(sql, doc);
    let mut out = Vec::new();
    for i in 0..s.toks.len() {
        let Some(col) = s.column_at(i, doc) else { continue };
        let mut j = i + 1;
        if s.toks.get(j).is_some_and(|t| t.is_word("NOT")) {
            j += 1;
        }
        let Some(op) = s.toks.get(j) else { continue };
        if !VALUE_OPS.iter().any(|o| op.text.eq_ignore_ascii_case(o)) {
            continue;
        }
        j += 1;
        if op.is_word("IN") {
            if s.toks.get(j).map(|t| t.text) != Some("(") {
                continue;
            }
            j += 1;
            while let Some(t) = s.toks.get(j) {
                match t.kind {
                    TokenKind::String => out.extend(t.string_value().map(|v| (col.clone(), v))),
                    _ if t.text == "," => {}
                    _ => break,
                }
                j += 1;
            }
        } else if let Some(v) = s.toks.get(j).and_then(Token::string_value) {
            out.push((col, v));
        }
    }
    out.sort();
    out.dedup();
    out
}
