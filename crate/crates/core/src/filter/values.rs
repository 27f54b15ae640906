use std::path::Path;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::levenshtein::top_k_by_distance;
use super::lsh::{LshIndex, LshParams, MinHasher, SubwordTokenizer};
use super::KeywordSet;
use crate::backend::{cosine, Embedder};
use crate::schema::{open_read_only, quote_ident, ColumnMeta, ColumnRef, SchemaDoc};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueParams {
    /// Values kept per (keyword, column) by edit distance.
    pub top_k: usize,
    /// Minimum cosine(keyword, value); -1 keeps everything.
    pub threshold: f64,
    pub lsh_enabled: bool,
    pub lsh: LshParams,
    /// Values farther than max(len(keyword), this) are ignored.
    pub min_distance_cap: usize,
}

impl Default for ValueParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            threshold: 0.60,
            lsh_enabled: true,
            lsh: LshParams::default(),
            min_distance_cap: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedValue {
    pub column: ColumnRef,
    pub keyword: String,
    pub value_text: String,
    pub edit_distance: usize,
    pub cosine: f64,
}

/// Distinct non-null values of a column as text.
pub fn load_column_values(conn: &Connection, col: &ColumnRef) -> rusqlite::Result<Vec<String>> {
    let sql = format!(
        "SELECT DISTINCT CAST({c} AS TEXT) FROM {t} WHERE {c} IS NOT NULL",
        c = quote_ident(&col.column),
        t = quote_ident(&col.table)
    );
    let mut stmt = conn.prepare(&sql)?;
    let rows = stmt.query_map([], |r| r.get::<_, Option<String>>(0))?;
    let mut out = Vec::new();
    for r in rows {
        if let Some(v) = r? {
            out.push(v);
        }
    }
    Ok(out)
}

/// The three value-retrieval stages for one column.
pub struct ValueRetriever<'a> {
    params: ValueParams,
    tokenizer: &'a dyn SubwordTokenizer,
    embedder: &'a dyn Embedder,
    hasher: MinHasher,
}

impl<'a> ValueRetriever<'a> {
    pub fn new(params: ValueParams, tokenizer: &'a dyn SubwordTokenizer, embedder: &'a dyn Embedder) -> Self {
        let hasher = MinHasher::new(params.lsh.permutations(), params.lsh.seed);
        Self {
            params,
            tokenizer,
            embedder,
            hasher,
        }
    }

    pub fn params(&self) -> &ValueParams {
        &self.params
    }

    /// Stage 1: top-k by edit distance, ties broken by value text.
    pub fn edit_distance_stage<'v>(&self, keyword: &str, values: &'v [String]) -> Vec<(usize, &'v str)> {
        let cap = keyword.chars().count().max(self.params.min_distance_cap);
        top_k_by_distance(keyword, values.iter().map(String::as_str), self.params.top_k, cap)
    }

    fn signature(&self, text: &str, meta_tokens: &[String]) -> Vec<u64> {
        let toks = self.tokenizer.tokenize(text);
        self.hasher
            .signature(toks.iter().chain(meta_tokens).map(String::as_str))
    }

    /// Stage 2: keep candidates sharing an LSH band with the keyword. Value and
    /// keyword token sets both include the column-name tokens.
    pub fn lsh_stage<'v>(&self, keyword: &str, column: &ColumnMeta, hits: Vec<(usize, &'v str)>) -> Vec<(usize, &'v str)> {
        if !self.params.lsh_enabled || hits.is_empty() {
            return hits;
        }
        let meta = self.tokenizer.tokenize(&column.col.column);
        let mut index = LshIndex::new(self.params.lsh);
        for (i, (_, v)) in hits.iter().enumerate() {
            index.insert(i, &self.signature(v, &meta));
        }
        let keep = index.query(&self.signature(keyword, &meta));
        hits.into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(i))
            .map(|(_, h)| h)
            .collect()
    }

    /// All stages over an in-memory value list.
    pub fn retrieve(&self, keyword: &str, column: &ColumnMeta, values: &[String]) -> Result<Vec<RetrievedValue>> {
        let hits = self.edit_distance_stage(keyword, values);
        let hits = self.lsh_stage(keyword, column, hits);
        if hits.is_empty() {
            return Ok(Vec::new());
        }
        let mut texts: Vec<&str> = vec![keyword];
        texts.extend(hits.iter().map(|(_, v)| *v));
        let vecs = self.embedder.embed(&texts)?;
        Ok(hits
            .iter()
            .zip(&vecs[1..])
            .map(|((d, v), vv)| (d, v, cosine(&vecs[0], vv)))
            .filter(|(_, _, c)| *c >= self.params.threshold)
            .map(|(d, v, c)| RetrievedValue {
                column: column.col.clone(),
                keyword: keyword.to_string(),
                value_text: v.to_string(),
                edit_distance: *d,
                cosine: c,
            })
            .collect())
    }
}

/// Value retrieval over every text-typed column of the database, for every
/// keyword. Results are ordered by (keyword, column position, rank).
pub fn retrieve_values(
    keywords: &KeywordSet,
    db_file: &Path,
    doc: &SchemaDoc,
    retriever: &ValueRetriever<'_>,
) -> Result<Vec<RetrievedValue>> {
    if keywords.keywords.is_empty() {
        return Ok(Vec::new());
    }
    let conn = open_read_only(db_file)?;
    let mut columns: Vec<(&ColumnMeta, Vec<String>)> = Vec::new();
    for c in doc.columns().filter(|c| c.is_text()) {
        let vals = load_column_values(&conn, &c.col).map_err(|e| Error::unreadable(db_file, e))?;
        columns.push((c, vals));
    }
    let mut out = Vec::new();
    for kw in &keywords.keywords {
        for (meta, vals) in &columns {
            out.extend(retriever.retrieve(kw, meta, vals)?);
        }
    }
    Ok(out)
}
