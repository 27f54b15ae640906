use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::KeywordSet;
use crate::backend::{cosine, Embedder};
use crate::schema::{ColumnRef, SchemaDoc};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredColumn {
    pub col: ColumnRef,
    pub keyword: String,
    pub keyword_index: usize,
    /// `table_similarity * column_similarity`.
    pub score: f64,
    /// cos(question || evidence, table metadata)
    pub table_similarity: f64,
    /// cos(keyword, column metadata)
    pub column_similarity: f64,
}

/// Text embedded for the question side of the table term.
pub fn question_text(question: &str, evidence: &str) -> String {
    format!("{question} {evidence}").trim().to_string()
}

/// Scores every (keyword, column) pair as
/// `cos(V[Q||E], V[table(c)]) * cos(V[k], V[c])`.
///
/// Output is grouped by keyword in keyword order; within a keyword, pairs are
/// sorted by descending score, ties by column position in the document.
pub fn score_columns(keywords: &KeywordSet, doc: &SchemaDoc, embedder: &dyn Embedder) -> Result<Vec<ScoredColumn>> {
    if keywords.keywords.is_empty() || doc.column_count() == 0 {
        return Ok(Vec::new());
    }
    let qe = question_text(&keywords.question, &keywords.evidence);
    let qe_vec = embedder.embed_one(if qe.is_empty() { " " } else { &qe })?;

    let table_texts: Vec<String> = doc.tables.iter().map(|t| t.metadata_text()).collect();
    let table_vecs = embedder.embed(&table_texts.iter().map(String::as_str).collect::<Vec<_>>())?;
    let table_sim: Vec<f64> = table_vecs.iter().map(|v| cosine(&qe_vec, v)).collect();

    let cols: Vec<(usize, &crate::schema::ColumnMeta)> = doc
        .tables
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.columns.iter().map(move |c| (ti, c)))
        .collect();
    let col_texts: Vec<String> = cols.iter().map(|(_, c)| c.metadata_text()).collect();
    let col_vecs = embedder.embed(&col_texts.iter().map(String::as_str).collect::<Vec<_>>())?;

    let kw_vecs = embedder.embed(&keywords.keywords.iter().map(String::as_str).collect::<Vec<_>>())?;

    let mut out = Vec::with_capacity(kw_vecs.len() * cols.len());
    for (ki, (kw, kv)) in keywords.keywords.iter().zip(&kw_vecs).enumerate() {
        let mut group: Vec<(usize, ScoredColumn)> = cols
            .iter()
            .zip(&col_vecs)
            .enumerate()
            .map(|(pos, ((ti, meta), cv))| {
                let column_similarity = cosine(kv, cv);
                (
                    pos,
                    ScoredColumn {
                        col: meta.col.clone(),
                        keyword: kw.clone(),
                        keyword_index: ki,
                        score: table_sim[*ti] * column_similarity,
                        table_similarity: table_sim[*ti],
                        column_similarity,
                    },
                )
            })
            .collect();
        group.sort_by(|(pa, a), (pb, b)| match b.score.total_cmp(&a.score) {
            Ordering::Equal => pa.cmp(pb),
            o => o,
        });
        out.extend(group.into_iter().map(|(_, s)| s));
    }
    Ok(out)
}

/// The best `k` columns for each keyword, in keyword order.
pub fn top_columns_per_keyword(scored: &[ScoredColumn], k: usize) -> Vec<&ScoredColumn> {
    let mut out = Vec::new();
    let mut current = usize::MAX;
    let mut taken = 0;
    for s in scored {
        if s.keyword_index != current {
            current = s.keyword_index;
            taken = 0;
        }
        if taken < k {
            out.push(s);
            taken += 1;
        }
    }
    out
}
