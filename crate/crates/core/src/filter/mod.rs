//! Schema filtering: multi-path retrieval followed by iterative column selection.
//!
//! Retrieval scores every (keyword, column) pair by the product of a
//! question/table similarity and a keyword/column similarity, and separately
//! looks up literal values by edit distance, LSH and embedding similarity.
//! The union of both paths (plus key closure) is the retrieved schema, which
//! column selection then narrows into `p_s` nested subsets.

mod keywords;
pub mod levenshtein;
pub mod lsh;
mod scoring;
mod select;
mod values;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use keywords::{content_words, extract_keywords, parse_keywords, KeywordSet};
pub use scoring::{question_text, score_columns, top_columns_per_keyword, ScoredColumn};
pub use select::{parse_selection, select_columns, SelectionRound};
pub use values::{load_column_values, retrieve_values, RetrievedValue, ValueParams, ValueRetriever};

use crate::schema::{pf_key_closure, ColumnRef, SchemaDoc, SchemaSubset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalParams {
    /// Columns kept per keyword.
    pub top_k_columns: usize,
    pub values: ValueParams,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            top_k_columns: 5,
            values: ValueParams::default(),
        }
    }
}

/// Union of each keyword's best `top_k_cols` columns and every column owning a
/// retrieved value, closed over primary and foreign keys.
pub fn build_retrieved_schema(
    scored: &[ScoredColumn],
    values: &[RetrievedValue],
    doc: &SchemaDoc,
    top_k_cols: usize,
) -> SchemaSubset {
    let mut cols: BTreeSet<ColumnRef> = top_columns_per_keyword(scored, top_k_cols)
        .into_iter()
        .map(|s| s.col.clone())
        .collect();
    cols.extend(values.iter().map(|v| v.column.clone()));
    cols.retain(|c| doc.contains(c));
    let keys = pf_key_closure(doc, &cols);
    cols.extend(keys);
    SchemaSubset::new(doc, cols, 0)
}

/// Everything the schema filter produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFilterReport {
    pub keywords: KeywordSet,
    /// Best columns per keyword, with scores.
    pub top_columns: Vec<ScoredColumn>,
    pub values: Vec<RetrievedValue>,
    pub retrieved: SchemaSubset,
    pub rounds: Vec<SelectionRound>,
    pub subsets: Vec<SchemaSubset>,
}
