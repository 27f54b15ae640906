use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatRequest};
use crate::schema::{pf_key_closure, render_schema, ColumnRef, SchemaDoc, SchemaSubset};
use crate::templates::Template;
use crate::Result;

/// One column-selection iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub iteration: usize,
    /// Columns the model picked that were still available.
    pub selected: BTreeSet<ColumnRef>,
    /// Key closure of `selected`.
    pub keys: BTreeSet<ColumnRef>,
    /// Removed from the retrieved pool after this round.
    pub removed: BTreeSet<ColumnRef>,
    /// The answer named no usable column.
    pub unparseable: bool,
}

fn column_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let ident = r#"(?:`[^`]+`|"[^"]+"|\[[^\]]+\]|[A-Za-z_][A-Za-z0-9_$]*)"#;
        Regex::new(&format!(r"({ident})\s*\.\s*({ident})")).unwrap()
    })
}

fn unquote(s: &str) -> &str {
    let b = s.as_bytes();
    if b.len() >= 2 && matches!((b[0], b[b.len() - 1]), (b'`', b'`') | (b'"', b'"') | (b'[', b']')) {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Every `table.column` mention in `response` that resolves in `doc`.
pub fn parse_selection(response: &str, doc: &SchemaDoc) -> BTreeSet<ColumnRef> {
    column_pattern()
        .captures_iter(response)
        .filter_map(|c| doc.resolve(unquote(&c[1]), unquote(&c[2])))
        .collect()
}

/// Iterative column selection over the retrieved schema.
///
/// Round `i` asks the model to pick columns from what is left of the pool,
/// adds the picks' key closure, emits the union with every earlier subset,
/// then removes the non-key picks from the pool. The returned subsets are
/// nested: `S_1 ⊆ S_2 ⊆ … ⊆ S_{p_s}`.
#[allow(clippy::too_many_arguments)]
pub fn select_columns(
    doc: &SchemaDoc,
    retrieved: &SchemaSubset,
    question: &str,
    evidence: &str,
    p_s: usize,
    backend: &dyn ChatBackend,
    role: &str,
    temperature: f64,
) -> Result<(Vec<SchemaSubset>, Vec<SelectionRound>)> {
    assert!(p_s >= 1, "p_s must be at least 1");
    let template = Template::builtin("column_select").expect("builtin template");
    let mut pool: BTreeSet<ColumnRef> = retrieved.columns.clone();
    let mut union: BTreeSet<ColumnRef> = BTreeSet::new();
    let mut subsets = Vec::with_capacity(p_s);
    let mut rounds = Vec::with_capacity(p_s);

    for i in 1..=p_s {
        let view = SchemaSubset::new(doc, pool.clone(), 0);
        let schema = render_schema(doc, Some(&view))?;
        let prompt = template.render(&[("schema", &schema), ("question", question), ("evidence", evidence)])?;
        let response = backend.chat(&ChatRequest::user(role, prompt, temperature))?;

        let selected: BTreeSet<ColumnRef> = parse_selection(&response, doc)
            .intersection(&pool)
            .cloned()
            .collect();
        let keys = pf_key_closure(doc, &selected);
        union.extend(selected.iter().cloned());
        union.extend(keys.iter().cloned());
        subsets.push(SchemaSubset::new(doc, union.clone(), i));

        let removed: BTreeSet<ColumnRef> = selected.difference(&keys).cloned().collect();
        pool.retain(|c| !removed.contains(c));
        rounds.push(SelectionRound {
            iteration: i,
            unparseable: selected.is_empty(),
            selected,
            keys,
            removed,
        });
    }
    Ok((subsets, rounds))
}
