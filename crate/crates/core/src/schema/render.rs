use std::collections::BTreeSet;
use std::fmt::Write;

use super::{ColumnMeta, ColumnRef, SchemaDoc, SchemaSubset};
use crate::Result;

/// Sample values longer than this many characters are cut and marked with `...`.
pub const MAX_SAMPLE_CHARS: usize = 64;

/// Renders the prompt text for a document, or for the columns of `subset`.
///
/// ```text
/// [DB_ID] store
/// # Table: customers
/// (customer_id: INTEGER, Primary Key, Examples: 1, 2, 3)
/// (city: TEXT, Examples: Alameda, Fresno, Oakland)
/// [Foreign keys]
/// orders.customer_id = customers.customer_id
/// ```
///
/// A table block lists the subset's columns plus the table's primary keys, in
/// document order. Foreign-key lines appear only when both endpoints are
/// rendered.
pub fn render_schema(doc: &SchemaDoc, subset: Option<&SchemaSubset>) -> Result<String> {
    let shown: BTreeSet<ColumnRef> = match subset {
        None => doc.all_columns(),
        Some(s) => {
            s.validate(doc)?;
            let mut cols = s.columns.clone();
            cols.extend(s.missing_primary_keys(doc));
            cols
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, "[DB_ID] {}", doc.db_id);
    for table in &doc.tables {
        let cols: Vec<&ColumnMeta> = table.columns.iter().filter(|c| shown.contains(&c.col)).collect();
        if cols.is_empty() {
            continue;
        }
        if table.description.is_empty() {
            let _ = writeln!(out, "# Table: {}", table.name);
        } else {
            let _ = writeln!(out, "# Table: {}, {}", table.name, table.description);
        }
        for c in cols {
            out.push_str(&render_column(c));
            out.push('\n');
        }
    }
    let fks: Vec<String> = doc
        .foreign_keys
        .iter()
        .filter(|fk| shown.contains(&fk.from) && shown.contains(&fk.to))
        .map(|fk| format!("{} = {}", fk.from, fk.to))
        .collect();
    if !fks.is_empty() {
        out.push_str("[Foreign keys]\n");
        for line in fks {
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn render_column(c: &ColumnMeta) -> String {
    let mut parts = vec![format!("{}: {}", c.col.column, c.data_type)];
    if c.is_primary_key {
        parts.push("Primary Key".into());
    }
    if !c.description.is_empty() {
        parts.push(c.description.clone());
    }
    if !c.sample_values.is_empty() {
        let vals: Vec<String> = c.sample_values.iter().map(|v| truncate(v)).collect();
        parts.push(format!("Examples: {}", vals.join(", ")));
    }
    format!("({})", parts.join(", "))
}

fn truncate(v: &str) -> String {
    if v.chars().count() <= MAX_SAMPLE_CHARS {
        v.to_string()
    } else {
        let mut s: String = v.chars().take(MAX_SAMPLE_CHARS).collect();
        s.push_str("...");
        s
    }
}
