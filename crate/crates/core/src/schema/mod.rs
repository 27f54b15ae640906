//! Structured database schema documents.
//!
//! A [`SchemaDoc`] is the in-memory description of one database: ordered
//! tables, their columns with type, description, key flag and a few sample
//! values, plus foreign keys. It is built once by [`introspect`] and then
//! shared read-only by every pipeline stage. Column subsets produced by the
//! schema filter are [`SchemaSubset`]s over a parent document.

mod introspect;
mod render;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use introspect::{introspect, open_read_only};
pub(crate) use introspect::quote_ident;
pub use render::{render_schema, MAX_SAMPLE_CHARS};

/// Default number of sample values kept per column.
pub const DEFAULT_SAMPLE_CAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub col: ColumnRef,
    pub data_type: String,
    #[serde(default)]
    pub description: String,
    pub is_primary_key: bool,
    #[serde(default)]
    pub sample_values: Vec<String>,
}

impl ColumnMeta {
    /// True for TEXT/CHAR/VARCHAR-like declared types (SQLite text affinity).
    pub fn is_text(&self) -> bool {
        let t = self.data_type.to_ascii_uppercase();
        t.contains("CHAR") || t.contains("TEXT") || t.contains("CLOB") || t == "STRING"
    }

    /// Text embedded as the column's metadata: name, type and description.
    pub fn metadata_text(&self) -> String {
        let mut s = format!("{} {} {}", self.col.table, self.col.column, self.data_type);
        if !self.description.is_empty() {
            s.push(' ');
            s.push_str(&self.description);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    #[default]
    Sqlite,
    Postgres,
    Mysql,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dialect::Sqlite => "sqlite",
            Dialect::Postgres => "postgres",
            Dialect::Mysql => "mysql",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub columns: Vec<ColumnMeta>,
}

impl TableMeta {
    /// Text embedded as the table's metadata.
    pub fn metadata_text(&self) -> String {
        if self.description.is_empty() {
            format!("table {}", self.name)
        } else {
            format!("table {} {}", self.name, self.description)
        }
    }

    pub fn primary_keys(&self) -> impl Iterator<Item = &ColumnMeta> {
        self.columns.iter().filter(|c| c.is_primary_key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub db_id: String,
    pub dialect: Dialect,
    pub tables: Vec<TableMeta>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl SchemaDoc {
    pub fn table(&self, name: &str) -> Option<&TableMeta> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnMeta> {
        self.tables.iter().flat_map(|t| t.columns.iter())
    }

    pub fn column(&self, col: &ColumnRef) -> Option<&ColumnMeta> {
        self.table(&col.table)?
            .columns
            .iter()
            .find(|c| c.col.column == col.column)
    }

    pub fn contains(&self, col: &ColumnRef) -> bool {
        self.column(col).is_some()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Case-insensitive lookup returning the canonical reference.
    pub fn resolve(&self, table: &str, column: &str) -> Option<ColumnRef> {
        let t = self
            .tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(table))?;
        t.columns
            .iter()
            .find(|c| c.col.column.eq_ignore_ascii_case(column))
            .map(|c| c.col.clone())
    }

    /// Tables owning a column named `column` (case-insensitive).
    pub fn tables_with_column(&self, column: &str) -> Vec<&TableMeta> {
        self.tables
            .iter()
            .filter(|t| t.columns.iter().any(|c| c.col.column.eq_ignore_ascii_case(column)))
            .collect()
    }

    pub fn all_columns(&self) -> BTreeSet<ColumnRef> {
        self.columns().map(|c| c.col.clone()).collect()
    }

    /// Position of a column in document order, used for stable tie-breaks.
    pub fn column_position(&self, col: &ColumnRef) -> Option<usize> {
        self.columns().position(|c| &c.col == col)
    }

    /// Checks structural invariants: unique table names, resolvable foreign keys.
    pub fn validate(&self) -> crate::Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tables {
            if !seen.insert(t.name.as_str()) {
                return Err(crate::Error::ConfigInvalid(format!(
                    "duplicate table `{}` in {}",
                    t.name, self.db_id
                )));
            }
        }
        for fk in &self.foreign_keys {
            for end in [&fk.from, &fk.to] {
                if !self.contains(end) {
                    return Err(crate::Error::DanglingSubset(end.to_string()));
                }
            }
        }
        Ok(())
    }
}

/// A set of columns of a parent document. `iteration_index` is the 1-based
/// column-selection round that produced it (0 for the retrieved schema).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSubset {
    pub db_id: String,
    pub columns: BTreeSet<ColumnRef>,
    pub iteration_index: usize,
}

impl SchemaSubset {
    pub fn new(doc: &SchemaDoc, columns: BTreeSet<ColumnRef>, iteration_index: usize) -> Self {
        Self {
            db_id: doc.db_id.clone(),
            columns,
            iteration_index,
        }
    }

    pub fn full(doc: &SchemaDoc) -> Self {
        Self::new(doc, doc.all_columns(), 0)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn contains(&self, col: &ColumnRef) -> bool {
        self.columns.contains(col)
    }

    pub fn touched_tables(&self) -> BTreeSet<&str> {
        self.columns.iter().map(|c| c.table.as_str()).collect()
    }

    pub fn validate(&self, doc: &SchemaDoc) -> crate::Result<()> {
        match self.columns.iter().find(|c| !doc.contains(c)) {
            Some(c) => Err(crate::Error::DanglingSubset(c.to_string())),
            None => Ok(()),
        }
    }

    /// Primary-key columns of touched tables that the subset lacks.
    pub fn missing_primary_keys(&self, doc: &SchemaDoc) -> Vec<ColumnRef> {
        self.touched_tables()
            .into_iter()
            .filter_map(|t| doc.table(t))
            .flat_map(|t| t.primary_keys())
            .filter(|c| !self.columns.contains(&c.col))
            .map(|c| c.col.clone())
            .collect()
    }
}

/// Primary keys of every table touched by `selected`, plus both endpoints of
/// each foreign key with an endpoint in a touched table (and the primary keys
/// of the tables those endpoints land in).
pub fn pf_key_closure(doc: &SchemaDoc, selected: &BTreeSet<ColumnRef>) -> BTreeSet<ColumnRef> {
    let touched: BTreeSet<&str> = selected.iter().map(|c| c.table.as_str()).collect();
    let mut out = BTreeSet::new();
    let mut key_tables: BTreeSet<&str> = touched.clone();
    for fk in &doc.foreign_keys {
        if touched.contains(fk.from.table.as_str()) || touched.contains(fk.to.table.as_str()) {
            out.insert(fk.from.clone());
            out.insert(fk.to.clone());
            key_tables.insert(fk.from.table.as_str());
            key_tables.insert(fk.to.table.as_str());
        }
    }
    for t in key_tables.into_iter().filter_map(|t| doc.table(t)) {
        out.extend(t.primary_keys().map(|c| c.col.clone()));
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    fn col(t: &str, c: &str, ty: &str, pk: bool) -> ColumnMeta {
        ColumnMeta {
            col: ColumnRef::new(t, c),
            data_type: ty.into(),
            description: String::new(),
            is_primary_key: pk,
            sample_values: vec![],
        }
    }

    /// users(id PK, name, city) / orders(order_id PK, user_id FK, amount) / items(item_id PK, title)
    pub fn shop() -> SchemaDoc {
        SchemaDoc {
            db_id: "shop".into(),
            dialect: Dialect::Sqlite,
            tables: vec![
                TableMeta {
                    name: "users".into(),
                    description: String::new(),
                    columns: vec![
                        col("users", "id", "INTEGER", true),
                        col("users", "name", "TEXT", false),
                        col("users", "city", "TEXT", false),
                    ],
                },
                TableMeta {
                    name: "orders".into(),
                    description: String::new(),
                    columns: vec![
                        col("orders", "order_id", "INTEGER", true),
                        col("orders", "user_id", "INTEGER", false),
                        col("orders", "amount", "REAL", false),
                    ],
                },
                TableMeta {
                    name: "items".into(),
                    description: String::new(),
                    columns: vec![
                        col("items", "item_id", "INTEGER", true),
                        col("items", "title", "TEXT", false),
                    ],
                },
            ],
            foreign_keys: vec![ForeignKey {
                from: ColumnRef::new("orders", "user_id"),
                to: ColumnRef::new("users", "id"),
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::shop;
    use super::*;
    use proptest::prelude::*;

    fn set(cols: &[(&str, &str)]) -> BTreeSet<ColumnRef> {
        cols.iter().map(|(t, c)| ColumnRef::new(*t, *c)).collect()
    }

    #[test]
    fn closure_follows_foreign_key() {
        let doc = shop();
        let got = pf_key_closure(&doc, &set(&[("orders", "amount")]));
        assert_eq!(
            got,
            set(&[("orders", "order_id"), ("orders", "user_id"), ("users", "id")])
        );
    }

    #[test]
    fn closure_of_empty_is_empty() {
        assert!(pf_key_closure(&shop(), &BTreeSet::new()).is_empty());
    }

    #[test]
    fn closure_of_keyless_table_is_its_pk() {
        let doc = shop();
        let got = pf_key_closure(&doc, &set(&[("items", "item_id"), ("items", "title")]));
        assert_eq!(got, set(&[("items", "item_id")]));
    }

    #[test]
    fn resolve_is_case_insensitive() {
        let doc = shop();
        assert_eq!(doc.resolve("USERS", "Name"), Some(ColumnRef::new("users", "name")));
        assert_eq!(doc.resolve("users", "nope"), None);
    }

    proptest! {
        #[test]
        fn closure_is_monotone(a in proptest::collection::vec(0usize..8, 0..8),
                               b in proptest::collection::vec(0usize..8, 0..8)) {
            let doc = shop();
            let all: Vec<ColumnRef> = doc.all_columns().into_iter().collect();
            let small: BTreeSet<ColumnRef> = a.iter().map(|&i| all[i].clone()).collect();
            let mut big = small.clone();
            big.extend(b.iter().map(|&i| all[i].clone()));
            let cs = pf_key_closure(&doc, &small);
            let cb = pf_key_closure(&doc, &big);
            prop_assert!(cs.is_subset(&cb));
        }
    }
}
