use std::collections::BTreeSet;
use std::path::Path;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};

use super::{ColumnMeta, ColumnRef, Dialect, ForeignKey, SchemaDoc, TableMeta};
use crate::{Error, Result};

/// Opens an SQLite file read-only, failing if it does not exist or is not a database.
pub fn open_read_only(db_file: &Path) -> Result<Connection> {
    if !db_file.is_file() {
        return Err(Error::unreadable(db_file, "no such file"));
    }
    let conn = Connection::open_with_flags(
        db_file,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
    .map_err(|e| Error::unreadable(db_file, e))?;
    conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))
        .map_err(|e| Error::unreadable(db_file, e))?;
    Ok(conn)
}

pub(crate) fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

pub(crate) fn render_cell(v: ValueRef<'_>) -> Option<String> {
    match v {
        ValueRef::Null => None,
        ValueRef::Integer(i) => Some(i.to_string()),
        ValueRef::Real(f) => Some(f.to_string()),
        ValueRef::Text(t) => Some(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Some(format!("<blob {} bytes>", b.len())),
    }
}

/// Reads tables, columns, keys and sample values from a database file.
///
/// Sample values are the first `sample_cap` distinct non-null values of each
/// column in primary-key order (rowid order for tables without one).
pub fn introspect(db_file: &Path, dialect: Dialect, sample_cap: usize) -> Result<SchemaDoc> {
    if dialect != Dialect::Sqlite {
        return Err(Error::UnsupportedDialect(dialect.to_string()));
    }
    let conn = open_read_only(db_file)?;
    let db_id = db_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let err = |e: rusqlite::Error| Error::unreadable(db_file, e);

    let table_names: Vec<String> = {
        let mut stmt = conn
            .prepare(
                "SELECT name FROM sqlite_master WHERE type = 'table' \
                 AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
            )
            .map_err(err)?;
        let names = stmt
            .query_map([], |r| r.get::<_, String>(0))
            .map_err(err)?
            .collect::<rusqlite::Result<_>>()
            .map_err(err)?;
        names
    };

    let mut tables = Vec::with_capacity(table_names.len());
    for name in &table_names {
        let mut stmt = conn
            .prepare(&format!("PRAGMA table_info({})", quote_ident(name)))
            .map_err(err)?;
        // (name, type, pk ordinal)
        let cols: Vec<(String, String, i64)> = stmt
            .query_map([], |r| Ok((r.get(1)?, r.get::<_, Option<String>>(2)?.unwrap_or_default(), r.get(5)?)))
            .map_err(err)?
            .collect::<rusqlite::Result<_>>()
            .map_err(err)?;

        let mut pk: Vec<(i64, &str)> = cols
            .iter()
            .filter(|c| c.2 > 0)
            .map(|c| (c.2, c.0.as_str()))
            .collect();
        pk.sort();
        let order_by = if pk.is_empty() {
            "rowid".to_string()
        } else {
            pk.iter().map(|(_, c)| quote_ident(c)).collect::<Vec<_>>().join(", ")
        };

        let mut columns = Vec::with_capacity(cols.len());
        for (col_name, ty, pk_ord) in &cols {
            let sample_values = if sample_cap == 0 {
                Vec::new()
            } else {
                sample_values(&conn, name, col_name, &order_by, sample_cap).map_err(err)?
            };
            columns.push(ColumnMeta {
                col: ColumnRef::new(name.clone(), col_name.clone()),
                data_type: if ty.is_empty() { "ANY".into() } else { ty.clone() },
                description: String::new(),
                is_primary_key: *pk_ord > 0,
                sample_values,
            });
        }
        tables.push(TableMeta {
            name: name.clone(),
            description: String::new(),
            columns,
        });
    }

    let mut doc = SchemaDoc {
        db_id,
        dialect,
        tables,
        foreign_keys: Vec::new(),
    };

    let mut fks = Vec::new();
    let mut seen = BTreeSet::new();
    for name in &table_names {
        let mut stmt = conn
            .prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(name)))
            .map_err(err)?;
        let rows: Vec<(String, String, Option<String>)> = stmt
            .query_map([], |r| Ok((r.get(2)?, r.get(3)?, r.get(4)?)))
            .map_err(err)?
            .collect::<rusqlite::Result<_>>()
            .map_err(err)?;
        for (parent, from, to) in rows {
            let from_ref = doc.resolve(name, &from);
            // A missing target column means the parent's primary key.
            let to_ref = match to {
                Some(c) => doc.resolve(&parent, &c),
                None => doc
                    .tables
                    .iter()
                    .find(|t| t.name.eq_ignore_ascii_case(&parent))
                    .and_then(|t| t.primary_keys().next())
                    .map(|c| c.col.clone()),
            };
            match (from_ref, to_ref) {
                (Some(f), Some(t)) if f != t => {
                    if seen.insert((f.clone(), t.clone())) {
                        fks.push(ForeignKey { from: f, to: t });
                    }
                }
                _ => log::warn!("skipping unresolvable foreign key {name}.{from} -> {parent}"),
            }
        }
    }
    doc.foreign_keys = fks;
    Ok(doc)
}

fn sample_values(
    conn: &Connection,
    table: &str,
    column: &str,
    order_by: &str,
    cap: usize,
) -> rusqlite::Result<Vec<String>> {
    let sql = format!(
        "SELECT {c} FROM {t} WHERE {c} IS NOT NULL ORDER BY {order_by}",
        c = quote_ident(column),
        t = quote_ident(table),
    );
    let mut stmt = conn.prepare(&sql)?;
    let mut rows = stmt.query([])?;
    let mut out: Vec<String> = Vec::with_capacity(cap);
    while let Some(row) = rows.next()? {
        if let Some(v) = render_cell(row.get_ref(0)?) {
            if !out.contains(&v) {
                out.push(v);
                if out.len() == cap {
                    break;
                }
            }
        }
    }
    Ok(out)
}
