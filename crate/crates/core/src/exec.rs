//! SQL execution, result canonicalization and result equivalence.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::ErrorCode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::schema::open_read_only;
use crate::sqltext::{lex, significant, TokenKind};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    SyntaxError,
    RuntimeError,
    Timeout,
    /// Executed, but the result looks wrong: no columns, or a single NULL cell.
    Anomalous,
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecStatus::Ok => "ok",
            ExecStatus::SyntaxError => "syntax_error",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::Anomalous => "anomalous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn from_ref(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Int(i),
            ValueRef::Real(f) => Cell::Real(f),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }

    /// Canonical text: numbers share one namespace (so `1` and `1.0`
    /// agree), reals are rounded to 1e-6.
    pub fn canonical(&self) -> String {
        match self {
            Cell::Null => "null".into(),
            Cell::Int(i) => format!("n:{i}"),
            Cell::Real(f) => format!("n:{}", canonical_real(*f)),
            Cell::Text(s) => format!("s:{s}"),
            Cell::Blob(b) => format!("b:{}", b.iter().map(|x| format!("{x:02x}")).collect::<String>()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Real(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Blob(b) => write!(f, "x'{}'", b.iter().map(|x| format!("{x:02x}")).collect::<String>()),
        }
    }
}

fn canonical_real(f: f64) -> String {
    if !f.is_finite() {
        return f.to_string();
    }
    let rounded = (f * 1e6).round() / 1e6;
    let mut s = format!("{rounded:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub type Row = Vec<Cell>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    /// Present for ok and anomalous executions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Wall time; not serialized so transcripts stay reproducible.
    #[serde(skip)]
    pub elapsed_ms: u64,
}

impl ExecutionOutcome {
    /// Classifies `rows` as ok or anomalous.
    pub fn from_rows(rows: Vec<Row>, column_count: usize) -> Self {
        let anomalous = column_count == 0
            || (rows.len() == 1 && rows[0].len() == 1 && rows[0][0] == Cell::Null);
        Self {
            status: if anomalous { ExecStatus::Anomalous } else { ExecStatus::Ok },
            message: anomalous.then(|| {
                if column_count == 0 {
                    "statement returned no columns".to_string()
                } else {
                    "result is a single NULL".to_string()
                }
            }),
            rows: Some(rows),
            elapsed_ms: 0,
        }
    }

    pub fn ok(rows: Vec<Row>) -> Self {
        let cols = rows.first().map_or(1, Vec::len);
        Self::from_rows(rows, cols)
    }

    pub fn failure(status: ExecStatus, message: impl Into<String>) -> Self {
        debug_assert!(!matches!(status, ExecStatus::Ok | ExecStatus::Anomalous));
        Self {
            status,
            rows: None,
            message: Some(message.into()),
            elapsed_ms: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Ran to completion (ok or anomalous).
    pub fn executed(&self) -> bool {
        self.rows.is_some()
    }

    pub fn canonical(&self, mode: EquivalenceMode) -> Option<CanonicalResult> {
        self.rows.as_ref().map(|r| canonicalize(r, mode))
    }

    /// Short human-readable description for refine prompts.
    pub fn feedback(&self, max_rows: usize) -> String {
        match &self.rows {
            Some(rows) => {
                let mut s = format!("status: {}", self.status);
                if let Some(m) = &self.message {
                    s.push_str(&format!(" ({m})"));
                }
                s.push_str(&format!(", {} row(s)", rows.len()));
                for r in rows.iter().take(max_rows) {
                    let cells: Vec<String> = r
                        .iter()
                        .map(|c| match c {
                            Cell::Null => "NULL".to_string(),
                            Cell::Int(i) => i.to_string(),
                            Cell::Real(f) => f.to_string(),
                            Cell::Text(t) => t.clone(),
                            Cell::Blob(b) => format!("<blob {}>", b.len()),
                        })
                        .collect();
                    s.push_str(&format!("\n({})", cells.join(", ")));
                }
                s
            }
            None => format!(
                "status: {}, error: {}",
                self.status,
                self.message.as_deref().unwrap_or("")
            ),
        }
    }
}

fn classify(err: &rusqlite::Error) -> ExecStatus {
    if let rusqlite::Error::SqliteFailure(e, _) = err {
        if e.code == ErrorCode::OperationInterrupted {
            return ExecStatus::Timeout;
        }
    }
    let msg = err.to_string();
    if msg.contains("syntax error") || msg.contains("incomplete input") || msg.contains("unrecognized token") {
        ExecStatus::SyntaxError
    } else {
        ExecStatus::RuntimeError
    }
}

/// Runs one read-only statement on a fresh connection.
pub fn execute(sql: &str, db_file: &Path, timeout_ms: u64) -> ExecutionOutcome {
    let start = Instant::now();
    let mut out = run(sql, db_file, timeout_ms);
    out.elapsed_ms = start.elapsed().as_millis() as u64;
    out
}

pub(crate) fn has_multiple_statements(sql: &str) -> bool {
    let toks = significant(&lex(sql));
    toks.iter()
        .position(|t| t.kind == TokenKind::Symbol && t.text == ";")
        .is_some_and(|i| toks[i + 1..].iter().any(|t| t.text != ";"))
}

fn run(sql: &str, db_file: &Path, timeout_ms: u64) -> ExecutionOutcome {
    let conn = match open_read_only(db_file) {
        Ok(c) => c,
        Err(e) => return ExecutionOutcome::failure(ExecStatus::RuntimeError, e.to_string()),
    };
    if sql.trim().is_empty() {
        return ExecutionOutcome::failure(ExecStatus::SyntaxError, "empty statement");
    }
    if has_multiple_statements(sql) {
        return ExecutionOutcome::failure(ExecStatus::SyntaxError, "multiple statements");
    }
    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    conn.progress_handler(1_000, Some(move || Instant::now() >= deadline));

    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(rusqlite::Error::MultipleStatement) => {
            return ExecutionOutcome::failure(ExecStatus::SyntaxError, "multiple statements")
        }
        Err(e) => return ExecutionOutcome::failure(classify(&e), e.to_string()),
    };
    if !stmt.readonly() {
        return ExecutionOutcome::failure(ExecStatus::RuntimeError, "statement is not read-only");
    }
    let ncols = stmt.column_count();
    let mut rows_out = Vec::new();
    let mut rows = match stmt.query([]) {
        Ok(r) => r,
        Err(e) => return ExecutionOutcome::failure(classify(&e), e.to_string()),
    };
    loop {
        match rows.next() {
            Ok(Some(row)) => {
                let mut r = Vec::with_capacity(ncols);
                for i in 0..ncols {
                    match row.get_ref(i) {
                        Ok(v) => r.push(Cell::from_ref(v)),
                        Err(e) => return ExecutionOutcome::failure(classify(&e), e.to_string()),
                    }
                }
                rows_out.push(r);
            }
            Ok(None) => break,
            Err(e) => return ExecutionOutcome::failure(classify(&e), e.to_string()),
        }
    }
    ExecutionOutcome::from_rows(rows_out, ncols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EquivalenceMode {
    /// Deduplicated, order-insensitive.
    #[default]
    Set,
    /// Order-insensitive, duplicates count.
    Bag,
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalResult {
    pub rows: Vec<Vec<String>>,
}

impl CanonicalResult {
    pub fn key(&self) -> ResultKey {
        let mut h = Sha256::new();
        for row in &self.rows {
            for cell in row {
                h.update((cell.len() as u64).to_le_bytes());
                h.update(cell.as_bytes());
            }
            h.update([0xff]);
        }
        let digest = h.finalize();
        let mut k = [0u8; 16];
        k.copy_from_slice(&digest[..16]);
        ResultKey(k)
    }
}

/// Fingerprint of a canonical result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResultKey(pub [u8; 16]);

impl fmt::Display for ResultKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl Serialize for ResultKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ResultKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bad = || serde::de::Error::custom(format!("bad result key `{s}`"));
        if s.len() != 32 || !s.is_ascii() {
            return Err(bad());
        }
        let mut k = [0u8; 16];
        for (i, b) in k.iter_mut().enumerate() {
            *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        Ok(ResultKey(k))
    }
}

pub fn canonicalize(rows: &[Row], mode: EquivalenceMode) -> CanonicalResult {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(Cell::canonical).collect())
        .collect();
    match mode {
        EquivalenceMode::Set => {
            out.sort();
            out.dedup();
        }
        EquivalenceMode::Bag => out.sort(),
        EquivalenceMode::Ordered => {}
    }
    CanonicalResult { rows: out }
}

/// True iff both outcomes are `ok` and canonically equal. Failed and
/// anomalous outcomes are equivalent to nothing.
pub fn equivalent(a: &ExecutionOutcome, b: &ExecutionOutcome, mode: EquivalenceMode) -> bool {
    a.is_ok() && b.is_ok() && results_match(a, b, mode)
}

/// Like [`equivalent`] but also accepts anomalous executions; used for
/// scoring, where a legitimately NULL answer must still count.
pub fn results_match(a: &ExecutionOutcome, b: &ExecutionOutcome, mode: EquivalenceMode) -> bool {
    match (a.canonical(mode), b.canonical(mode)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::build_store_db;
    use proptest::prelude::*;

    fn store() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("store.sqlite");
        build_store_db(&p).unwrap();
        (dir, p)
    }

    #[test]
    fn select_one() {
        let (_d, db) = store();
        let o = execute("SELECT 1", &db, 1000);
        assert_eq!(o.status, ExecStatus::Ok);
        assert_eq!(o.rows, Some(vec![vec![Cell::Int(1)]]));
    }

    #[test]
    fn syntax_error_is_classified() {
        let (_d, db) = store();
        let o = execute("SELEC 1", &db, 1000);
        assert_eq!(o.status, ExecStatus::SyntaxError);
        assert!(o.message.unwrap().contains("syntax error"));
        assert!(o.rows.is_none());
    }

    #[test]
    fn missing_column_is_runtime_error() {
        let (_d, db) = store();
        assert_eq!(execute("SELECT nope FROM customers", &db, 1000).status, ExecStatus::RuntimeError);
    }

    #[test]
    fn single_null_is_anomalous() {
        let (_d, db) = store();
        let o = execute("SELECT NULL", &db, 1000);
        assert_eq!(o.status, ExecStatus::Anomalous);
        assert!(o.executed());
    }

    #[test]
    fn writes_are_refused() {
        let (_d, db) = store();
        let o = execute("DELETE FROM orders", &db, 1000);
        assert_eq!(o.status, ExecStatus::RuntimeError);
        assert_eq!(execute("SELECT count(*) FROM orders", &db, 1000).rows, Some(vec![vec![Cell::Int(9)]]));
    }

    #[test]
    fn multiple_statements_rejected() {
        let (_d, db) = store();
        assert_eq!(execute("SELECT 1; SELECT 2", &db, 1000).status, ExecStatus::SyntaxError);
        assert_eq!(execute("SELECT 1;  ", &db, 1000).status, ExecStatus::Ok);
    }

    #[test]
    fn timeout_is_enforced() {
        let (_d, db) = store();
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c";
        let o = execute(sql, &db, 200);
        assert_eq!(o.status, ExecStatus::Timeout);
        assert!(o.elapsed_ms <= 200 + 250, "elapsed {}", o.elapsed_ms);
    }

    #[test]
    fn canonical_modes() {
        let one = |v: i64| vec![Cell::Int(v)];
        let set = EquivalenceMode::Set;
        assert_eq!(canonicalize(&[one(1), one(1)], set), canonicalize(&[one(1)], set));
        let a = vec![vec![Cell::Int(1), Cell::Int(2)], vec![Cell::Int(3), Cell::Int(4)]];
        let b = vec![a[1].clone(), a[0].clone()];
        assert_eq!(canonicalize(&a, EquivalenceMode::Bag), canonicalize(&b, EquivalenceMode::Bag));
        assert_ne!(
            canonicalize(&[one(1), one(2)], EquivalenceMode::Ordered),
            canonicalize(&[one(2), one(1)], EquivalenceMode::Ordered)
        );
        assert_ne!(
            canonicalize(&[one(1), one(1)], EquivalenceMode::Bag),
            canonicalize(&[one(1)], EquivalenceMode::Bag)
        );
    }

    #[test]
    fn float_rounding_and_numeric_namespace() {
        let a = ExecutionOutcome::ok(vec![vec![Cell::Real(0.30000001)]]);
        let b = ExecutionOutcome::ok(vec![vec![Cell::Real(0.3)]]);
        assert!(equivalent(&a, &b, EquivalenceMode::Set));
        assert_eq!(Cell::Real(1.0).canonical(), Cell::Int(1).canonical());
        assert_ne!(Cell::Text("1".into()).canonical(), Cell::Int(1).canonical());
        assert_eq!(Cell::Real(-0.0000001).canonical(), "n:0");
    }

    #[test]
    fn failures_equal_nothing() {
        let ok = ExecutionOutcome::ok(vec![vec![Cell::Int(1)]]);
        let t = ExecutionOutcome::failure(ExecStatus::Timeout, "slow");
        assert!(!equivalent(&ok, &t, EquivalenceMode::Set));
        assert!(!equivalent(&t, &t, EquivalenceMode::Set));
        let anomalous = ExecutionOutcome::ok(vec![vec![Cell::Null]]);
        assert!(!equivalent(&anomalous, &anomalous, EquivalenceMode::Set));
        assert!(results_match(&anomalous, &anomalous, EquivalenceMode::Set));
    }

    fn cell() -> impl Strategy<Value = Cell> {
        prop_oneof![
            Just(Cell::Null),
            (-3i64..3).prop_map(Cell::Int),
            (-3i64..3).prop_map(|i| Cell::Real(i as f64 / 2.0)),
            "[ab]{0,2}".prop_map(Cell::Text),
        ]
    }

    fn rows() -> impl Strategy<Value = Vec<Row>> {
        proptest::collection::vec(proptest::collection::vec(cell(), 2), 1..6)
    }

    proptest! {
        #[test]
        fn equivalence_is_an_equivalence(a in rows(), b in rows(), c in rows(),
                                         mode in prop_oneof![Just(EquivalenceMode::Set), Just(EquivalenceMode::Bag), Just(EquivalenceMode::Ordered)]) {
            let (a, b, c) = (ExecutionOutcome::ok(a), ExecutionOutcome::ok(b), ExecutionOutcome::ok(c));
            if a.is_ok() {
                prop_assert!(equivalent(&a, &a, mode));
            }
            prop_assert_eq!(equivalent(&a, &b, mode), equivalent(&b, &a, mode));
            if equivalent(&a, &b, mode) && equivalent(&b, &c, mode) {
                prop_assert!(equivalent(&a, &c, mode));
            }
        }

        #[test]
        fn key_equality_matches_canonical_equality(a in rows(), b in rows()) {
            let ca = canonicalize(&a, EquivalenceMode::Set);
            let cb = canonicalize(&b, EquivalenceMode::Set);
            prop_assert_eq!(ca.key() == cb.key(), ca == cb);
        }

        #[test]
        fn set_mode_ignores_order(mut a in rows(), seed in any::<u64>()) {
            let before = canonicalize(&a, EquivalenceMode::Set);
            let n = a.len();
            a.rotate_left((seed as usize) % n);
            prop_assert_eq!(before, canonicalize(&a, EquivalenceMode::Set));
        }
    }
}
