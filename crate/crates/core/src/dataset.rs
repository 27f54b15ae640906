//! Benchmark items and the databases they run against.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::schema::{introspect, Dialect, SchemaDoc, DEFAULT_SAMPLE_CAP};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItem {
    pub question_id: i64,
    pub db_id: String,
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    pub gold_sql: String,
    /// Hand-annotated gold columns as `table.column`, overriding extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Bird,
    Spider,
}

impl std::str::FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bird" => Ok(Flavor::Bird),
            "spider" => Ok(Flavor::Spider),
            _ => Err(Error::ConfigInvalid(format!("unknown dataset flavor `{s}`"))),
        }
    }
}

#[derive(Deserialize)]
struct BirdRecord {
    question_id: Option<i64>,
    db_id: String,
    question: String,
    #[serde(default)]
    evidence: String,
    #[serde(rename = "SQL")]
    sql: String,
    #[serde(default)]
    gold_columns: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct SpiderRecord {
    db_id: String,
    question: String,
    query: String,
    #[serde(default)]
    gold_columns: Option<Vec<String>>,
}

/// Reads a BIRD- or Spider-format JSON array. BIRD records without a
/// `question_id` (the training split) and all Spider records get their
/// array index as id.
pub fn load_dataset(path: &Path, flavor: Flavor) -> Result<Vec<BenchItem>> {
    let malformed = |reason: String| Error::MalformedDataset {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| malformed(e.to_string()))?;
    parse_dataset(&text, flavor).map_err(malformed)
}

fn parse_dataset(text: &str, flavor: Flavor) -> std::result::Result<Vec<BenchItem>, String> {
    let records: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let bad = |e: serde_json::Error| format!("record {i}: {e}");
            Ok(match flavor {
                Flavor::Bird => {
                    let r: BirdRecord = serde_json::from_value(v).map_err(bad)?;
                    BenchItem {
                        question_id: r.question_id.unwrap_or(i as i64),
                        db_id: r.db_id,
                        question: r.question,
                        evidence: r.evidence,
                        gold_sql: r.sql,
                        gold_columns: r.gold_columns,
                    }
                }
                Flavor::Spider => {
                    let r: SpiderRecord = serde_json::from_value(v).map_err(bad)?;
                    BenchItem {
                        question_id: i as i64,
                        db_id: r.db_id,
                        question: r.question,
                        evidence: String::new(),
                        gold_sql: r.query,
                        gold_columns: r.gold_columns,
                    }
                }
            })
        })
        .collect()
}

/// Resolves `db_id`s to SQLite files (`<root>/<db_id>/<db_id>.sqlite` unless
/// registered explicitly) and caches their introspected schemas.
pub struct DbCatalog {
    root: PathBuf,
    sample_cap: usize,
    explicit: BTreeMap<String, PathBuf>,
    docs: Mutex<BTreeMap<String, Arc<SchemaDoc>>>,
}

impl DbCatalog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            sample_cap: DEFAULT_SAMPLE_CAP,
            explicit: BTreeMap::new(),
            docs: Mutex::new(BTreeMap::new()),
        }
    }

    /// A catalog holding exactly one database, named after its file stem.
    pub fn single(db_file: &Path) -> (Self, String) {
        let id = db_file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "db".into());
        let mut c = Self::new(db_file.parent().unwrap_or(Path::new(".")));
        c.register(id.clone(), db_file);
        (c, id)
    }

    pub fn with_sample_cap(mut self, cap: usize) -> Self {
        self.sample_cap = cap;
        self
    }

    pub fn register(&mut self, db_id: impl Into<String>, path: impl Into<PathBuf>) {
        self.explicit.insert(db_id.into(), path.into());
    }

    pub fn path(&self, db_id: &str) -> PathBuf {
        self.explicit
            .get(db_id)
            .cloned()
            .unwrap_or_else(|| self.root.join(db_id).join(format!("{db_id}.sqlite")))
    }

    pub fn doc(&self, db_id: &str) -> Result<Arc<SchemaDoc>> {
        if let Some(d) = self.docs.lock().unwrap().get(db_id) {
            return Ok(d.clone());
        }
        let mut doc = introspect(&self.path(db_id), Dialect::Sqlite, self.sample_cap)?;
        doc.db_id = db_id.to_string();
        let doc = Arc::new(doc);
        self.docs.lock().unwrap().insert(db_id.to_string(), doc.clone());
        Ok(doc)
    }
}
