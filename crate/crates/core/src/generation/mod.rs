//! Candidate generation: every generator over every schema subset, with one
//! execution-feedback refine per failing candidate.

mod extract;
mod icl;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use extract::extract_sql;
pub use icl::{format_demos, Demo, DemoStore, DEFAULT_SHOTS};

use crate::backend::{BackendRegistry, ChatRequest, Embedder};
use crate::exec::{execute, ExecStatus, ExecutionOutcome, DEFAULT_TIMEOUT_MS};
use crate::schema::{render_schema, SchemaDoc, SchemaSubset};
use crate::templates::Template;
use crate::{Error, Result};

/// Rows shown to the model when asking it to fix a query.
const FEEDBACK_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorBinding {
    pub generator_id: String,
    pub backend_role: String,
    pub prompt_template_id: String,
    /// 1 is the strongest generator.
    pub rank: usize,
}

impl GeneratorBinding {
    pub fn new(id: impl Into<String>, role: impl Into<String>, template: impl Into<String>, rank: usize) -> Self {
        Self {
            generator_id: id.into(),
            backend_role: role.into(),
            prompt_template_id: template.into(),
            rank,
        }
    }
}

/// The five default generators, each on its own backend role.
pub fn default_bindings() -> Vec<GeneratorBinding> {
    [
        ("SQLG_1", "gen_multitask"),
        ("SQLG_2", "gen_complex"),
        ("SQLG_3", "gen_standard"),
        ("SQLG_4", "gen_mixed"),
        ("SQLG_5", "gen_icl"),
    ]
    .iter()
    .enumerate()
    .map(|(i, (id, t))| GeneratorBinding::new(*id, *id, *t, i + 1))
    .collect()
}

/// Ranks must be exactly 1..=n and ids unique.
pub fn validate_bindings(bindings: &[GeneratorBinding]) -> Result<()> {
    if bindings.is_empty() {
        return Err(Error::ConfigInvalid("no generators configured".into()));
    }
    let mut ranks: Vec<usize> = bindings.iter().map(|b| b.rank).collect();
    ranks.sort_unstable();
    if ranks != (1..=bindings.len()).collect::<Vec<_>>() {
        return Err(Error::ConfigInvalid(format!("generator ranks {ranks:?} are not a permutation of 1..={}", bindings.len())));
    }
    let mut ids: Vec<&str> = bindings.iter().map(|b| b.generator_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != bindings.len() {
        return Err(Error::ConfigInvalid("duplicate generator id".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSql {
    /// Empty when the backend failed or nothing could be extracted.
    pub sql: String,
    pub generator_id: String,
    pub generator_rank: usize,
    /// 1-based index of the schema subset.
    pub schema_index: usize,
    pub refined: bool,
    pub outcome: ExecutionOutcome,
}

/// Everything a generator call needs besides the question.
pub struct GenerationContext<'a> {
    pub registry: &'a BackendRegistry,
    pub doc: &'a SchemaDoc,
    pub db_file: &'a Path,
    pub timeout_ms: u64,
    pub temperature: f64,
    /// Replace built-in templates by id.
    pub templates: BTreeMap<String, Template>,
    /// Demonstrations for templates with an `{examples}` slot.
    pub demos: Option<(&'a DemoStore, &'a dyn Embedder)>,
    pub shots: usize,
}

impl<'a> GenerationContext<'a> {
    pub fn new(registry: &'a BackendRegistry, doc: &'a SchemaDoc, db_file: &'a Path) -> Self {
        Self {
            registry,
            doc,
            db_file,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            temperature: 0.0,
            templates: BTreeMap::new(),
            demos: None,
            shots: DEFAULT_SHOTS,
        }
    }

    pub fn template(&self, id: &str) -> Result<Template> {
        self.templates
            .get(id)
            .cloned()
            .or_else(|| Template::builtin(id))
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown template `{id}`")))
    }

    fn examples(&self, question: &str, evidence: &str) -> Result<String> {
        match self.demos {
            Some((store, embedder)) => Ok(format_demos(&store.nearest(question, evidence, self.shots, embedder)?)),
            None => Ok(String::new()),
        }
    }

    /// One backend call; failures become a non-ok outcome with empty SQL.
    fn ask(&self, role: &str, prompt: String) -> (String, Option<ExecutionOutcome>) {
        let response = match self.registry.get(role).and_then(|b| b.chat(&ChatRequest::user(role, prompt, self.temperature))) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("generator {role}: {e}");
                return (String::new(), Some(ExecutionOutcome::failure(ExecStatus::RuntimeError, e.to_string())));
            }
        };
        match extract_sql(&response) {
            Some(sql) => (sql, None),
            None => (
                String::new(),
                Some(ExecutionOutcome::failure(ExecStatus::RuntimeError, Error::ExtractionFailure.to_string())),
            ),
        }
    }

    fn run(&self, role: &str, prompt: String) -> (String, ExecutionOutcome) {
        let (sql, failed) = self.ask(role, prompt);
        let outcome = failed.unwrap_or_else(|| execute(&sql, self.db_file, self.timeout_ms));
        (sql, outcome)
    }
}

/// Generates, executes and (once, if needed) refines a single candidate.
pub fn generate_one(
    ctx: &GenerationContext<'_>,
    binding: &GeneratorBinding,
    question: &str,
    evidence: &str,
    subset: &SchemaSubset,
    schema_index: usize,
) -> Result<CandidateSql> {
    let template = ctx.template(&binding.prompt_template_id)?;
    let refine = ctx.template("refine")?;
    let schema = render_schema(ctx.doc, Some(subset))?;
    let examples = if template.placeholders().contains("examples") {
        ctx.examples(question, evidence)?
    } else {
        String::new()
    };
    let prompt = template.render(&[
        ("schema", &schema),
        ("question", question),
        ("evidence", evidence),
        ("examples", &examples),
    ])?;
    let (sql, outcome) = ctx.run(&binding.backend_role, prompt);
    let mut cand = CandidateSql {
        sql,
        generator_id: binding.generator_id.clone(),
        generator_rank: binding.rank,
        schema_index,
        refined: false,
        outcome,
    };
    if cand.outcome.is_ok() {
        return Ok(cand);
    }

    let feedback = cand.outcome.feedback(FEEDBACK_ROWS);
    let prompt = refine.render(&[
        ("schema", &schema),
        ("question", question),
        ("evidence", evidence),
        ("prev_sql", &cand.sql),
        ("exec_feedback", &feedback),
    ])?;
    let (sql, outcome) = ctx.run(&binding.backend_role, prompt);
    cand.sql = sql;
    cand.outcome = outcome;
    cand.refined = true;
    Ok(cand)
}

/// `subsets.len() * bindings.len()` candidates, schema-major and ordered by
/// generator rank within a schema. Backend and execution failures are kept
/// as non-ok candidates; only configuration errors are returned as `Err`.
pub fn generate_all(
    ctx: &GenerationContext<'_>,
    bindings: &[GeneratorBinding],
    question: &str,
    evidence: &str,
    subsets: &[SchemaSubset],
) -> Result<Vec<CandidateSql>> {
    validate_bindings(bindings)?;
    if subsets.is_empty() {
        return Err(Error::InvalidRequest("no schema subsets".into()));
    }
    let mut ordered: Vec<&GeneratorBinding> = bindings.iter().collect();
    ordered.sort_by_key(|b| b.rank);
    for b in &ordered {
        ctx.registry.get(&b.backend_role)?;
        ctx.template(&b.prompt_template_id)?;
    }
    let mut out = Vec::with_capacity(subsets.len() * ordered.len());
    for (si, subset) in subsets.iter().enumerate() {
        for b in &ordered {
            out.push(generate_one(ctx, b, question, evidence, subset, si + 1)?);
        }
    }
    Ok(out)
}
