//! Benchmark evaluation: execution accuracy, schema-filter metrics and
//! per-generator contribution.

mod gold;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gold::{gold_columns, gold_values};

use crate::dataset::{BenchItem, DbCatalog};
use crate::exec::{execute, results_match, EquivalenceMode, ExecStatus, ExecutionOutcome};
use crate::filter::RetrievedValue;
use crate::pipeline::Pipeline;
use crate::schema::{ColumnRef, SchemaDoc, SchemaSubset};
use crate::selection::{Branch, SelectorFallback};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Wrong,
    /// Prediction did not execute; scored as wrong.
    PredError,
    /// Gold did not execute; the item is left out of the denominator.
    GoldError,
}

/// Compares two executions. Anomalous results (a lone NULL, no columns) still
/// count when both sides agree.
pub fn verdict_of(pred: &ExecutionOutcome, gold: &ExecutionOutcome, mode: EquivalenceMode) -> Verdict {
    if !gold.executed() {
        Verdict::GoldError
    } else if !pred.executed() {
        Verdict::PredError
    } else if results_match(pred, gold, mode) {
        Verdict::Correct
    } else {
        Verdict::Wrong
    }
}

pub fn score_ex(pred: &str, gold: &str, db_file: &Path, mode: EquivalenceMode, timeout_ms: u64) -> Verdict {
    let g = execute(gold, db_file, timeout_ms);
    if !g.executed() {
        return Verdict::GoldError;
    }
    verdict_of(&execute(pred, db_file, timeout_ms), &g, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaMetrics {
    /// 1-based subset index; 0 is the retrieved schema.
    pub subset_index: usize,
    pub columns: usize,
    pub precision: f64,
    pub recall_columns: f64,
    pub recall_values: f64,
}

/// Precision and column recall of each subset against the gold columns, and
/// the share of gold literals both retrieved and kept in the subset. Empty
/// subsets have precision 0; empty gold sets have recall 1.
pub fn schema_metrics(
    subsets: &[SchemaSubset],
    gold_cols: &BTreeSet<ColumnRef>,
    gold_vals: &[(ColumnRef, String)],
    retrieved: &[RetrievedValue],
) -> Vec<SchemaMetrics> {
    subsets
        .iter()
        .map(|s| {
            let hit = s.columns.intersection(gold_cols).count();
            let found = gold_vals
                .iter()
                .filter(|(c, v)| s.contains(c) && retrieved.iter().any(|r| &r.column == c && &r.value_text == v))
                .count();
            SchemaMetrics {
                subset_index: s.iteration_index,
                columns: s.len(),
                precision: if s.is_empty() { 0.0 } else { hit as f64 / s.len() as f64 },
                recall_columns: if gold_cols.is_empty() { 1.0 } else { hit as f64 / gold_cols.len() as f64 },
                recall_values: if gold_vals.is_empty() { 1.0 } else { found as f64 / gold_vals.len() as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub generator_id: String,
    pub schema_index: usize,
    pub status: ExecStatus,
    pub refined: bool,
    /// Result matches gold.
    pub correct: bool,
}

/// One evaluated question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub question_id: i64,
    pub db_id: String,
    pub verdict: Verdict,
    pub pred_sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<SelectorFallback>,
    pub candidates: Vec<CandidateRecord>,
    /// Retrieved schema first, then each selected subset.
    pub schema: Vec<SchemaMetrics>,
    /// Why the pipeline produced nothing for this item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ItemRecord {
    fn failed(item: &BenchItem, verdict: Verdict, error: impl ToString) -> Self {
        Self {
            question_id: item.question_id,
            db_id: item.db_id.clone(),
            verdict,
            pred_sql: String::new(),
            chosen_generator: None,
            branch: None,
            fallback: None,
            candidates: Vec::new(),
            schema: Vec::new(),
            error: Some(error.to_string()),
        }
    }

    /// Candidates did not all agree.
    pub fn contested(&self) -> bool {
        matches!(self.branch, Some(Branch::Majority | Branch::Minority | Branch::Degenerate))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub candidates: usize,
    pub correct: usize,
    /// Share of this generator's candidates that match gold.
    pub avg_ex: f64,
    /// Contested items where this generator's candidate was chosen.
    pub chosen_contested: usize,
    /// Share of contested items won; absent when nothing was contested.
    pub cr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub generators: BTreeMap<String, GeneratorStats>,
    pub contested: usize,
    pub unanimous: usize,
    pub unanimous_share: Option<f64>,
}

/// Per-generator accuracy and contribution over scored items.
pub fn contribution_report(records: &[ItemRecord]) -> ContributionReport {
    let mut r = ContributionReport::default();
    for rec in records.iter().filter(|r| r.verdict != Verdict::GoldError && r.branch.is_some()) {
        for c in &rec.candidates {
            let g = r.generators.entry(c.generator_id.clone()).or_default();
            g.candidates += 1;
            g.correct += usize::from(c.correct);
        }
        if rec.contested() {
            r.contested += 1;
            if let Some(g) = &rec.chosen_generator {
                r.generators.entry(g.clone()).or_default().chosen_contested += 1;
            }
        } else {
            r.unanimous += 1;
        }
    }
    for g in r.generators.values_mut() {
        g.avg_ex = if g.candidates == 0 { 0.0 } else { g.correct as f64 / g.candidates as f64 };
        g.cr = (r.contested > 0).then(|| g.chosen_contested as f64 / r.contested as f64);
    }
    let total = r.contested + r.unanimous;
    r.unanimous_share = (total > 0).then(|| r.unanimous as f64 / total as f64);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub subset_index: usize,
    pub precision: f64,
    pub recall_columns: f64,
    pub recall_values: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: usize,
    /// Items whose gold executed.
    pub scored: usize,
    pub correct: usize,
    pub ex: f64,
    pub gold_errors: usize,
    pub pred_errors: usize,
    /// Items the pipeline could not answer at all.
    pub pipeline_failures: usize,
    pub refine_triggers: usize,
    pub selector_fallbacks: usize,
    pub degenerate: usize,
    /// Mean metrics per subset index over scored items.
    pub schema: Vec<SubsetSummary>,
    pub contribution: ContributionReport,
}

/// Aggregates item records; independent of record order.
pub fn summarize(records: &[ItemRecord]) -> EvalReport {
    let scored: Vec<&ItemRecord> = records.iter().filter(|r| r.verdict != Verdict::GoldError).collect();
    let correct = scored.iter().filter(|r| r.verdict == Verdict::Correct).count();
    let mut sums: BTreeMap<usize, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in &scored {
        for m in &r.schema {
            let e = sums.entry(m.subset_index).or_default();
            e.0 += m.precision;
            e.1 += m.recall_columns;
            e.2 += m.recall_values;
            e.3 += 1;
        }
    }
    EvalReport {
        items: records.len(),
        scored: scored.len(),
        correct,
        ex: if scored.is_empty() { 0.0 } else { correct as f64 / scored.len() as f64 },
        gold_errors: records.len() - scored.len(),
        pred_errors: scored.iter().filter(|r| r.verdict == Verdict::PredError).count(),
        pipeline_failures: scored.iter().filter(|r| r.error.is_some()).count(),
        refine_triggers: scored.iter().map(|r| r.candidates.iter().filter(|c| c.refined).count()).sum(),
        selector_fallbacks: scored.iter().filter(|r| r.fallback.is_some()).count(),
        degenerate: scored.iter().filter(|r| r.branch == Some(Branch::Degenerate)).count(),
        schema: sums
            .into_iter()
            .map(|(i, (p, rc, rv, n))| SubsetSummary {
                subset_index: i,
                precision: p / n as f64,
                recall_columns: rc / n as f64,
                recall_values: rv / n as f64,
            })
            .collect(),
        contribution: contribution_report(records),
    }
}

fn resolve_annotated(doc: &SchemaDoc, cols: &[String]) -> BTreeSet<ColumnRef> {
    cols.iter()
        .filter_map(|c| c.split_once('.'))
        .filter_map(|(t, c)| doc.resolve(t, c))
        .collect()
}

/// Runs the pipeline on one item and scores it.
pub fn evaluate_item(pipeline: &Pipeline, catalog: &DbCatalog, item: &BenchItem) -> ItemRecord {
    let mode = pipeline.config.mode;
    let timeout = pipeline.config.timeout_ms;
    let doc = match catalog.doc(&item.db_id) {
        Ok(d) => d,
        Err(e) => return ItemRecord::failed(item, Verdict::GoldError, e),
    };
    let db_file = catalog.path(&item.db_id);
    let gold = execute(&item.gold_sql, &db_file, timeout);
    if !gold.executed() {
        let e = Error::GoldExecutionFailure {
            question_id: item.question_id,
            reason: gold.feedback(0),
        };
        log::warn!("{e}");
        return ItemRecord::failed(item, Verdict::GoldError, e);
    }
    let t = match pipeline.ask(&doc, &db_file, &item.question, &item.evidence, false) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("question {}: {e}", item.question_id);
            return ItemRecord::failed(item, Verdict::PredError, e);
        }
    };
    let chosen = t.chosen();
    let gold_cols = match &item.gold_columns {
        Some(cols) => resolve_annotated(&doc, cols),
        None => gold_columns(&item.gold_sql, &doc),
    };
    let gold_vals = gold_values(&item.gold_sql, &doc);
    let mut subsets = vec![t.filter.retrieved.clone()];
    subsets.extend(t.filter.subsets.iter().cloned());
    ItemRecord {
        question_id: item.question_id,
        db_id: item.db_id.clone(),
        verdict: verdict_of(&chosen.outcome, &gold, mode),
        pred_sql: chosen.sql.clone(),
        chosen_generator: Some(chosen.generator_id.clone()),
        branch: Some(t.selection.branch),
        fallback: t.selection.fallback,
        candidates: t
            .candidates
            .iter()
            .map(|c| CandidateRecord {
                generator_id: c.generator_id.clone(),
                schema_index: c.schema_index,
                status: c.outcome.status,
                refined: c.refined,
                correct: results_match(&c.outcome, &gold, mode),
            })
            .collect(),
        schema: schema_metrics(&subsets, &gold_cols, &gold_vals, &t.filter.values),
        error: None,
    }
}

/// Evaluates `items` on up to `workers` threads. Records come back in item
/// order whatever the completion order.
pub fn run_eval(pipeline: &Pipeline, catalog: &DbCatalog, items: &[BenchItem], workers: usize) -> Result<(Vec<ItemRecord>, EvalReport)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let records: Vec<ItemRecord> = pool.install(|| items.par_iter().map(|it| evaluate_item(pipeline, catalog, it)).collect());
    let report = summarize(&records);
    Ok((records, report))
}

pub fn write_records(records: &[ItemRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Plain-text summary of a report.
pub fn summary_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "items          {}", r.items);
    let _ = writeln!(s, "scored         {}", r.scored);
    let _ = writeln!(s, "EX             {:.4} ({}/{})", r.ex, r.correct, r.scored);
    let _ = writeln!(s, "gold errors    {}", r.gold_errors);
    let _ = writeln!(s, "pred errors    {}", r.pred_errors);
    let _ = writeln!(s, "refines        {}", r.refine_triggers);
    let _ = writeln!(s, "sel. fallbacks {}", r.selector_fallbacks);
    if !r.schema.is_empty() {
        let _ = writeln!(s, "\nsubset      P     R_c     R_v");
        for m in &r.schema {
            let name = if m.subset_index == 0 { "retrieved".to_string() } else { format!("S_{}", m.subset_index) };
            let _ = writeln!(s, "{name:<9} {:.3}  {:.3}  {:.3}", m.precision, m.recall_columns, m.recall_values);
        }
    }
    let c = &r.contribution;
    if !c.generators.is_empty() {
        let _ = writeln!(s, "\ngenerator   Avg.EX   CR");
        for (g, st) in &c.generators {
            let cr = st.cr.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(s, "{g:<10} {:.3}   {cr}", st.avg_ex);
        }
        if let Some(u) = c.unanimous_share {
            let _ = writeln!(s, "unanimous share {u:.3}");
        }
    }
    s
}
