//! Training-data synthesis: multi-task samples, selection samples with
//! balanced candidate order, and style reformulations of gold SQL.

mod mutate;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use mutate::{mutate_sql, Mutation, MutationKind};

use crate::backend::{ChatBackend, ChatRequest};
use crate::dataset::{BenchItem, DbCatalog};
use crate::exec::{equivalent, execute, results_match, EquivalenceMode, ExecutionOutcome};
use crate::generation::{extract_sql, CandidateSql};
use crate::schema::{render_schema, SchemaDoc, SchemaSubset};
use crate::selection::{cluster_candidates, deformalize, format_candidates, schema_union, shortest};
use crate::templates::Template;
use crate::{Error, Result};

/// Distractor evidence strings shown next to the gold one.
pub const EVIDENCE_DISTRACTORS: usize = 3;
/// Mutation attempts before a self-refine sample is given up.
pub const MAX_MUTATION_ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Text2sql,
    QuestionInference,
    EvidenceInference,
    SelfRefine,
    Selection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub question_id: i64,
    pub db_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationKind>,
    /// Generator of each listed candidate, in prompt order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_order: Option<Vec<String>>,
    /// 1-based position of the correct candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reformat: Option<ReformatStyle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub task: Task,
    pub prompt: String,
    pub target: String,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub question_id: i64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub samples: Vec<TrainingSample>,
    pub skipped: Vec<Skipped>,
    /// Reformulations rejected for changing the result.
    pub rejected: usize,
}

impl SynthOutput {
    fn skip(&mut self, question_id: i64, reason: impl ToString) {
        let reason = reason.to_string();
        log::info!("question {question_id} skipped: {reason}");
        self.skipped.push(Skipped { question_id, reason });
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Relative weights of the four multi-task sample kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskMix {
    pub text2sql: f64,
    pub question_inference: f64,
    pub evidence_inference: f64,
    pub self_refine: f64,
}

impl Default for TaskMix {
    fn default() -> Self {
        Self {
            text2sql: 0.4,
            question_inference: 0.2,
            evidence_inference: 0.2,
            self_refine: 0.2,
        }
    }
}

impl TaskMix {
    fn weights(&self) -> [(Task, f64); 4] {
        [
            (Task::Text2sql, self.text2sql),
            (Task::QuestionInference, self.question_inference),
            (Task::EvidenceInference, self.evidence_inference),
            (Task::SelfRefine, self.self_refine),
        ]
    }
}

/// Splits `n` by `weights` with the largest-remainder method; earlier
/// entries win remainder ties. Counts sum to `n`.
pub fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if total <= 0.0 || n == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w.max(0.0) / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

struct Prepared<'a> {
    item: &'a BenchItem,
    doc: std::sync::Arc<SchemaDoc>,
    db_file: std::path::PathBuf,
    gold: ExecutionOutcome,
}

fn prepare<'a>(items: &'a [BenchItem], catalog: &DbCatalog, timeout_ms: u64, out: &mut SynthOutput) -> Result<Vec<Prepared<'a>>> {
    let mut ready = Vec::new();
    for item in items {
        let doc = catalog.doc(&item.db_id)?;
        let db_file = catalog.path(&item.db_id);
        let gold = execute(&item.gold_sql, &db_file, timeout_ms);
        if !gold.is_ok() {
            let e = Error::GoldExecutionFailure {
                question_id: item.question_id,
                reason: gold.feedback(0),
            };
            out.skip(item.question_id, e);
            continue;
        }
        ready.push(Prepared { item, doc, db_file, gold });
    }
    Ok(ready)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSettings {
    pub seed: u64,
    pub mode: EquivalenceMode,
    pub timeout_ms: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: EquivalenceMode::default(),
            timeout_ms: crate::exec::DEFAULT_TIMEOUT_MS,
        }
    }
}

/// One sample per usable item, tasks assigned in `mix` proportions.
///
/// Items without evidence never get the evidence task when another item can
/// take it instead. Self-refine samples whose mutation cannot be made to
/// change the result within five attempts are skipped.
pub fn synth_multitask(items: &[BenchItem], catalog: &DbCatalog, mix: TaskMix, settings: SynthSettings) -> Result<SynthOutput> {
    let mut out = SynthOutput::default();
    let ready = prepare(items, catalog, settings.timeout_ms, &mut out)?;
    let weights = mix.weights();
    let counts = allocate(ready.len(), &weights.map(|w| w.1));
    let mut labels: Vec<Task> = weights.iter().zip(&counts).flat_map(|((t, _), c)| std::iter::repeat_n(*t, *c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    labels.shuffle(&mut rng);
    for i in 0..labels.len() {
        if labels[i] == Task::EvidenceInference && ready[i].item.evidence.is_empty() {
            if let Some(j) = (0..labels.len()).find(|&j| labels[j] != Task::EvidenceInference && !ready[j].item.evidence.is_empty()) {
                labels.swap(i, j);
            }
        }
    }

    let evidence_pool: Vec<&str> = {
        let mut seen = BTreeSet::new();
        ready
            .iter()
            .map(|p| p.item.evidence.as_str())
            .filter(|e| !e.is_empty() && seen.insert(*e))
            .collect()
    };
    let gen = Template::builtin("gen_multitask").unwrap();
    let refine = Template::builtin("refine").unwrap();
    let task_q = Template::builtin("task_question").unwrap();
    let task_e = Template::builtin("task_evidence").unwrap();

    for (p, label) in ready.iter().zip(labels) {
        let it = p.item;
        let schema = render_schema(&p.doc, None)?;
        let meta = SampleMeta {
            question_id: it.question_id,
            db_id: it.db_id.clone(),
            ..SampleMeta::default()
        };
        let base = [("schema", schema.as_str()), ("question", it.question.as_str()), ("evidence", it.evidence.as_str()), ("sql", it.gold_sql.as_str())];
        let sample = match label {
            Task::EvidenceInference if !it.evidence.is_empty() => {
                let mut options: Vec<&str> = evidence_pool.iter().copied().filter(|e| *e != it.evidence).collect();
                options.shuffle(&mut rng);
                options.truncate(EVIDENCE_DISTRACTORS);
                options.push(&it.evidence);
                options.shuffle(&mut rng);
                let list = options.iter().enumerate().map(|(i, e)| format!("{}. {e}", i + 1)).collect::<Vec<_>>().join("\n");
                let mut vars = base.to_vec();
                vars.push(("options", &list));
                TrainingSample {
                    task: Task::EvidenceInference,
                    prompt: task_e.render(&vars)?,
                    target: it.evidence.clone(),
                    meta,
                }
            }
            Task::QuestionInference => TrainingSample {
                task: Task::QuestionInference,
                prompt: task_q.render(&base)?,
                target: it.question.clone(),
                meta,
            },
            Task::SelfRefine => {
                let found = (0..MAX_MUTATION_ATTEMPTS).find_map(|a| {
                    let m = mutate_sql(&it.gold_sql, mix_seed(settings.seed, it.question_id, a), Some(&p.doc)).ok()?;
                    if deformalize(&m.sql) == deformalize(&it.gold_sql) {
                        return None;
                    }
                    let o = execute(&m.sql, &p.db_file, settings.timeout_ms);
                    (!results_match(&o, &p.gold, settings.mode)).then_some((m, o))
                });
                let Some((m, o)) = found else {
                    out.skip(it.question_id, "no result-changing mutation");
                    continue;
                };
                let feedback = o.feedback(5);
                let mut vars = base.to_vec();
                vars.push(("prev_sql", &m.sql));
                vars.push(("exec_feedback", &feedback));
                TrainingSample {
                    task: Task::SelfRefine,
                    prompt: refine.render(&vars)?,
                    target: it.gold_sql.clone(),
                    meta: SampleMeta {
                        mutation: Some(m.kind),
                        ..meta
                    },
                }
            }
            // Evidence-free items that could not swap their label fall back here.
            _ => TrainingSample {
                task: Task::Text2sql,
                prompt: gen.render(&base)?,
                target: it.gold_sql.clone(),
                meta,
            },
        };
        out.samples.push(sample);
    }
    Ok(out)
}

fn mix_seed(seed: u64, question_id: i64, attempt: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [question_id as u64, attempt] {
        h = (h ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancePolicy {
    /// Largest relative deviation from uniform that counts as balanced.
    pub tolerance: f64,
    /// Upper bound on candidates per prompt.
    pub max_options: usize,
}

impl Default for BalancePolicy {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            max_options: 5,
        }
    }
}

/// Candidates and the schema subsets they were generated from.
pub struct CandidateBatch {
    pub candidates: Vec<CandidateSql>,
    pub subsets: Vec<SchemaSubset>,
}

/// Produces candidates for one item; the pipeline or a test stub.
pub type CandidateSource<'a> = dyn Fn(&BenchItem, &SchemaDoc, &Path) -> Result<CandidateBatch> + 'a;

#[derive(Default)]
struct Usage {
    /// option count -> per-position use
    positions: BTreeMap<usize, Vec<usize>>,
    /// incorrect-option count -> use
    combos: BTreeMap<usize, usize>,
    generators: BTreeMap<String, usize>,
}

/// Picks uniformly among the values of `options` with the smallest `count`.
fn least_used<T: Clone>(options: &[T], count: impl Fn(&T) -> usize, rng: &mut ChaCha8Rng) -> Option<T> {
    let min = options.iter().map(&count).min()?;
    let best: Vec<&T> = options.iter().filter(|o| count(o) == min).collect();
    Some(best[rng.gen_range(0..best.len())].clone())
}

/// Selection samples: each prompt lists one deformalized representative per
/// distinct result, exactly one of them correct.
///
/// Balance is enforced greedily with seeded tie-breaks: the number of
/// incorrect options, the generator of the correct representative, and the
/// correct position (within each option count) are each the least-used
/// feasible choice so far. Items where every candidate agrees carry no
/// contrast and are skipped, as are items with no correct candidate.
pub fn synth_selection(
    items: &[BenchItem],
    catalog: &DbCatalog,
    source: &CandidateSource<'_>,
    policy: BalancePolicy,
    settings: SynthSettings,
) -> Result<SynthOutput> {
    let mut out = SynthOutput::default();
    let ready = prepare(items, catalog, settings.timeout_ms, &mut out)?;
    let template = Template::builtin("select").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut usage = Usage::default();

    for p in &ready {
        let it = p.item;
        let batch = match source(it, &p.doc, &p.db_file) {
            Ok(b) => b,
            Err(e) => {
                out.skip(it.question_id, e);
                continue;
            }
        };
        let l = &batch.candidates;
        let set = cluster_candidates(l, settings.mode);
        let correct = set
            .clusters
            .iter()
            .position(|c| equivalent(&l[c.members[0]].outcome, &p.gold, settings.mode));
        let Some(ci) = correct else {
            out.skip(it.question_id, Error::NoCorrectCandidate(it.question_id));
            continue;
        };
        let wrong: Vec<usize> = set
            .clusters
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ci)
            .map(|(_, c)| shortest(l, c.members.iter().copied()).unwrap())
            .collect();
        if wrong.is_empty() {
            out.skip(it.question_id, "all candidates agree");
            continue;
        }

        let members = &set.clusters[ci].members;
        let gens: Vec<String> = members.iter().map(|&i| l[i].generator_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let g = least_used(&gens, |g| usage.generators.get(g).copied().unwrap_or(0), &mut rng).unwrap();
        let right = shortest(l, members.iter().copied().filter(|&i| l[i].generator_id == g)).unwrap();

        let ks: Vec<usize> = (1..=wrong.len().min(policy.max_options.saturating_sub(1).max(1))).collect();
        let k = least_used(&ks, |k| usage.combos.get(k).copied().unwrap_or(0), &mut rng).unwrap();
        let n = k + 1;
        let pos_counts = usage.positions.entry(n).or_insert_with(|| vec![0; n]);
        let slots: Vec<usize> = (0..n).collect();
        let pos = least_used(&slots, |s| pos_counts[*s], &mut rng).unwrap();

        let mut listed: Vec<usize> = wrong.choose_multiple(&mut rng, k).copied().collect();
        listed.shuffle(&mut rng);
        listed.insert(pos, right);

        pos_counts[pos] += 1;
        *usage.combos.entry(k).or_default() += 1;
        *usage.generators.entry(g).or_default() += 1;

        let union = schema_union(&p.doc, &batch.subsets);
        let schema = render_schema(&p.doc, if union.is_empty() { None } else { Some(&union) })?;
        let list = format_candidates(listed.iter().map(|&i| l[i].sql.as_str()));
        out.samples.push(TrainingSample {
            task: Task::Selection,
            prompt: template.render(&[("schema", &schema), ("question", &it.question), ("evidence", &it.evidence), ("candidates", &list)])?,
            target: (pos + 1).to_string(),
            meta: SampleMeta {
                question_id: it.question_id,
                db_id: it.db_id.clone(),
                candidate_order: Some(listed.iter().map(|&i| l[i].generator_id.clone()).collect()),
                correct_index: Some(pos + 1),
                ..SampleMeta::default()
            },
        });
    }
    Ok(out)
}

/// How evenly selection samples spread over positions, option counts and
/// generators. Deviations are `max |count - mean| / mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub samples: usize,
    /// option count -> how often each position held the correct candidate
    pub positions: BTreeMap<usize, Vec<usize>>,
    /// incorrect-option count -> samples
    pub combinations: BTreeMap<usize, usize>,
    /// generator of the correct candidate -> samples
    pub generators: BTreeMap<String, usize>,
    pub position_deviation: f64,
    pub combination_deviation: f64,
    pub generator_deviation: f64,
}

impl BalanceReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.position_deviation <= tolerance && self.combination_deviation <= tolerance && self.generator_deviation <= tolerance
    }
}

fn deviation(counts: impl IntoIterator<Item = usize>) -> f64 {
    let c: Vec<f64> = counts.into_iter().map(|x| x as f64).collect();
    if c.is_empty() {
        return 0.0;
    }
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    c.iter().map(|x| (x - mean).abs() / mean).fold(0.0, f64::max)
}

/// Balance metrics recomputed from the emitted sample metadata.
pub fn balance_report(samples: &[TrainingSample]) -> BalanceReport {
    let mut positions: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut combinations = BTreeMap::new();
    let mut generators = BTreeMap::new();
    let mut n = 0;
    for s in samples.iter().filter(|s| s.task == Task::Selection) {
        let (Some(order), Some(ci)) = (&s.meta.candidate_order, s.meta.correct_index) else { continue };
        n += 1;
        positions.entry(order.len()).or_insert_with(|| vec![0; order.len()])[ci - 1] += 1;
        *combinations.entry(order.len() - 1).or_insert(0) += 1;
        *generators.entry(order[ci - 1].clone()).or_insert(0) += 1;
    }
    BalanceReport {
        samples: n,
        position_deviation: positions.values().map(|v| deviation(v.iter().copied())).fold(0.0, f64::max),
        combination_deviation: deviation(combinations.values().copied()),
        generator_deviation: deviation(generators.values().copied()),
        positions,
        combinations,
        generators,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReformatStyle {
    ComplexPattern,
    Standardized,
}

impl ReformatStyle {
    fn template_id(self) -> &'static str {
        match self {
            ReformatStyle::ComplexPattern => "reformat_complex",
            ReformatStyle::Standardized => "reformat_standard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reformatted {
    pub sql: String,
    /// False when the rewrite changed the result and `sql` is the original.
    pub accepted: bool,
}

/// Asks `backend` to rewrite `gold` in `style`; the rewrite is kept only
/// if it executes to the same result as `gold`.
#[allow(clippy::too_many_arguments)]
pub fn reformat_sql(
    gold: &str,
    style: ReformatStyle,
    backend: &dyn ChatBackend,
    role: &str,
    doc: &SchemaDoc,
    db_file: &Path,
    settings: SynthSettings,
) -> Result<Reformatted> {
    let t = Template::builtin(style.template_id()).unwrap();
    let prompt = t.render(&[("schema", &render_schema(doc, None)?), ("sql", gold)])?;
    let resp = backend.chat(&ChatRequest::user(role, prompt, 0.0))?;
    let keep = || Reformatted {
        sql: gold.to_string(),
        accepted: false,
    };
    let Some(sql) = extract_sql(&resp) else { return Ok(keep()) };
    let a = execute(&sql, db_file, settings.timeout_ms);
    let b = execute(gold, db_file, settings.timeout_ms);
    if equivalent(&a, &b, settings.mode) {
        Ok(Reformatted { sql, accepted: true })
    } else {
        log::info!("rewrite rejected: {}", a.feedback(0));
        Ok(keep())
    }
}

/// Text-to-SQL samples whose targets are accepted rewrites of gold.
/// Rejected rewrites are counted and their items skipped.
pub fn synth_reformat(
    items: &[BenchItem],
    catalog: &DbCatalog,
    style: ReformatStyle,
    backend: &dyn ChatBackend,
    role: &str,
    settings: SynthSettings,
) -> Result<SynthOutput> {
    let mut out = SynthOutput::default();
    let ready = prepare(items, catalog, settings.timeout_ms, &mut out)?;
    let gen = Template::builtin("gen_multitask").unwrap();
    for p in &ready {
        let it = p.item;
        let r = match reformat_sql(&it.gold_sql, style, backend, role, &p.doc, &p.db_file, settings) {
            Ok(r) => r,
            Err(e) => {
                out.skip(it.question_id, e);
                continue;
            }
        };
        if !r.accepted {
            out.rejected += 1;
            out.skip(it.question_id, "rewrite changed the result");
            continue;
        }
        let schema = render_schema(&p.doc, None)?;
        out.samples.push(TrainingSample {
            task: Task::Text2sql,
            prompt: gen.render(&[("schema", &schema), ("question", &it.question), ("evidence", &it.evidence)])?,
            target: r.sql,
            meta: SampleMeta {
                question_id: it.question_id,
                db_id: it.db_id.clone(),
                reformat: Some(style),
                ..SampleMeta::default()
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
