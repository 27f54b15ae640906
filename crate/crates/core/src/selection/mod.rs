//! Picking one SQL out of the candidate list: cluster by execution result,
//! reorder, then either take the consensus or ask a selector model.

mod deformalize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use deformalize::{deformalize, sql_length};

use crate::backend::{ChatBackend, ChatRequest};
use crate::exec::{EquivalenceMode, ResultKey};
use crate::generation::{extract_sql, CandidateSql};
use crate::schema::{render_schema, SchemaDoc, SchemaSubset};
use crate::templates::Template;
use crate::{Error, Result};

/// Candidates with the same canonical result. `members` index into the
/// candidate list and are in intra-group order once reorganized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub key: ResultKey,
    pub members: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub total_candidates: usize,
}

impl ClusterSet {
    /// Candidates that made it into a cluster.
    pub fn clustered(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Groups the status-ok candidates by canonical result. Clusters appear in
/// order of their first member; members keep input order.
pub fn cluster_candidates(candidates: &[CandidateSql], mode: EquivalenceMode) -> ClusterSet {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut by_key: BTreeMap<ResultKey, usize> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        if !c.outcome.is_ok() {
            continue;
        }
        let Some(canon) = c.outcome.canonical(mode) else { continue };
        let key = canon.key();
        match by_key.get(&key) {
            Some(&ci) => clusters[ci].members.push(i),
            None => {
                by_key.insert(key, clusters.len());
                clusters.push(Cluster { key, members: vec![i] });
            }
        }
    }
    ClusterSet {
        clusters,
        total_candidates: candidates.len(),
    }
}

/// Index of the shortest deformalized SQL; ties by text, then index.
/// Candidates with empty SQL lose to any non-empty one.
pub fn shortest(candidates: &[CandidateSql], indices: impl IntoIterator<Item = usize>) -> Option<usize> {
    indices
        .into_iter()
        .map(|i| {
            let d = deformalize(&candidates[i].sql);
            (d.is_empty(), sql_length(&d), d, i)
        })
        .min()
        .map(|t| t.3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// No candidate executed cleanly.
    Degenerate,
    /// Every ok candidate agrees.
    SingleCluster,
    /// The largest cluster holds at least half of the ok candidates.
    Majority,
    Minority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reorganized {
    pub branch: Branch,
    /// Clusters in emission order, members in intra-group order.
    pub clusters: Vec<Cluster>,
    /// Candidate indices offered to the selector.
    pub order: Vec<usize>,
}

/// Sorts clusters (size descending, then best generator rank, then shortest
/// SQL) and their members (generator rank, schema index, input order), then
/// emits every member when the largest cluster is a majority of the ok
/// candidates, otherwise the shortest member of each cluster.
pub fn reorganize(set: &ClusterSet, candidates: &[CandidateSql]) -> Result<Reorganized> {
    if set.is_empty() {
        return Err(Error::EmptyClusterSet);
    }
    let mut clusters = set.clusters.clone();
    for c in &mut clusters {
        c.members.sort_by_key(|&i| (candidates[i].generator_rank, candidates[i].schema_index, i));
    }
    let cluster_key = |c: &Cluster| {
        let best_rank = c.members.iter().map(|&i| candidates[i].generator_rank).min().unwrap_or(usize::MAX);
        let short = shortest(candidates, c.members.iter().copied()).unwrap();
        let d = deformalize(&candidates[short].sql);
        (std::cmp::Reverse(c.len()), best_rank, sql_length(&d), d, c.members[0])
    };
    let mut keyed: Vec<_> = clusters.into_iter().map(|c| (cluster_key(&c), c)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let clusters: Vec<Cluster> = keyed.into_iter().map(|(_, c)| c).collect();

    let total = set.clustered();
    let majority = clusters[0].len() >= total.div_ceil(2);
    let order = if majority {
        clusters.iter().flat_map(|c| c.members.iter().copied()).collect()
    } else {
        clusters
            .iter()
            .map(|c| shortest(candidates, c.members.iter().copied()).unwrap())
            .collect()
    };
    Ok(Reorganized {
        branch: if majority { Branch::Majority } else { Branch::Minority },
        clusters,
        order,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorPolicy {
    Model,
    #[default]
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorFallback {
    /// The answer named neither an index nor a listed query.
    Unparseable,
    /// The selector call failed; the majority choice was used.
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub branch: Branch,
    pub clusters: Vec<Cluster>,
    /// Candidate indices in the order shown to the selector.
    pub emitted: Vec<usize>,
    /// Index of the chosen candidate.
    pub chosen: usize,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<SelectorFallback>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector_response: Option<String>,
}

/// Selector settings. `backend` is only consulted under the model policy.
pub struct Selector<'a> {
    pub policy: SelectorPolicy,
    pub backend: Option<&'a dyn ChatBackend>,
    pub role: String,
    pub temperature: f64,
    pub template: Template,
    pub mode: EquivalenceMode,
}

impl<'a> Selector<'a> {
    pub fn majority() -> Self {
        Self {
            policy: SelectorPolicy::Majority,
            backend: None,
            role: crate::backend::SELECTOR_ROLE.into(),
            temperature: 0.0,
            template: Template::builtin("select").expect("builtin template"),
            mode: EquivalenceMode::default(),
        }
    }

    pub fn model(backend: &'a dyn ChatBackend) -> Self {
        Self {
            policy: SelectorPolicy::Model,
            backend: Some(backend),
            ..Self::majority()
        }
    }

    /// Chooses the final candidate.
    pub fn select(
        &self,
        candidates: &[CandidateSql],
        doc: &SchemaDoc,
        subsets: &[SchemaSubset],
        question: &str,
        evidence: &str,
    ) -> Result<SelectionReport> {
        if candidates.is_empty() {
            return Err(Error::InvalidRequest("no candidates to select from".into()));
        }
        let set = cluster_candidates(candidates, self.mode);
        if set.is_empty() {
            let chosen = shortest(candidates, 0..candidates.len()).unwrap();
            return Ok(SelectionReport {
                branch: Branch::Degenerate,
                clusters: Vec::new(),
                emitted: Vec::new(),
                chosen,
                degenerate: true,
                fallback: None,
                selector_response: None,
            });
        }
        if set.clusters.len() == 1 {
            let c = &set.clusters[0];
            let chosen = shortest(candidates, c.members.iter().copied()).unwrap();
            return Ok(SelectionReport {
                branch: Branch::SingleCluster,
                clusters: set.clusters,
                emitted: vec![chosen],
                chosen,
                degenerate: false,
                fallback: None,
                selector_response: None,
            });
        }

        let re = reorganize(&set, candidates)?;
        let mut report = SelectionReport {
            branch: re.branch,
            clusters: re.clusters,
            emitted: re.order,
            chosen: 0,
            degenerate: false,
            fallback: None,
            selector_response: None,
        };
        report.chosen = report.emitted[0];
        let backend = match (self.policy, self.backend) {
            (SelectorPolicy::Model, Some(b)) => b,
            (SelectorPolicy::Model, None) => return Err(Error::UnboundRole(self.role.clone())),
            (SelectorPolicy::Majority, _) => return Ok(report),
        };

        let prompt = self.prompt(candidates, &report.emitted, doc, subsets, question, evidence)?;
        match backend.chat(&ChatRequest::user(&self.role, prompt, self.temperature)) {
            Ok(resp) => {
                match parse_choice(&resp, candidates, &report.emitted) {
                    Some(i) => report.chosen = i,
                    None => report.fallback = Some(SelectorFallback::Unparseable),
                }
                report.selector_response = Some(resp);
            }
            Err(e) => {
                log::warn!("selector failed, using majority choice: {e}");
                report.fallback = Some(SelectorFallback::BackendFailure);
            }
        }
        Ok(report)
    }

    fn prompt(
        &self,
        candidates: &[CandidateSql],
        emitted: &[usize],
        doc: &SchemaDoc,
        subsets: &[SchemaSubset],
        question: &str,
        evidence: &str,
    ) -> Result<String> {
        let union = schema_union(doc, subsets);
        let schema = render_schema(doc, Some(&union))?;
        let list = format_candidates(emitted.iter().map(|&i| candidates[i].sql.as_str()));
        self.template.render(&[
            ("schema", &schema),
            ("question", question),
            ("evidence", evidence),
            ("candidates", &list),
        ])
    }
}

/// Union of the subsets' columns.
pub fn schema_union(doc: &SchemaDoc, subsets: &[SchemaSubset]) -> SchemaSubset {
    let cols = subsets.iter().flat_map(|s| s.columns.iter().cloned()).collect();
    SchemaSubset::new(doc, cols, 0)
}

/// Numbered, deformalized candidate list as shown to the selector.
pub fn format_candidates<'s>(sqls: impl IntoIterator<Item = &'s str>) -> String {
    sqls.into_iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, deformalize(s)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads a 1-based index, or else a query that matches one of the emitted
/// candidates after deformalization.
pub fn parse_choice(response: &str, candidates: &[CandidateSql], emitted: &[usize]) -> Option<usize> {
    let trimmed = response.trim();
    let lead: String = trimmed
        .trim_start_matches(|c: char| !c.is_ascii_digit() && !c.is_alphabetic())
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let number = if !lead.is_empty() {
        Some(lead)
    } else {
        // "Candidate 2", "The best is #3."
        let words: Vec<&str> = trimmed.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect();
        let looks_like_sql = words.first().is_some_and(|w| w.eq_ignore_ascii_case("select") || w.eq_ignore_ascii_case("with"));
        if looks_like_sql || trimmed.contains("```") {
            None
        } else {
            words.iter().find(|w| w.chars().all(|c| c.is_ascii_digit())).map(|w| w.to_string())
        }
    };
    if let Some(n) = number.and_then(|n| n.parse::<usize>().ok()) {
        if (1..=emitted.len()).contains(&n) {
            return Some(emitted[n - 1]);
        }
    }
    let sql = deformalize(&extract_sql(response)?);
    emitted.iter().copied().find(|&i| deformalize(&candidates[i].sql) == sql)
}
