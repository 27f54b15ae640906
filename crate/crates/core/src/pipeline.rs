//! End-to-end question answering: schema filter, generation, selection.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendRegistry, Embedder, SCHEMA_ROLE, SELECTOR_ROLE};
use crate::config::PipelineConfig;
use crate::dataset::load_dataset;
use crate::exec::{execute, ExecutionOutcome};
use crate::filter::lsh::CharNgramTokenizer;
use crate::filter::{
    build_retrieved_schema, extract_keywords, retrieve_values, score_columns, select_columns, top_columns_per_keyword,
    SchemaFilterReport, ValueRetriever,
};
use crate::generation::{generate_all, CandidateSql, Demo, DemoStore, GenerationContext, GeneratorBinding};
use crate::schema::SchemaDoc;
use crate::selection::{SelectionReport, Selector, SelectorPolicy};
use crate::templates::Template;
use crate::Result;

/// Record of one answered question. Serializes deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub db_id: String,
    pub question: String,
    pub evidence: String,
    pub filter: SchemaFilterReport,
    pub candidates: Vec<CandidateSql>,
    pub selection: SelectionReport,
    pub chosen_sql: String,
    pub chosen_generator: String,
    /// Execution of the chosen SQL, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ExecutionOutcome>,
}

impl Transcript {
    pub fn chosen(&self) -> &CandidateSql {
        &self.candidates[self.selection.chosen]
    }

    pub fn refine_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.refined).count()
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    registry: BackendRegistry,
    embedder: Arc<dyn Embedder>,
    tokenizer: CharNgramTokenizer,
    bindings: Vec<GeneratorBinding>,
    templates: BTreeMap<String, Template>,
    demos: Option<DemoStore>,
}

impl Pipeline {
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let registry = config.build_registry()?;
        let embedder = config.build_embedder();
        Self::with_parts(config, registry, embedder)
    }

    /// Uses the given backends instead of the ones named in `config`.
    pub fn with_parts(config: PipelineConfig, registry: BackendRegistry, embedder: Arc<dyn Embedder>) -> Result<Self> {
        let templates = config.load_templates()?;
        let demos = match &config.icl {
            Some(icl) => {
                let items = load_dataset(&config.resolve(&icl.demos), icl.flavor)?;
                let demos = items
                    .into_iter()
                    .map(|i| Demo {
                        question: i.question,
                        evidence: i.evidence,
                        sql: i.gold_sql,
                    })
                    .collect();
                Some(DemoStore::new(demos, embedder.as_ref())?)
            }
            None => None,
        };
        Ok(Self {
            bindings: config.bindings(),
            config,
            registry,
            embedder,
            tokenizer: CharNgramTokenizer::default(),
            templates,
            demos,
        })
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    pub fn bindings(&self) -> &[GeneratorBinding] {
        &self.bindings
    }

    /// Keywords, retrieval and `p_s` rounds of column selection.
    pub fn link(&self, doc: &SchemaDoc, db_file: &Path, question: &str, evidence: &str) -> Result<SchemaFilterReport> {
        let cfg = &self.config;
        let schema_llm = self.registry.get(SCHEMA_ROLE)?;
        let keywords = extract_keywords(schema_llm.as_ref(), SCHEMA_ROLE, cfg.temperature, question, evidence)?;
        let scored = score_columns(&keywords, doc, self.embedder.as_ref())?;
        let retriever = ValueRetriever::new(cfg.retrieval.values.clone(), &self.tokenizer, self.embedder.as_ref());
        let values = retrieve_values(&keywords, db_file, doc, &retriever)?;
        let retrieved = build_retrieved_schema(&scored, &values, doc, cfg.retrieval.top_k_columns);
        let (subsets, rounds) = select_columns(
            doc,
            &retrieved,
            question,
            evidence,
            cfg.p_s,
            schema_llm.as_ref(),
            SCHEMA_ROLE,
            cfg.temperature,
        )?;
        let top_columns = top_columns_per_keyword(&scored, cfg.retrieval.top_k_columns).into_iter().cloned().collect();
        Ok(SchemaFilterReport {
            keywords,
            top_columns,
            values,
            retrieved,
            rounds,
            subsets,
        })
    }

    pub fn generate(&self, doc: &SchemaDoc, db_file: &Path, question: &str, evidence: &str) -> Result<(SchemaFilterReport, Vec<CandidateSql>)> {
        let filter = self.link(doc, db_file, question, evidence)?;
        let candidates = self.generate_for(doc, db_file, question, evidence, &filter)?;
        Ok((filter, candidates))
    }

    pub fn generate_for(
        &self,
        doc: &SchemaDoc,
        db_file: &Path,
        question: &str,
        evidence: &str,
        filter: &SchemaFilterReport,
    ) -> Result<Vec<CandidateSql>> {
        let mut ctx = GenerationContext::new(&self.registry, doc, db_file);
        ctx.timeout_ms = self.config.timeout_ms;
        ctx.temperature = self.config.temperature;
        ctx.templates = self.templates.clone();
        if let Some(icl) = &self.config.icl {
            ctx.shots = icl.shots;
        }
        ctx.demos = self.demos.as_ref().map(|d| (d, self.embedder.as_ref()));
        generate_all(&ctx, &self.bindings, question, evidence, &filter.subsets)
    }

    /// Answers a question; with `run` the chosen SQL is executed as well.
    pub fn ask(&self, doc: &SchemaDoc, db_file: &Path, question: &str, evidence: &str, run: bool) -> Result<Transcript> {
        let (filter, candidates) = self.generate(doc, db_file, question, evidence)?;
        let selector_llm = match self.config.selector {
            SelectorPolicy::Model => Some(self.registry.get(SELECTOR_ROLE)?),
            SelectorPolicy::Majority => None,
        };
        let mut selector = match &selector_llm {
            Some(b) => Selector::model(b.as_ref()),
            None => Selector::majority(),
        };
        selector.mode = self.config.mode;
        selector.temperature = self.config.temperature;
        if let Some(t) = self.templates.get("select") {
            selector.template = t.clone();
        }
        let selection = selector.select(&candidates, doc, &filter.subsets, question, evidence)?;
        let chosen = &candidates[selection.chosen];
        let result = run.then(|| execute(&chosen.sql, db_file, self.config.timeout_ms));
        Ok(Transcript {
            db_id: doc.db_id.clone(),
            question: question.to_string(),
            evidence: evidence.to_string(),
            chosen_sql: chosen.sql.clone(),
            chosen_generator: chosen.generator_id.clone(),
            filter,
            candidates,
            selection,
            result,
        })
    }
}
