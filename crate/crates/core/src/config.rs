//! Pipeline configuration, read from a TOML file.
//!
//! Relative paths inside the file are resolved against the file's directory.
//!
//! ```toml
//! p_s = 2
//! seed = 0
//! selector = "model"          # or "majority"
//! mode = "set"                # result equivalence: set | bag | ordered
//!
//! [backends.schema]
//! kind = "mock"
//! script = "mocks/schema.jsonl"
//!
//! [backends.SQLG_1]
//! kind = "http"
//! endpoint = "http://localhost:8000/v1"
//! model = "coder-32b"
//! api_key_env = "LLM_API_KEY"
//!
//! [[generators]]
//! id = "SQLG_1"
//! role = "SQLG_1"
//! template = "gen_multitask"
//! rank = 1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{
    BackendRegistry, CachedEmbedder, ChatBackend, Embedder, HashedNgramEmbedder, HttpChat, HttpEmbedder, HttpSettings, MockChat,
    MOCK_EMBEDDING_DIM, SCHEMA_ROLE, SELECTOR_ROLE,
};
use crate::dataset::Flavor;
use crate::exec::{EquivalenceMode, DEFAULT_TIMEOUT_MS};
use crate::filter::RetrievalParams;
use crate::generation::{default_bindings, validate_bindings, GeneratorBinding, DEFAULT_SHOTS};
use crate::selection::SelectorPolicy;
use crate::templates::Template;
use crate::{Error, Result};

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV: &str = "NL2SQL_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Scripted responses from a JSONL file of `{"match", "response"}` records.
    Mock { script: PathBuf },
    Http(HttpSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    /// Offline hashed character n-grams.
    Hashed {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        #[serde(flatten)]
        settings: HttpSettings,
        dim: usize,
    },
}

fn default_dim() -> usize {
    MOCK_EMBEDDING_DIM
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hashed { dim: MOCK_EMBEDDING_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    /// Backend role; defaults to the generator id.
    #[serde(default)]
    pub role: Option<String>,
    pub template: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IclSpec {
    /// Training questions with gold SQL, in BIRD or Spider format.
    pub demos: PathBuf,
    #[serde(default = "default_flavor")]
    pub flavor: Flavor,
    #[serde(default = "default_shots")]
    pub shots: usize,
}

fn default_flavor() -> Flavor {
    Flavor::Bird
}
fn default_shots() -> usize {
    DEFAULT_SHOTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of nested schema subsets.
    pub p_s: usize,
    pub seed: u64,
    pub temperature: f64,
    pub selector: SelectorPolicy,
    pub mode: EquivalenceMode,
    pub timeout_ms: u64,
    pub workers: usize,
    /// Sample values per column in rendered schemas.
    pub sample_cap: usize,
    pub retrieval: RetrievalParams,
    pub embedding: EmbeddingSpec,
    pub backends: BTreeMap<String, BackendSpec>,
    /// Defaults to the five built-in generators on roles `SQLG_1..5`.
    pub generators: Vec<GeneratorSpec>,
    /// Template id -> file replacing the built-in text.
    pub templates: BTreeMap<String, PathBuf>,
    pub icl: Option<IclSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            p_s: 2,
            seed: 0,
            temperature: 0.0,
            selector: SelectorPolicy::Model,
            mode: EquivalenceMode::Set,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            workers: 4,
            sample_cap: crate::schema::DEFAULT_SAMPLE_CAP,
            retrieval: RetrievalParams::default(),
            embedding: EmbeddingSpec::default(),
            backends: BTreeMap::new(),
            generators: Vec::new(),
            templates: BTreeMap::new(),
            icl: None,
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn bindings(&self) -> Vec<GeneratorBinding> {
        if self.generators.is_empty() {
            return default_bindings();
        }
        self.generators
            .iter()
            .map(|g| GeneratorBinding::new(&g.id, g.role.as_deref().unwrap_or(&g.id), &g.template, g.rank))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_s == 0 {
            return Err(Error::ConfigInvalid("p_s must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::ConfigInvalid("workers must be at least 1".into()));
        }
        let bindings = self.bindings();
        validate_bindings(&bindings)?;
        let mut needed: Vec<&str> = vec![SCHEMA_ROLE];
        needed.extend(bindings.iter().map(|b| b.backend_role.as_str()));
        if self.selector == SelectorPolicy::Model {
            needed.push(SELECTOR_ROLE);
        }
        for role in needed {
            if !self.backends.contains_key(role) {
                return Err(Error::ConfigInvalid(format!("no backend configured for role `{role}`")));
            }
        }
        for b in &bindings {
            if !self.templates.contains_key(&b.prompt_template_id) && Template::builtin(&b.prompt_template_id).is_none() {
                return Err(Error::ConfigInvalid(format!("unknown template `{}`", b.prompt_template_id)));
            }
        }
        for (id, p) in &self.templates {
            let p = self.resolve(p);
            if !p.is_file() {
                return Err(Error::ConfigInvalid(format!("template `{id}`: {} not found", p.display())));
            }
        }
        Ok(())
    }

    /// Loads every template override.
    pub fn load_templates(&self) -> Result<BTreeMap<String, Template>> {
        self.templates
            .iter()
            .map(|(id, p)| Ok((id.clone(), Template::load(id.clone(), &self.resolve(p))?)))
            .collect()
    }

    pub fn build_registry(&self) -> Result<BackendRegistry> {
        let mut reg = BackendRegistry::new();
        for (role, spec) in &self.backends {
            let backend: Arc<dyn ChatBackend> = match spec {
                BackendSpec::Mock { script } => Arc::new(
                    MockChat::from_jsonl(role.clone(), &self.resolve(script))
                        .map_err(|e| Error::ConfigInvalid(format!("mock script for `{role}`: {e}")))?,
                ),
                BackendSpec::Http(s) => Arc::new(HttpChat::new(s.clone())),
            };
            reg.bind(role.clone(), backend);
        }
        Ok(reg)
    }

    pub fn build_embedder(&self) -> Arc<dyn Embedder> {
        match &self.embedding {
            EmbeddingSpec::Hashed { dim } => Arc::new(CachedEmbedder::new(HashedNgramEmbedder::new(*dim, 3))),
            EmbeddingSpec::Http { settings, dim } => Arc::new(CachedEmbedder::new(HttpEmbedder::new(settings.clone(), *dim))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
p_s = 1
selector = "majority"
[backends.schema]
kind = "mock"
script = "s.jsonl"
[backends.g]
kind = "http"
endpoint = "http://localhost:1/v1"
model = "m"
[[generators]]
id = "g"
template = "gen_standard"
rank = 1
"#;

    #[test]
    fn parses_minimal_file() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/etc/x")).unwrap();
        assert_eq!(cfg.p_s, 1);
        assert_eq!(cfg.bindings()[0].backend_role, "g");
        assert_eq!(cfg.resolve(Path::new("s.jsonl")), PathBuf::from("/etc/x/s.jsonl"));
        assert!(matches!(cfg.backends["g"], BackendSpec::Http(ref h) if h.retries == 2));
        assert_eq!(cfg.retrieval.values.threshold, 0.60);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("p_s = 1", "p_s = 0"),
            MINIMAL.replace("rank = 1", "rank = 2"),
            MINIMAL.replace("selector = \"majority\"", "selector = \"model\""),
            MINIMAL.replace("gen_standard", "gen_nothing"),
            MINIMAL.replace("[backends.g]", "[backends.h]"),
            format!("{MINIMAL}\nbogus = 1\n"),
            "p_s = ".to_string(),
        ];
        for b in bad {
            assert!(matches!(PipelineConfig::parse(&b, Path::new(".")), Err(Error::ConfigInvalid(_))), "{b}");
        }
    }

    #[test]
    fn default_generators_need_five_roles() {
        let text = "selector = \"majority\"\n[backends.schema]\nkind = \"mock\"\nscript = \"s\"\n";
        let err = PipelineConfig::parse(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("SQLG_1"));
    }

    #[test]
    fn missing_file_is_config_error() {
        assert!(matches!(PipelineConfig::load(Path::new("/no/such/file.toml")), Err(Error::ConfigInvalid(_))));
    }
}
