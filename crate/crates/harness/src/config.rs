//! Run configuration: TOML or JSON on disk, with environment overrides for
//! endpoints and paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lectureqg_core::context::{ContextStrategy, Modality, Selection};
use lectureqg_core::endpoint::EndpointConfig;
use lectureqg_core::llm::ModelConfig;
use lectureqg_core::metrics::{NliMode, TokenizerSpec, RQUGE_MAX_TOKENS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// OpenAI-compatible chat-completions endpoint.
    #[default]
    Openai,
    /// Deterministic offline model, see [`crate::simulate`].
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Serve hits from the cache and record misses.
    #[default]
    ReadWrite,
    /// Serve hits only; a miss fails the request. For offline re-evaluation.
    Replay,
    /// No cache at all.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Column label in reports; defaults to the model name.
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub provider: ProviderKind,
    /// Artificial latency of the simulated provider.
    #[serde(default)]
    pub simulated_latency_ms: u64,
    #[serde(flatten)]
    pub model: ModelConfig,
}

impl GeneratorConfig {
    pub fn simulated(name: &str) -> Self {
        GeneratorConfig {
            name: name.to_string(),
            provider: ProviderKind::Simulated,
            simulated_latency_ms: 0,
            model: ModelConfig::new("", name),
        }
    }

    pub fn label(&self) -> &str {
        if self.name.is_empty() {
            &self.model.model
        } else {
            &self.name
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub mode: NliMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqugeConfig {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    #[serde(default = "default_rquge_tokens")]
    pub max_tokens: usize,
}

fn default_rquge_tokens() -> usize {
    RQUGE_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    /// LLM response cache; defaults to `{output}/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_mode: CacheMode,
    pub generators: Vec<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captioner: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli: Option<NliConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rquge: Option<RqugeConfig>,
    /// Endpoint-backed baselines for the metric benchmark, by scorer name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub similarity: BTreeMap<String, EndpointConfig>,
    /// Strategy keys. Keys without a modality prefix are expanded over
    /// `modalities`; CombineMM always uses both.
    pub strategies: Vec<String>,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<Modality>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Rule-Best window when no sweep result is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_best_k: Option<usize>,
    /// Sweep output to read Rule-Best from; defaults to `{output}/rule_best.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_best_file: Option<PathBuf>,
    #[serde(default = "default_selection_retries")]
    pub selection_retries: u32,
    #[serde(default = "default_rewrite_retries")]
    pub rewrite_retries: u32,
}

fn default_modalities() -> Vec<Modality> {
    vec![Modality::Transcript]
}
fn default_workers() -> usize {
    4
}
fn default_selection_retries() -> u32 {
    2
}
fn default_rewrite_retries() -> u32 {
    1
}

/// Environment variables consulted by [`RunConfig::apply_env`].
pub const ENV_OVERRIDES: [&str; 8] = [
    "LQG_CORPUS",
    "LQG_OUTPUT",
    "LQG_CACHE_DIR",
    "LQG_WORKERS",
    "LQG_LLM_ENDPOINT",
    "LQG_CAPTION_ENDPOINT",
    "LQG_NLI_ENDPOINT",
    "LQG_RQUGE_ENDPOINT",
];

impl RunConfig {
    /// A config with everything optional left out.
    pub fn new(corpus: impl Into<PathBuf>, output: impl Into<PathBuf>, generators: Vec<GeneratorConfig>) -> Self {
        RunConfig {
            corpus: corpus.into(),
            output: output.into(),
            cache_dir: None,
            cache_mode: CacheMode::default(),
            generators,
            captioner: None,
            nli: None,
            rquge: None,
            similarity: BTreeMap::new(),
            strategies: Vec::new(),
            modalities: default_modalities(),
            workers: default_workers(),
            rule_best_k: None,
            rule_best_file: None,
            selection_retries: default_selection_retries(),
            rewrite_retries: default_rewrite_retries(),
        }
    }

    /// Reads `.json` as JSON and anything else as TOML. Relative corpus,
    /// output and cache paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&raw).map_err(|e| parse(e.to_string()))?
        } else {
            toml::from_str(&raw).map_err(|e| parse(e.to_string()))?
        };
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        if let Some(c) = &mut self.cache_dir {
            fix(c);
        }
        if let Some(f) = &mut self.rule_best_file {
            fix(f);
        }
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env_with(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    /// Applies overrides from `lookup`. Endpoint overrides create the NLI or
    /// RQUGE section when the file has none.
    pub fn apply_env_with(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("LQG_CORPUS") {
            self.corpus = v.into();
        }
        if let Some(v) = lookup("LQG_OUTPUT") {
            self.output = v.into();
        }
        if let Some(v) = lookup("LQG_CACHE_DIR") {
            self.cache_dir = Some(v.into());
        }
        if let Some(v) = lookup("LQG_WORKERS") {
            self.workers = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("LQG_WORKERS must be a positive integer, got {v:?}")))?;
        }
        if let Some(v) = lookup("LQG_LLM_ENDPOINT") {
            for g in self.generators.iter_mut().filter(|g| g.provider == ProviderKind::Openai) {
                g.model.endpoint = v.clone();
            }
        }
        if let Some(v) = lookup("LQG_CAPTION_ENDPOINT") {
            if let Some(c) = self.captioner.as_mut().filter(|c| c.provider == ProviderKind::Openai) {
                c.model.endpoint = v;
            }
        }
        if let Some(v) = lookup("LQG_NLI_ENDPOINT") {
            match &mut self.nli {
                Some(n) => n.endpoint.url = v,
                None => {
                    self.nli = Some(NliConfig {
                        endpoint: EndpointConfig::new(v),
                        mode: NliMode::default(),
                    })
                }
            }
        }
        if let Some(v) = lookup("LQG_RQUGE_ENDPOINT") {
            match &mut self.rquge {
                Some(r) => r.endpoint.url = v,
                None => {
                    self.rquge = Some(RqugeConfig {
                        endpoint: EndpointConfig::new(v),
                        tokenizer: TokenizerSpec::default(),
                        max_tokens: RQUGE_MAX_TOKENS,
                    })
                }
            }
        }
        Ok(())
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    pub fn rule_best_path(&self) -> PathBuf {
        self.rule_best_file.clone().unwrap_or_else(|| self.output.join(crate::sweep::RULE_BEST_FILE))
    }

    /// Expands `strategies` into concrete strategies, grouped by modality
    /// in `modalities` order, keeping the configured order within a group.
    pub fn resolved_strategies(&self) -> Result<Vec<ContextStrategy>, ConfigError> {
        expand_strategies(&self.strategies, &self.modalities)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.strategies.is_empty() {
            return invalid("at least one strategy is required".into());
        }
        if self.generators.is_empty() {
            return invalid("at least one generator is required".into());
        }
        if self.workers == 0 {
            return invalid("workers must be >= 1".into());
        }
        if self.modalities.is_empty() {
            return invalid("at least one modality is required".into());
        }
        if self.rule_best_k == Some(0) {
            return invalid("rule_best_k must be >= 1".into());
        }
        let mut labels = Vec::new();
        for g in self.generators.iter().chain(&self.captioner) {
            g.model.validate().map_err(ConfigError::Invalid)?;
            if g.provider == ProviderKind::Openai && g.model.endpoint.is_empty() {
                return invalid(format!("generator {}: endpoint is required", g.label()));
            }
        }
        for g in &self.generators {
            if labels.contains(&g.label()) {
                return invalid(format!("duplicate generator name {}", g.label()));
            }
            labels.push(g.label());
        }
        if let Some(r) = &self.rquge {
            r.tokenizer
                .build()
                .map_err(|e| ConfigError::Invalid(format!("rquge tokenizer: {e}")))?;
            if r.max_tokens == 0 {
                return invalid("rquge max_tokens must be >= 1".into());
            }
        }
        self.resolved_strategies()?;
        check_writable(&self.output)
    }
}

pub fn expand_strategies(keys: &[String], modalities: &[Modality]) -> Result<Vec<ContextStrategy>, ConfigError> {
    // (strategy, whether its modality was fixed by the key)
    let parsed = keys
        .iter()
        .map(|k| {
            let s = k
                .parse::<ContextStrategy>()
                .map_err(|e| ConfigError::Invalid(format!("strategy {k:?}: {e}")))?;
            Ok((s, k.contains('/') || s.selection == Selection::CombineMm))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;

    let mut order: Vec<Modality> = modalities.iter().copied().filter(|m| *m != Modality::Both).collect();
    order.push(Modality::Both);
    for (s, _) in &parsed {
        if !order.contains(&s.modality) {
            order.push(s.modality);
        }
    }
    let mut out: Vec<ContextStrategy> = Vec::new();
    for m in order {
        for &(s, fixed) in &parsed {
            let s = match (fixed, m) {
                (true, _) if s.modality == m => s,
                (false, Modality::Transcript | Modality::Keyframes) if modalities.contains(&m) => {
                    ContextStrategy::new(s.selection, s.rewrite, m).map_err(ConfigError::Invalid)?
                }
                _ => continue,
            };
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn check_writable(dir: &Path) -> Result<(), ConfigError> {
    let probe = dir.join(".write-probe");
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&probe, b""))
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| ConfigError::Invalid(format!("output dir {} is not writable: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
corpus = "data"
output = "runs/a"
strategies = ["all", "cot+rewrite", "combinemm"]
modalities = ["transcript", "keyframes"]

[[generators]]
name = "gpt"
endpoint = "https://api.example/v1/chat/completions"
model = "gpt-4o"

[[generators]]
provider = "simulated"
model = "sim"

[nli]
url = "http://nli/score"
mode = "candidate-to-reference"

[rquge]
url = "http://rquge"
tokenizer = { kind = "wordpunct" }
"#;

    fn parsed() -> RunConfig {
        let mut c: RunConfig = toml::from_str(TOML).unwrap();
        c.rebase(Path::new("/base"));
        c
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = parsed();
        assert_eq!(c.corpus, Path::new("/base/data"));
        assert_eq!(c.cache_root(), Path::new("/base/runs/a/cache"));
        assert_eq!(c.generators[0].label(), "gpt");
        assert_eq!(c.generators[1].label(), "sim");
        assert_eq!(c.generators[1].provider, ProviderKind::Simulated);
        assert_eq!(c.nli.as_ref().unwrap().mode, NliMode::CandidateToReference);
        assert_eq!(c.rquge.as_ref().unwrap().tokenizer, TokenizerSpec::Wordpunct);
        assert_eq!(c.rquge.as_ref().unwrap().max_tokens, 512);
        assert_eq!(c.workers, 4);
        assert_eq!(c.cache_mode, CacheMode::ReadWrite);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn strategies_expand_per_modality() {
        let keys: Vec<String> = parsed().resolved_strategies().unwrap().iter().map(|s| s.key()).collect();
        assert_eq!(
            keys,
            [
                "transcript/all",
                "transcript/cot+rewrite",
                "keyframes/all",
                "keyframes/cot+rewrite",
                "both/combinemm"
            ]
        );
    }

    #[test]
    fn explicit_prefix_is_not_expanded() {
        let keys = vec!["keyframes/direct".to_string(), "all".to_string()];
        let s = expand_strategies(&keys, &[Modality::Transcript]).unwrap();
        let keys: Vec<String> = s.iter().map(|s| s.key()).collect();
        assert_eq!(keys, ["transcript/all", "keyframes/direct"]);
    }

    #[test]
    fn env_overrides_endpoints() {
        let mut c = parsed();
        c.nli = None;
        c.apply_env_with(|k| match k {
            "LQG_NLI_ENDPOINT" => Some("http://other-nli".into()),
            "LQG_LLM_ENDPOINT" => Some("http://llm".into()),
            "LQG_WORKERS" => Some("7".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.nli.as_ref().unwrap().endpoint.url, "http://other-nli");
        assert_eq!(c.generators[0].model.endpoint, "http://llm");
        assert_eq!(c.generators[1].model.endpoint, "");
        assert_eq!(c.workers, 7);
        assert!(c.apply_env_with(|k| (k == "LQG_WORKERS").then(|| "x".into())).is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parsed();
        c.output = dir.path().join("out");
        c.validate().unwrap();

        let mut no_strategy = c.clone();
        no_strategy.strategies.clear();
        assert!(no_strategy.validate().is_err());

        let mut bad = c.clone();
        bad.strategies.push("rule-0".into());
        assert!(bad.validate().is_err());

        let mut missing_endpoint = c.clone();
        missing_endpoint.generators[0].model.endpoint.clear();
        assert!(missing_endpoint.validate().is_err());

        let mut dup = c;
        dup.generators[1].name = "gpt".into();
        assert!(dup.validate().is_err());
    }
}
