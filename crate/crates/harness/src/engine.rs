//! Live objects behind a run: the corpus, one cached client per generator
//! and the scoring backends.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use lectureqg_core::context::{ContextSettings, Modality};
use lectureqg_core::corpus::{load_corpus, Corpus};
use lectureqg_core::llm::{
    ChatProvider, ChatRequest, LlmClient, ModelConfig, OpenAiProvider, ProviderError, ProviderReply, ResponseCache,
};
use lectureqg_core::metrics::{HttpNli, HttpRquge, Scoring};

use crate::config::{CacheMode, GeneratorConfig, ProviderKind, RunConfig};
use crate::simulate::SimulatedProvider;
use crate::sweep::RuleBestTable;
use crate::HarnessError;

#[derive(Clone)]
pub struct Generator {
    /// Report column label.
    pub name: String,
    pub client: LlmClient,
}

pub struct Engine {
    pub corpus: Arc<Corpus>,
    pub generators: Vec<Generator>,
    pub scoring: Scoring,
    /// Retry budgets and the fallback Rule-Best window.
    pub settings: ContextSettings,
    /// Sweep winners; take precedence over `settings.rule_best_k`.
    pub rule_best: RuleBestTable,
    pub workers: usize,
}

/// Fails every request, so replay mode only ever serves cached answers.
struct ReplayOnly;

#[async_trait]
impl ChatProvider for ReplayOnly {
    async fn send(&self, config: &ModelConfig, _request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        Err(ProviderError::Fatal(format!("{}: cache miss in replay mode", config.model)))
    }
}

pub fn build_client(generator: &GeneratorConfig, cache_root: &Path, mode: CacheMode) -> Result<LlmClient, HarnessError> {
    let provider: Arc<dyn ChatProvider> = match (mode, generator.provider) {
        (CacheMode::Replay, _) => Arc::new(ReplayOnly),
        (_, ProviderKind::Openai) => Arc::new(OpenAiProvider::new()),
        (_, ProviderKind::Simulated) => Arc::new(SimulatedProvider::with_latency(Duration::from_millis(
            generator.simulated_latency_ms,
        ))),
    };
    let cache = (mode != CacheMode::Off).then(|| ResponseCache::new(cache_root));
    Ok(LlmClient::new(generator.model.clone(), provider, cache)?)
}

pub fn build_scoring(config: &RunConfig) -> Result<Scoring, HarnessError> {
    let mut scoring = Scoring::default();
    if let Some(n) = &config.nli {
        scoring.nli = Some(Arc::new(HttpNli::new(n.endpoint.clone())));
        scoring.nli_mode = n.mode;
    }
    if let Some(r) = &config.rquge {
        scoring.rquge = Some(Arc::new(HttpRquge::new(r.endpoint.clone())));
        let tokenizer = r
            .tokenizer
            .build()
            .map_err(|e| HarnessError::Usage(format!("rquge tokenizer: {e}")))?;
        scoring.tokenizer = Arc::from(tokenizer);
        scoring.rquge_max_tokens = r.max_tokens;
    }
    Ok(scoring)
}

impl Engine {
    /// An engine with default settings and no scoring endpoints.
    pub fn new(corpus: Corpus, generators: Vec<Generator>) -> Self {
        Engine {
            corpus: Arc::new(corpus),
            generators,
            scoring: Scoring::default(),
            settings: ContextSettings::default(),
            rule_best: RuleBestTable::default(),
            workers: 4,
        }
    }

    pub fn from_config(config: &RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let corpus = load_corpus(&config.corpus)?;
        let cache_root = config.cache_root();
        let generators = config
            .generators
            .iter()
            .map(|g| {
                Ok(Generator {
                    name: g.label().to_string(),
                    client: build_client(g, &cache_root, config.cache_mode)?,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let rule_best_path = config.rule_best_path();
        let rule_best = if rule_best_path.exists() {
            RuleBestTable::read(&rule_best_path)?
        } else if config.rule_best_file.is_some() {
            return Err(HarnessError::Missing {
                what: "rule-best file",
                path: rule_best_path,
            });
        } else {
            RuleBestTable::default()
        };
        let defaults = ContextSettings::default();
        Ok(Engine {
            corpus: Arc::new(corpus),
            generators,
            scoring: build_scoring(config)?,
            settings: ContextSettings {
                selection_retries: config.selection_retries,
                rewrite_retries: config.rewrite_retries,
                rule_best_k: config.rule_best_k.unwrap_or(defaults.rule_best_k),
            },
            rule_best,
            workers: config.workers,
        })
    }

    pub fn model_names(&self) -> Vec<String> {
        self.generators.iter().map(|g| g.name.clone()).collect()
    }

    /// Settings for one (model, modality): the sweep's Rule-Best window
    /// when there is one. Multimodal runs use the transcript window.
    pub fn settings_for(&self, model: &str, modality: Modality) -> ContextSettings {
        let m = if modality == Modality::Both { Modality::Transcript } else { modality };
        let mut s = self.settings;
        if let Some(k) = self.rule_best.lookup(model, m) {
            s.rule_best_k = k;
        }
        s
    }
}
