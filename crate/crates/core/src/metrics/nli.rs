use std::str::FromStr;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::endpoint::{EndpointConfig, EndpointError, JsonEndpoint};

/// Class probabilities returned by an NLI model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliProbs {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

#[async_trait]
pub trait NliBackend: Send + Sync {
    async fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliProbs, EndpointError>;
}

/// `POST {"premise", "hypothesis"}` → `{"entailment", "neutral", "contradiction"}`.
pub struct HttpNli {
    endpoint: JsonEndpoint,
}

impl HttpNli {
    pub fn new(config: EndpointConfig) -> Self {
        HttpNli {
            endpoint: JsonEndpoint::new(config),
        }
    }
}

#[derive(Serialize)]
struct NliRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[async_trait]
impl NliBackend for HttpNli {
    async fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliProbs, EndpointError> {
        let probs: NliProbs = self.endpoint.post(&NliRequest { premise, hypothesis }).await?;
        let ok = [probs.entailment, probs.neutral, probs.contradiction]
            .iter()
            .all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        if !ok {
            return Err(EndpointError::Protocol {
                url: self.endpoint.url().to_string(),
                message: format!("probabilities out of range: {probs:?}"),
            });
        }
        Ok(probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NliMode {
    /// Mean entailment probability over both directions.
    #[default]
    Symmetric,
    /// Candidate as premise, reference as hypothesis.
    CandidateToReference,
    /// Reference as premise, candidate as hypothesis.
    ReferenceToCandidate,
}

impl FromStr for NliMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(NliMode::Symmetric),
            "candidate-to-reference" => Ok(NliMode::CandidateToReference),
            "reference-to-candidate" => Ok(NliMode::ReferenceToCandidate),
            other => Err(format!("unknown NLI mode {other:?}")),
        }
    }
}

/// Entailment-based similarity between a candidate and a reference question.
pub async fn nli_score(
    candidate: &str,
    reference: &str,
    backend: &dyn NliBackend,
    mode: NliMode,
) -> Result<f64, EndpointError> {
    match mode {
        NliMode::CandidateToReference => Ok(backend.classify(candidate, reference).await?.entailment),
        NliMode::ReferenceToCandidate => Ok(backend.classify(reference, candidate).await?.entailment),
        NliMode::Symmetric => {
            let forward = backend.classify(candidate, reference).await?.entailment;
            let backward = backend.classify(reference, candidate).await?.entailment;
            Ok((forward + backward) / 2.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Entailment = 0.8 when the premise is the longer text, else 0.6.
    struct Directional;

    #[async_trait]
    impl NliBackend for Directional {
        async fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliProbs, EndpointError> {
            let e = if premise.len() >= hypothesis.len() { 0.8 } else { 0.6 };
            Ok(NliProbs {
                entailment: e,
                neutral: 1.0 - e,
                contradiction: 0.0,
            })
        }
    }

    struct Down;

    #[async_trait]
    impl NliBackend for Down {
        async fn classify(&self, _: &str, _: &str) -> Result<NliProbs, EndpointError> {
            Err(EndpointError::NotConfigured)
        }
    }

    #[tokio::test]
    async fn symmetric_is_mean_and_order_invariant() {
        let s = nli_score("a longer one", "short", &Directional, NliMode::Symmetric).await.unwrap();
        assert!((s - 0.7).abs() < 1e-12);
        let t = nli_score("short", "a longer one", &Directional, NliMode::Symmetric).await.unwrap();
        assert_eq!(s, t);
    }

    #[tokio::test]
    async fn directional_modes() {
        let c2r = nli_score("a longer one", "short", &Directional, NliMode::CandidateToReference).await;
        let r2c = nli_score("a longer one", "short", &Directional, NliMode::ReferenceToCandidate).await;
        assert_eq!(c2r.unwrap(), 0.8);
        assert_eq!(r2c.unwrap(), 0.6);
    }

    #[tokio::test]
    async fn failure_surfaces() {
        assert!(nli_score("a", "b", &Down, NliMode::Symmetric).await.is_err());
    }

    #[test]
    fn mode_names() {
        assert_eq!("symmetric".parse::<NliMode>().unwrap(), NliMode::Symmetric);
        assert!("both".parse::<NliMode>().is_err());
    }
}
