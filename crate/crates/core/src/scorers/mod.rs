//! Fluency, truthfulness, saliency and content-proposal models.
//!
//! Each model is a trait so the deterministic reference implementations in this module can
//! be swapped for the remote neural scorers behind [`remote::RemoteScorer`] without touching
//! the sampler.

pub mod lexical;
pub mod ngram;
pub mod proposer;
pub mod remote;
pub mod saliency;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::text::{EvidenceSet, TokenSequence};

pub use lexical::LexicalVerifier;
pub use ngram::NGramMLM;
pub use proposer::{ReferenceProposer, UniformProposer};
pub use remote::RemoteScorer;
pub use saliency::{OcclusionSaliency, UniformSaliency};

/// Lower/upper clamp applied to every verifier probability.
pub const PROB_FLOOR: f64 = 1e-6;

/// Mask marker used on the wire and in debugging output.
pub const MASK: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("scorer timed out after {0} ms")]
    Timeout(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote scorer failure: {0}")]
    RemoteFailure(String),
    #[error("transport error: {0}")]
    Io(String),
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Pseudo-log-likelihood model: `Σ_i log P(w_i | rest)`.
pub trait FluencyModel: Send + Sync {
    fn pseudo_loglik(&self, seq: &[String]) -> Result<f64, ScorerError>;
}

/// Probability that the claim is supported by the evidence, clamped to
/// `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub trait Verifier: Send + Sync {
    fn support_prob(&self, seq: &[String], evidence: &EvidenceSet) -> Result<f64, ScorerError>;
}

/// Non-negative per-token importance for the truthfulness energy.
pub trait SaliencyModel: Send + Sync {
    fn token_saliency(&self, seq: &[String], evidence: &EvidenceSet) -> Result<Vec<f64>, ScorerError>;
}

/// Content model for the masked slot.
pub trait Proposer: Send + Sync {
    /// Distribution over single tokens for the slot.
    fn token_dist(&self, masked: &MaskedSequence, evidence: &EvidenceSet) -> Result<TokenDistribution, ScorerError>;

    /// Length-normalized log-likelihood of each candidate entity filling the slot.
    fn entity_scores(
        &self,
        masked: &MaskedSequence,
        evidence: &EvidenceSet,
        candidates: &[Vec<String>],
    ) -> Result<Vec<f64>, ScorerError>;
}

/// A claim with one masked slot, stored as the tokens on either side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskedSequence {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl MaskedSequence {
    /// Masks tokens `start..end` (an empty range masks an insertion point).
    pub fn new(tokens: &[String], start: usize, end: usize) -> Self {
        Self {
            left: tokens[..start].to_vec(),
            right: tokens[end..].to_vec(),
        }
    }

    pub fn filled(&self, content: &[String]) -> Vec<String> {
        let mut v = Vec::with_capacity(self.left.len() + content.len() + self.right.len());
        v.extend_from_slice(&self.left);
        v.extend_from_slice(content);
        v.extend_from_slice(&self.right);
        v
    }

    /// Tokens with the literal mask marker in the slot.
    pub fn with_marker(&self) -> Vec<String> {
        self.filled(&[MASK.to_string()])
    }

    /// Parses a marker-bearing token list; `None` unless exactly one marker is present.
    pub fn from_marked(tokens: &[String]) -> Option<Self> {
        let mut it = tokens.iter().enumerate().filter(|(_, t)| *t == MASK);
        let (pos, _) = it.next()?;
        if it.next().is_some() {
            return None;
        }
        Some(Self::new(tokens, pos, pos + 1))
    }
}

pub const NORMALIZED_TOLERANCE: f64 = 1e-12;

/// A normalized distribution over tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(String, f64)>,
    index: HashMap<String, usize>,
}

impl TokenDistribution {
    /// Normalizes non-negative weights; zero-weight entries are kept (probability 0).
    /// Weights that already sum to 1 within [`NORMALIZED_TOLERANCE`] are kept as given, so a
    /// distribution passed through here twice (e.g. over the wire) is unchanged.
    pub fn from_weights(entries: Vec<(String, f64)>) -> Result<Self, ScorerError> {
        let sum: f64 = entries.iter().map(|(_, w)| *w).sum();
        let total = if (sum - 1.0).abs() <= NORMALIZED_TOLERANCE {
            1.0
        } else {
            sum
        };
        if entries.is_empty() || !total.is_finite() || total <= 0.0 {
            return Err(ScorerError::Protocol("token distribution has no mass".into()));
        }
        if entries.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(ScorerError::Protocol("token distribution has invalid weights".into()));
        }
        let mut merged: Vec<(String, f64)> = Vec::with_capacity(entries.len());
        let mut index: HashMap<String, usize> = HashMap::with_capacity(entries.len());
        for (tok, w) in entries {
            match index.get(&tok) {
                Some(&i) => merged[i].1 += w / total,
                None => {
                    index.insert(tok.clone(), merged.len());
                    merged.push((tok, w / total));
                }
            }
        }
        Ok(Self { entries: merged, index })
    }

    /// Softmax over log-scores.
    pub fn from_log_scores(entries: Vec<(String, f64)>) -> Result<Self, ScorerError> {
        let scores: Vec<f64> = entries.iter().map(|(_, s)| *s).collect();
        let probs = softmax(&scores);
        Self::from_weights(entries.into_iter().map(|(t, _)| t).zip(probs).collect())
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.index.get(token).map_or(0.0, |&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, p)| *p)
    }
}

/// Numerically stable softmax. Non-finite scores get zero mass.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; scores.len()];
    }
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| if s.is_finite() { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Borrowed view of the three energy-side models.
#[derive(Clone, Copy)]
pub struct Scorers<'a> {
    pub fluency: &'a dyn FluencyModel,
    pub verifier: &'a dyn Verifier,
    pub saliency: &'a dyn SaliencyModel,
}

/// Owned set of scorers plus a proposer, as built for one claim.
#[derive(Clone)]
pub struct ScorerBundle {
    pub fluency: Arc<dyn FluencyModel>,
    pub verifier: Arc<dyn Verifier>,
    pub saliency: Arc<dyn SaliencyModel>,
    pub proposer: Arc<dyn Proposer>,
}

impl ScorerBundle {
    pub fn scorers(&self) -> Scorers<'_> {
        Scorers {
            fluency: self.fluency.as_ref(),
            verifier: self.verifier.as_ref(),
            saliency: self.saliency.as_ref(),
        }
    }

    pub fn proposer(&self) -> &dyn Proposer {
        self.proposer.as_ref()
    }
}

/// Parameters of the deterministic reference scorer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub ngram_order: usize,
    pub add_k: f64,
    pub verifier: LexicalVerifier,
    pub proposer_lm_weight: f64,
    pub proposer_evidence_bonus: f64,
    /// Uniform instead of occlusion saliency (position sampling ablation).
    pub uniform_positions: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            ngram_order: 3,
            add_k: 1.0,
            verifier: LexicalVerifier::default(),
            proposer_lm_weight: proposer::DEFAULT_LM_WEIGHT,
            proposer_evidence_bonus: proposer::DEFAULT_EVIDENCE_BONUS,
            uniform_positions: false,
        }
    }
}

/// Builds the reference scorers for one claim: an n-gram model trained on `background`
/// plus the evidence passages, whose vocabulary also covers the claim and every gazetteer
/// entry, the lexical verifier, occlusion saliency and the n-gram/evidence proposer.
pub fn reference_bundle(
    claim: &TokenSequence,
    evidence: &EvidenceSet,
    background: &[TokenSequence],
    config: &ReferenceConfig,
) -> ScorerBundle {
    let mut lm = NGramMLM::new(config.ngram_order, config.add_k);
    for s in background.iter().chain(evidence.passages()) {
        lm.train_sentence(s.tokens());
    }
    lm.extend_vocab(claim.tokens());
    for e in evidence.gazetteer().entries() {
        lm.extend_vocab(e);
    }
    let lm = Arc::new(lm);
    let verifier = Arc::new(config.verifier.clone());
    let saliency: Arc<dyn SaliencyModel> = if config.uniform_positions {
        Arc::new(UniformSaliency)
    } else {
        Arc::new(OcclusionSaliency::new(verifier.clone()))
    };
    let proposer = ReferenceProposer::new(lm.clone())
        .with_lm_weight(config.proposer_lm_weight)
        .with_evidence_bonus(config.proposer_evidence_bonus);
    ScorerBundle {
        fluency: lm,
        verifier,
        saliency,
        proposer: Arc::new(proposer),
    }
}
