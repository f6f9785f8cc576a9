//! Reference content proposers.

use std::sync::Arc;

use super::{MaskedSequence, NGramMLM, Proposer, ScorerError, TokenDistribution};
use crate::text::EvidenceSet;

pub const DEFAULT_LM_WEIGHT: f64 = 2.0;
pub const DEFAULT_EVIDENCE_BONUS: f64 = 2.0;

/// n-gram slot filling plus a bonus for content copied from the evidence.
///
/// A token's log-score is `lm_weight · ½(ln P_fwd + ln P_bwd) + bonus·[in evidence]`; an
/// entity's is the same with the n-gram part averaged over its tokens (so long candidates
/// are not penalized for their length) and the bonus applied when the whole entity occurs
/// in a passage.
#[derive(Debug, Clone)]
pub struct ReferenceProposer {
    lm: Arc<NGramMLM>,
    lm_weight: f64,
    evidence_bonus: f64,
}

impl ReferenceProposer {
    pub fn new(lm: Arc<NGramMLM>) -> Self {
        Self {
            lm,
            lm_weight: DEFAULT_LM_WEIGHT,
            evidence_bonus: DEFAULT_EVIDENCE_BONUS,
        }
    }

    pub fn with_lm_weight(mut self, w: f64) -> Self {
        self.lm_weight = w;
        self
    }

    pub fn with_evidence_bonus(mut self, b: f64) -> Self {
        self.evidence_bonus = b;
        self
    }

    fn fill_score(&self, masked: &MaskedSequence, content: &[String]) -> f64 {
        let filled = masked.filled(content);
        let start = masked.left.len();
        let total: f64 = (start..start + content.len())
            .map(|i| self.lm.position_logprob(&filled, i))
            .sum();
        total / content.len() as f64
    }
}

impl Proposer for ReferenceProposer {
    fn token_dist(&self, masked: &MaskedSequence, evidence: &EvidenceSet) -> Result<TokenDistribution, ScorerError> {
        let scores = self
            .lm
            .vocab()
            .iter()
            .map(|w| {
                let lm =
                    0.5 * (self.lm.prob_forward(&masked.left, w).ln() + self.lm.prob_backward(&masked.right, w).ln());
                let bonus = if evidence.mentions(w) { self.evidence_bonus } else { 0.0 };
                (w.clone(), self.lm_weight * lm + bonus)
            })
            .collect();
        TokenDistribution::from_log_scores(scores)
    }

    fn entity_scores(
        &self,
        masked: &MaskedSequence,
        evidence: &EvidenceSet,
        candidates: &[Vec<String>],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(candidates
            .iter()
            .map(|c| {
                let bonus = if evidence.mentions_sequence(c) {
                    self.evidence_bonus
                } else {
                    0.0
                };
                self.lm_weight * self.fill_score(masked, c) + bonus
            })
            .collect())
    }
}

/// Uniform token distribution over a fixed vocabulary and equal entity scores.
#[derive(Debug, Clone)]
pub struct UniformProposer {
    vocab: Vec<String>,
}

impl UniformProposer {
    pub fn new<S: Into<String>>(vocab: impl IntoIterator<Item = S>) -> Self {
        Self {
            vocab: vocab.into_iter().map(Into::into).collect(),
        }
    }
}

impl Proposer for UniformProposer {
    fn token_dist(&self, _masked: &MaskedSequence, _evidence: &EvidenceSet) -> Result<TokenDistribution, ScorerError> {
        TokenDistribution::from_weights(self.vocab.iter().map(|w| (w.clone(), 1.0)).collect())
    }

    fn entity_scores(
        &self,
        _masked: &MaskedSequence,
        _evidence: &EvidenceSet,
        candidates: &[Vec<String>],
    ) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![0.0; candidates.len()])
    }
}
