//! Token saliency for position sampling.

use std::sync::Arc;

use super::{SaliencyModel, ScorerError, Verifier};
use crate::text::EvidenceSet;

/// `s_i = |E_V(x without token i) − E_V(x)|` with `E_V = −ln P(supported)`.
///
/// Stands in for embedding-gradient norms when the verifier is not differentiable.
#[derive(Clone)]
pub struct OcclusionSaliency {
    verifier: Arc<dyn Verifier>,
}

impl OcclusionSaliency {
    pub fn new(verifier: Arc<dyn Verifier>) -> Self {
        Self { verifier }
    }
}

impl SaliencyModel for OcclusionSaliency {
    fn token_saliency(&self, seq: &[String], evidence: &EvidenceSet) -> Result<Vec<f64>, ScorerError> {
        let base = -self.verifier.support_prob(seq, evidence)?.ln();
        let mut occluded = Vec::with_capacity(seq.len().saturating_sub(1));
        (0..seq.len())
            .map(|i| {
                occluded.clear();
                occluded.extend_from_slice(&seq[..i]);
                occluded.extend_from_slice(&seq[i + 1..]);
                let e = -self.verifier.support_prob(&occluded, evidence)?.ln();
                Ok((e - base).abs())
            })
            .collect()
    }
}

/// Equal saliency everywhere: uniform position sampling.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSaliency;

impl SaliencyModel for UniformSaliency {
    fn token_saliency(&self, seq: &[String], _evidence: &EvidenceSet) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![1.0; seq.len()])
    }
}
