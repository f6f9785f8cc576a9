//! Aggregate energy `E = w_lm·E_LM + w_v·E_V + w_h·E_H` and Boltzmann ratios.
//!
//! The target distribution is `π(x) ∝ exp(−E(x))`. Its normalizer is never needed: the
//! sampler only ever uses ratios `π(x′)/π(x)`.

use serde::{Deserialize, Serialize};

use crate::scorers::{ScorerError, Scorers};

/// Largest exponent magnitude passed to `exp`.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub w_lm: f64,
    pub w_v: f64,
    pub w_h: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w_lm: 1.0,
            w_v: 1.0,
            w_h: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn new(w_lm: f64, w_v: f64, w_h: f64) -> Result<Self, String> {
        let w = Self { w_lm, w_v, w_h };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.w_lm, self.w_v, self.w_h];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(format!("energy weights must be finite and non-negative: {all:?}"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err("at least one energy weight must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_lm: f64,
    pub e_v: f64,
    pub e_h: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(e_lm: f64, e_v: f64, e_h: f64, w: &EnergyWeights) -> Self {
        // a zero weight masks its term exactly, even if the term is huge
        let term = |wt: f64, e: f64| if wt == 0.0 { 0.0 } else { wt * e };
        Self {
            e_lm,
            e_v,
            e_h,
            total: term(w.w_lm, e_lm) + term(w.w_v, e_v) + term(w.w_h, e_h),
        }
    }
}

/// Positional mismatches over the common prefix length plus the length difference.
pub fn hamming<S: AsRef<str>>(x: &[S], x0: &[S]) -> usize {
    let mismatched = x.iter().zip(x0).filter(|(a, b)| a.as_ref() != b.as_ref()).count();
    mismatched + x.len().abs_diff(x0.len())
}

pub fn total_energy(
    tokens: &[String],
    original: &[String],
    evidence: &crate::text::EvidenceSet,
    scorers: &Scorers<'_>,
    weights: &EnergyWeights,
) -> Result<EnergyBreakdown, ScorerError> {
    let e_lm = -scorers.fluency.pseudo_loglik(tokens)?;
    let e_v = -scorers.verifier.support_prob(tokens, evidence)?.ln();
    let e_h = hamming(tokens, original) as f64;
    Ok(EnergyBreakdown::new(e_lm, e_v, e_h, weights))
}

/// `π(new)/π(old) = exp(E_old − E_new)`, with the exponent clamped to `±MAX_EXPONENT`.
pub fn pi_ratio(e_new: &EnergyBreakdown, e_old: &EnergyBreakdown) -> f64 {
    log_pi_ratio(e_new, e_old).exp()
}

pub fn log_pi_ratio(e_new: &EnergyBreakdown, e_old: &EnergyBreakdown) -> f64 {
    (e_old.total - e_new.total).clamp(-MAX_EXPONENT, MAX_EXPONENT)
}
