//! The Metropolis-Hastings correction loop.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{log_pi_ratio, total_energy, EnergyBreakdown, EnergyWeights};
use crate::proposal::{
    Kernel, KernelMutation, KernelSettings, LengthBounds, PositionDistribution, ProposalError, RejectReason,
};
use crate::scorers::{Proposer, ScorerError, Scorers};
use crate::text::{EditKind, EditState, EvidenceSet, Space, TextError, TokenSequence};

/// The chain generator: ChaCha with 8 rounds, seeded through `seed_from_u64`. Its output
/// stream is specified independently of platform and crate version.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Per-chain seed from the global seed and a stable key such as an instance id.
pub fn derive_seed(global: u64, key: &str) -> u64 {
    splitmix64(global ^ fnv1a64(key.as_bytes()))
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("invalid sampler config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub weights: EnergyWeights,
    pub include_initial_in_ranking: bool,
    pub bounds: LengthBounds,
    #[serde(skip)]
    pub mutation: Option<KernelMutation>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            seed: 0,
            alpha: 0.5,
            weights: EnergyWeights::default(),
            include_initial_in_ranking: true,
            bounds: LengthBounds::default(),
            mutation: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.iterations < 1 {
            return Err(EngineError::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EngineError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.bounds.min < 1 || self.bounds.max.is_some_and(|m| m < self.bounds.min) {
            return Err(EngineError::Config(format!("bad length bounds {:?}", self.bounds)));
        }
        self.weights.validate().map_err(EngineError::Config)
    }

    pub fn kernel_settings(&self) -> KernelSettings {
        KernelSettings {
            alpha: self.alpha,
            bounds: self.bounds,
            mutation: self.mutation,
        }
    }
}

/// `min(1, exp((E_old − E_new) + (ln g_rev − ln g_fwd)))`, in log space.
pub fn acceptance_ratio(
    e_old: &EnergyBreakdown,
    e_new: &EnergyBreakdown,
    forward_logprob: f64,
    reverse_logprob: f64,
) -> f64 {
    let log_a = log_pi_ratio(e_new, e_old) + (reverse_logprob - forward_logprob);
    if log_a.is_nan() {
        0.0
    } else if log_a >= 0.0 {
        1.0
    } else {
        log_a.exp()
    }
}

// JSON has no infinities; a reverse move with zero probability would otherwise be lost.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&x.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSummary {
    pub action: EditKind,
    pub space: Space,
    /// Unit index for replace/delete, gap index for insert.
    pub position: usize,
    pub content: Option<Vec<String>>,
    pub proposed: TokenSequence,
    #[serde(with = "extended_f64")]
    pub forward_logprob: f64,
    #[serde(with = "extended_f64")]
    pub reverse_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub current: TokenSequence,
    pub proposal: Option<ProposalSummary>,
    pub rejection: Option<RejectReason>,
    pub e_old: EnergyBreakdown,
    pub e_new: Option<EnergyBreakdown>,
    pub acceptance: f64,
    pub u: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedState {
    pub iteration: usize,
    pub tokens: TokenSequence,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub initial: TokenSequence,
    pub initial_energy: EnergyBreakdown,
    pub best: TokenSequence,
    pub best_energy: EnergyBreakdown,
    pub trace: Vec<TraceRecord>,
    pub accepted_states: Vec<AcceptedState>,
    pub include_initial: bool,
}

impl CorrectionResult {
    /// Lowest-energy state among those accepted at iterations `1..=k` (plus the initial
    /// claim when it takes part in ranking). Ties keep the earliest.
    pub fn best_within(&self, k: usize) -> (&TokenSequence, &EnergyBreakdown) {
        let mut best: Option<(&TokenSequence, &EnergyBreakdown)> =
            self.include_initial.then_some((&self.initial, &self.initial_energy));
        for s in self.accepted_states.iter().take_while(|s| s.iteration <= k) {
            if best.is_none_or(|(_, e)| s.energy.total < e.total) {
                best = Some((&s.tokens, &s.energy));
            }
        }
        best.unwrap_or((&self.initial, &self.initial_energy))
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted_states.len()
    }
}

/// A chain position with its cached energy and position distribution.
#[derive(Debug, Clone)]
pub struct Chain {
    pub state: EditState,
    pub energy: EnergyBreakdown,
    positions: PositionDistribution,
}

impl Chain {
    pub fn positions(&self) -> &PositionDistribution {
        &self.positions
    }
}

pub struct Sampler<'a> {
    pub scorers: Scorers<'a>,
    pub proposer: &'a dyn Proposer,
    pub config: SamplerConfig,
}

impl<'a> Sampler<'a> {
    pub fn new(scorers: Scorers<'a>, proposer: &'a dyn Proposer, config: SamplerConfig) -> Self {
        Self {
            scorers,
            proposer,
            config,
        }
    }

    pub fn kernel(&self) -> Kernel<'_> {
        Kernel::new(self.scorers.saliency, self.proposer, self.config.kernel_settings())
    }

    pub fn energy(&self, state: &EditState) -> Result<EnergyBreakdown, ScorerError> {
        total_energy(
            state.tokens(),
            state.original().tokens(),
            state.evidence(),
            &self.scorers,
            &self.config.weights,
        )
    }

    pub fn start(&self, state: EditState) -> Result<Chain, ScorerError> {
        let energy = self.energy(&state)?;
        let positions = self.kernel().positions(&state)?;
        Ok(Chain {
            state,
            energy,
            positions,
        })
    }

    /// One propose/accept cycle. Proposals that cannot be formed are recorded as rejections.
    /// Every step draws its acceptance uniform last, whatever the outcome.
    pub fn step<R: Rng + ?Sized>(
        &self,
        chain: Chain,
        iteration: usize,
        rng: &mut R,
    ) -> Result<(Chain, TraceRecord), EngineError> {
        let proposal = self.kernel().propose(&chain.state, &chain.positions, rng);
        let mut record = TraceRecord {
            iteration,
            current: chain.state.current().clone(),
            proposal: None,
            rejection: None,
            e_old: chain.energy,
            e_new: None,
            acceptance: 0.0,
            u: 0.0,
            accepted: false,
        };
        let proposal = match proposal {
            Ok(p) => p,
            Err(ProposalError::Rejected(reason)) => {
                record.rejection = Some(reason);
                record.u = rng.gen();
                return Ok((chain, record));
            }
            Err(ProposalError::Scorer(e)) => return Err(e.into()),
            Err(ProposalError::Text(e)) => return Err(e.into()),
        };
        let e_new = if proposal.new_state.tokens() == chain.state.tokens() {
            chain.energy
        } else {
            self.energy(&proposal.new_state)?
        };
        let a = acceptance_ratio(
            &chain.energy,
            &e_new,
            proposal.forward_logprob,
            proposal.reverse_logprob,
        );
        let u: f64 = rng.gen();
        record.proposal = Some(ProposalSummary {
            action: proposal.action.kind,
            space: proposal.action.space,
            position: proposal.action.unit_index,
            content: proposal.action.content.clone(),
            proposed: proposal.new_state.current().clone(),
            forward_logprob: proposal.forward_logprob,
            reverse_logprob: proposal.reverse_logprob,
        });
        record.e_new = Some(e_new);
        record.acceptance = a;
        record.u = u;
        record.accepted = u < a;
        if record.accepted {
            let next = Chain {
                state: proposal.new_state,
                energy: e_new,
                positions: proposal.new_positions,
            };
            Ok((next, record))
        } else {
            Ok((chain, record))
        }
    }

    /// Runs `config.iterations` steps from `claim` with the generator seeded by `config.seed`.
    pub fn run(&self, claim: TokenSequence, evidence: Arc<EvidenceSet>) -> Result<CorrectionResult, EngineError> {
        let mut rng = chain_rng(self.config.seed);
        self.run_with(EditState::initial(claim, evidence)?, &mut rng)
    }

    pub fn run_with<R: Rng + ?Sized>(&self, initial: EditState, rng: &mut R) -> Result<CorrectionResult, EngineError> {
        self.config.validate()?;
        let mut chain = self.start(initial)?;
        let initial = chain.state.current().clone();
        let initial_energy = chain.energy;
        let mut trace = Vec::with_capacity(self.config.iterations);
        let mut accepted_states = Vec::new();
        for it in 1..=self.config.iterations {
            let (next, record) = self.step(chain, it, rng)?;
            chain = next;
            if record.accepted {
                accepted_states.push(AcceptedState {
                    iteration: it,
                    tokens: chain.state.current().clone(),
                    energy: chain.energy,
                });
            }
            trace.push(record);
        }
        let mut result = CorrectionResult {
            best: initial.clone(),
            best_energy: initial_energy,
            initial,
            initial_energy,
            trace,
            accepted_states,
            include_initial: self.config.include_initial_in_ranking,
        };
        let (best, energy) = result.best_within(self.config.iterations);
        (result.best, result.best_energy) = (best.clone(), *energy);
        Ok(result)
    }
}
