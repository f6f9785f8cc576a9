//! Exact verification of the transition kernel on small, fully enumerated state spaces.
//!
//! For a toy space every state, every move out of it and every acceptance probability can
//! be enumerated, which gives the kernel matrix `T` without sampling. The target `π ∝ e^{−E}`
//! is then checked directly: `πT = π`, `π_i T_ij = π_j T_ji`, strong connectivity and
//! positive self-loops. A long sampled chain is compared against `π` as well, and each
//! deliberate kernel defect in [`KernelMutation`] must visibly break stationarity.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::energy::EnergyWeights;
use crate::engine::{acceptance_ratio, chain_rng, EngineError, Sampler, SamplerConfig};
use crate::proposal::{KernelMutation, LengthBounds, ProposalError};
use crate::scorers::{
    LexicalVerifier, NGramMLM, OcclusionSaliency, ReferenceProposer, ScorerBundle, ScorerError, UniformProposer,
    UniformSaliency,
};
use crate::text::{EditState, EvidenceSet, Gazetteer, TokenSequence};

/// Largest kernel (in matrix entries) the harness will build.
pub const DEFAULT_MAX_ENTRIES: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("state space too large: {states} states exceed {limit} kernel entries")]
    SpaceTooLarge { states: usize, limit: usize },
    #[error("move from {from:?} leaves the state space: {to:?}")]
    OutsideSpace { from: String, to: String },
    #[error("enumerated probability {enumerated} disagrees with move log-probability {scored} at {state:?}")]
    Inconsistent {
        state: String,
        enumerated: f64,
        scored: f64,
    },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Every sequence over `vocab` with length in `min_len..=max_len`, plus the original claim
/// and evidence that define the energy.
#[derive(Debug, Clone)]
pub struct ToyStateSpace {
    pub name: String,
    pub vocab: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub original: TokenSequence,
    pub evidence: Arc<EvidenceSet>,
    states: Vec<TokenSequence>,
    index: HashMap<Vec<String>, usize>,
}

impl ToyStateSpace {
    pub fn new(
        name: &str,
        vocab: &[&str],
        min_len: usize,
        max_len: usize,
        entities: &[&str],
        original: &str,
        passages: &[&str],
    ) -> Self {
        let vocab: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();
        let mut states = Vec::new();
        let mut layer: Vec<Vec<String>> = vec![Vec::new()];
        for len in 1..=max_len {
            layer = layer
                .iter()
                .flat_map(|p| {
                    vocab.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
            if len >= min_len {
                states.extend(layer.iter().cloned().map(|t| TokenSequence::new(t).expect("non-empty")));
            }
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.tokens().to_vec(), i))
            .collect();
        let gazetteer = Gazetteer::new(
            entities
                .iter()
                .map(|e| e.split_whitespace().map(String::from).collect::<Vec<_>>()),
        );
        let passages = passages.iter().map(|p| TokenSequence::from_text(p)).collect();
        Self {
            name: name.to_string(),
            vocab,
            min_len,
            max_len,
            original: TokenSequence::from_text(original),
            evidence: Arc::new(EvidenceSet::with_gazetteer(passages, gazetteer)),
            states,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[TokenSequence] {
        &self.states
    }

    pub fn index_of(&self, tokens: &[String]) -> Option<usize> {
        self.index.get(tokens).copied()
    }

    pub fn edit_state(&self, i: usize) -> EditState {
        EditState::initial(self.original.clone(), self.evidence.clone())
            .expect("non-empty original")
            .with_tokens(self.states[i].clone())
    }

    pub fn bounds(&self) -> LengthBounds {
        LengthBounds {
            min: self.min_len,
            max: Some(self.max_len),
        }
    }
}

/// A toy space together with the scorers and sampler settings that define its chain.
#[derive(Clone)]
pub struct ToyModel {
    pub space: ToyStateSpace,
    pub bundle: ScorerBundle,
    pub config: SamplerConfig,
}

impl ToyModel {
    pub fn sampler(&self) -> Sampler<'_> {
        Sampler::new(self.bundle.scorers(), self.bundle.proposer(), self.config)
    }

    pub fn with_mutation(mut self, mutation: Option<KernelMutation>) -> Self {
        self.config.mutation = mutation;
        self
    }

    pub fn energies(&self) -> Result<Vec<f64>, ScorerError> {
        let s = self.sampler();
        (0..self.space.len())
            .map(|i| Ok(s.energy(&self.space.edit_state(i))?.total))
            .collect()
    }
}

/// Dense row-stochastic matrix over the states of a toy space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernelMatrix {
    n: usize,
    data: Vec<f64>,
    /// Largest deviation of enumerated forward mass (moves plus unproposable draws) from 1.
    pub max_row_error: f64,
}

impl TransitionKernelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * n, "square matrix required");
        Self {
            n,
            data,
            max_row_error: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Enumerates every move out of every state and accumulates `g · A` per destination; all
/// remaining mass (rejections, unproposable draws) stays on the diagonal.
pub fn build_exact_kernel(model: &ToyModel, max_entries: usize) -> Result<TransitionKernelMatrix, HarnessError> {
    let n = model.space.len();
    if n.saturating_mul(n) > max_entries {
        return Err(HarnessError::SpaceTooLarge {
            states: n,
            limit: max_entries,
        });
    }
    let sampler = model.sampler();
    let kernel = sampler.kernel();
    let energies: Vec<_> = (0..n)
        .map(|i| sampler.energy(&model.space.edit_state(i)))
        .collect::<Result<_, _>>()?;
    let mut data = vec![0.0; n * n];
    let mut max_row_error = 0.0f64;
    for i in 0..n {
        let state = model.space.edit_state(i);
        let positions = kernel.positions(&state)?;
        let moves = kernel.enumerate_moves(&state, &positions)?;
        let mass: f64 = moves.moves.iter().map(|(_, p)| p).sum::<f64>() + moves.unproposable;
        max_row_error = max_row_error.max((mass - 1.0).abs());
        let row = &mut data[i * n..(i + 1) * n];
        for (action, p) in &moves.moves {
            let proposal = match kernel.evaluate(&state, &positions, action) {
                Ok(p) => p,
                Err(ProposalError::Rejected(_)) => continue,
                Err(ProposalError::Scorer(e)) => return Err(e.into()),
                Err(ProposalError::Text(e)) => return Err(EngineError::Text(e).into()),
            };
            let j = model
                .space
                .index_of(proposal.new_state.tokens())
                .ok_or_else(|| HarnessError::OutsideSpace {
                    from: state.current().to_text(),
                    to: proposal.new_state.current().to_text(),
                })?;
            if model.config.mutation.is_none() && (proposal.forward_logprob - p.ln()).abs() > 1e-9 {
                return Err(HarnessError::Inconsistent {
                    state: state.current().to_text(),
                    enumerated: *p,
                    scored: proposal.forward_logprob.exp(),
                });
            }
            if j != i {
                let a = acceptance_ratio(
                    &energies[i],
                    &energies[j],
                    proposal.forward_logprob,
                    proposal.reverse_logprob,
                );
                row[j] += p * a;
            }
        }
        let off: f64 = row.iter().sum();
        row[i] = 1.0 - off;
    }
    Ok(TransitionKernelMatrix { n, data, max_row_error })
}

/// Normalized `π ∝ e^{−E}`.
pub fn boltzmann(energies: &[f64]) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (min - e).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `max_j |Σ_i π_i T_ij − π_j|`.
pub fn stationarity_residual(t: &TransitionKernelMatrix, energies: &[f64]) -> f64 {
    let pi = boltzmann(energies);
    let n = t.len();
    let mut flow = vec![0.0; n];
    for (i, &p) in pi.iter().enumerate() {
        for (f, &tij) in flow.iter_mut().zip(t.row(i)) {
            *f += p * tij;
        }
    }
    flow.iter().zip(&pi).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max)
}

/// `max_{i≠j} |π_i T_ij − π_j T_ji|`.
pub fn detailed_balance_violation(t: &TransitionKernelMatrix, energies: &[f64]) -> f64 {
    let pi = boltzmann(energies);
    let mut worst = 0.0f64;
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            worst = worst.max((pi[i] * t.get(i, j) - pi[j] * t.get(j, i)).abs());
        }
    }
    worst
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for (j, s) in seen.iter_mut().enumerate() {
            if !*s && edge(i, j) {
                *s = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Strong connectivity of the graph of positive off-diagonal entries.
pub fn is_irreducible(t: &TransitionKernelMatrix) -> bool {
    let n = t.len();
    n == 0 || (reaches_all(n, |i, j| t.get(i, j) > 0.0) && reaches_all(n, |i, j| t.get(j, i) > 0.0))
}

/// Positive self-loop probability everywhere (sufficient for aperiodicity).
pub fn is_aperiodic(t: &TransitionKernelMatrix) -> bool {
    (0..t.len()).all(|i| t.get(i, i) > 0.0)
}

/// Total-variation distance between the state histogram of one long chain (first 10% of
/// steps discarded) and the exact target.
pub fn empirical_distribution_check(model: &ToyModel, n_steps: usize, seed: u64) -> Result<f64, HarnessError> {
    let sampler = model.sampler();
    let pi = boltzmann(&model.energies()?);
    let start = model
        .space
        .index_of(model.space.original.tokens())
        .expect("original lies in the space");
    let mut chain = sampler.start(model.space.edit_state(start))?;
    let mut rng = chain_rng(seed);
    let burn_in = n_steps / 10;
    let mut counts = vec![0usize; model.space.len()];
    for it in 0..n_steps {
        chain = sampler.step(chain, it, &mut rng)?.0;
        if it >= burn_in {
            let j = model
                .space
                .index_of(chain.state.tokens())
                .ok_or_else(|| HarnessError::OutsideSpace {
                    from: String::new(),
                    to: chain.state.current().to_text(),
                })?;
            counts[j] += 1;
        }
    }
    let kept = (n_steps - burn_in).max(1) as f64;
    Ok(0.5
        * counts
            .iter()
            .zip(&pi)
            .map(|(&c, p)| (c as f64 / kept - p).abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinSpace {
    /// Fixed length 2 over three tokens, uniform positions and contents: a symmetric proposal.
    Symmetric,
    /// Up to three tokens over three words with one two-token entity (39 states).
    Small,
    /// Up to four tokens over four words with two two-token entities (340 states).
    Full,
    /// A single state.
    Single,
}

impl BuiltinSpace {
    pub const ALL: [BuiltinSpace; 4] = [Self::Symmetric, Self::Small, Self::Full, Self::Single];

    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetric => "symmetric",
            Self::Small => "small",
            Self::Full => "full",
            Self::Single => "single",
        }
    }

    /// Accepts the names above, plus `single-state`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "single-state" {
            return Some(Self::Single);
        }
        Self::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Residual tolerance for this space.
    pub fn residual_tolerance(self) -> f64 {
        match self {
            Self::Symmetric | Self::Single => 1e-9,
            _ => 1e-6,
        }
    }

    pub fn model(self) -> ToyModel {
        match self {
            Self::Symmetric => {
                let space = ToyStateSpace::new("symmetric", &["p", "q", "r"], 2, 2, &[], "p q", &["p q"]);
                let vocab: Vec<&str> = vec!["p", "q", "r"];
                reference_model(space, &vocab, &[&["p", "q"], &["q", "r"]], true)
            }
            Self::Small => {
                let space = ToyStateSpace::new("small", &["p", "q", "r"], 1, 3, &["q r"], "p r", &["p q"]);
                reference_model(space, &["p", "q", "r"], &[&["p", "q", "r"], &["q", "r"]], false)
            }
            Self::Full => {
                let space = ToyStateSpace::new(
                    "full",
                    &["p", "q", "r", "s"],
                    1,
                    4,
                    &["q r", "s p"],
                    "s p r",
                    &["s p q"],
                );
                reference_model(
                    space,
                    &["p", "q", "r", "s"],
                    &[&["s", "p", "q"], &["q", "r", "p"], &["s", "p"]],
                    false,
                )
            }
            Self::Single => {
                let space = ToyStateSpace::new("single", &["p"], 1, 1, &[], "p", &["p"]);
                reference_model(space, &["p"], &[&["p"]], false)
            }
        }
    }
}

fn reference_model(space: ToyStateSpace, vocab: &[&str], corpus: &[&[&str]], uniform: bool) -> ToyModel {
    let mut lm = NGramMLM::with_vocab(2, 0.5, vocab);
    for s in corpus {
        lm.train_sentence(s);
    }
    let lm = Arc::new(lm);
    let verifier = Arc::new(LexicalVerifier::new(10.0, 0.5));
    let bundle = if uniform {
        ScorerBundle {
            fluency: lm,
            verifier,
            saliency: Arc::new(UniformSaliency),
            proposer: Arc::new(UniformProposer::new(vocab.iter().copied())),
        }
    } else {
        ScorerBundle {
            fluency: lm.clone(),
            verifier: verifier.clone(),
            saliency: Arc::new(OcclusionSaliency::new(verifier)),
            proposer: Arc::new(ReferenceProposer::new(lm).with_lm_weight(1.0).with_evidence_bonus(0.5)),
        }
    };
    let config = SamplerConfig {
        bounds: space.bounds(),
        // a light distance term keeps downhill moves likely enough that every kernel
        // mutation shifts the stationary flow well past the detection threshold
        weights: EnergyWeights::new(2.0, 2.0, 0.2).expect("valid weights"),
        ..SamplerConfig::default()
    };
    ToyModel { space, bundle, config }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaceReport {
    pub space: BuiltinSpace,
    pub states: usize,
    pub residual: f64,
    pub residual_tolerance: f64,
    pub detailed_balance: f64,
    pub row_error: f64,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub tv: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MutationReport {
    pub mutation: KernelMutation,
    pub residual: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub spaces: Vec<SpaceReport>,
    pub mutations: Vec<MutationReport>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct SelfCheckOptions {
    pub spaces: Vec<BuiltinSpace>,
    pub empirical_steps: usize,
    pub seed: u64,
    /// Applied to every space under test; a correct harness must then fail.
    pub mutation: Option<KernelMutation>,
    pub mutation_tests: bool,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            spaces: BuiltinSpace::ALL.to_vec(),
            empirical_steps: 100_000,
            seed: 0,
            mutation: None,
            mutation_tests: true,
        }
    }
}

pub const DETAILED_BALANCE_TOLERANCE: f64 = 1e-9;
pub const ROW_TOLERANCE: f64 = 1e-9;
pub const TV_TOLERANCE: f64 = 0.05;
pub const MUTATION_THRESHOLD: f64 = 1e-3;
pub const MUTATIONS: [KernelMutation; 3] = [
    KernelMutation::CorruptReverse,
    KernelMutation::DropAlpha,
    KernelMutation::StaleReverseP1,
];

pub fn check_space(space: BuiltinSpace, opts: &SelfCheckOptions) -> Result<SpaceReport, HarnessError> {
    let model = space.model().with_mutation(opts.mutation);
    let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES)?;
    let e = model.energies()?;
    let residual = stationarity_residual(&t, &e);
    let detailed_balance = detailed_balance_violation(&t, &e);
    let row_error = t.max_row_error.max(t.max_row_sum_error());
    let tv = if opts.empirical_steps > 0 {
        Some(empirical_distribution_check(&model, opts.empirical_steps, opts.seed)?)
    } else {
        None
    };
    let irreducible = is_irreducible(&t);
    let aperiodic = is_aperiodic(&t);
    let tol = space.residual_tolerance();
    let passed = residual <= tol
        && detailed_balance <= DETAILED_BALANCE_TOLERANCE
        && row_error <= ROW_TOLERANCE
        && irreducible
        && aperiodic
        && tv.is_none_or(|v| v <= TV_TOLERANCE);
    Ok(SpaceReport {
        space,
        states: t.len(),
        residual,
        residual_tolerance: tol,
        detailed_balance,
        row_error,
        irreducible,
        aperiodic,
        tv,
        passed,
    })
}

/// Stationarity residual of the small space under `mutation`.
pub fn mutation_residual(mutation: KernelMutation) -> Result<f64, HarnessError> {
    let model = BuiltinSpace::Small.model().with_mutation(Some(mutation));
    let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES)?;
    Ok(stationarity_residual(&t, &model.energies()?))
}

pub fn selfcheck(opts: &SelfCheckOptions) -> Result<SelfCheckReport, HarnessError> {
    let spaces = opts
        .spaces
        .iter()
        .map(|&s| check_space(s, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mutations = if opts.mutation_tests {
        MUTATIONS
            .iter()
            .map(|&m| {
                let residual = mutation_residual(m)?;
                Ok(MutationReport {
                    mutation: m,
                    residual,
                    detected: residual > MUTATION_THRESHOLD,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?
    } else {
        Vec::new()
    };
    let passed = spaces.iter().all(|s| s.passed) && mutations.iter().all(|m| m.detected);
    Ok(SelfCheckReport {
        spaces,
        mutations,
        passed,
    })
}

/// Outcome of [`reverse_consistency_fuzz`].
#[derive(Debug, Clone, Serialize)]
pub struct ReverseFuzzReport {
    pub steps: usize,
    /// Steps that produced a proposal (the rest were rejected before scoring).
    pub proposals: usize,
    /// Proposals whose reverse log-probability matched within the tolerance.
    pub consistent: usize,
    pub max_error: f64,
    /// Proposals whose reverse move did not lead back to the starting claim.
    pub broken_reverses: usize,
}

impl ReverseFuzzReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.proposals > 0
            && self.consistent == self.proposals
            && self.max_error <= tolerance
            && self.broken_reverses == 0
    }
}

pub const REVERSE_TOLERANCE: f64 = 1e-12;

/// Draws `steps` proposals along random walks over synthetic claims and checks each
/// proposal's reverse log-probability against the probability of the reverse move found by
/// enumerating every move out of the proposed claim, with positions recomputed from scratch.
/// The walk takes each proposed move with probability one half, so it visits claims the
/// sampler itself would rarely reach.
pub fn reverse_consistency_fuzz(
    steps: usize,
    seed: u64,
    mutation: Option<KernelMutation>,
) -> Result<ReverseFuzzReport, HarnessError> {
    use rand::seq::SliceRandom;
    use rand::Rng;

    let background = crate::synth::background_corpus();
    let reference = crate::synth::reference_config();
    let mut instances = crate::synth::planted_errors(20, seed);
    instances.extend(crate::synth::supported_claims(5, seed ^ 1));
    let per_instance = steps.div_ceil(instances.len().max(1));
    let mut rng = chain_rng(seed);
    let mut report = ReverseFuzzReport {
        steps: 0,
        proposals: 0,
        consistent: 0,
        max_error: 0.0,
        broken_reverses: 0,
    };
    instances.shuffle(&mut rng);
    for inst in &instances {
        let evidence = Arc::new(inst.evidence_set());
        let bundle = crate::scorers::reference_bundle(&inst.claim, &evidence, &background, &reference);
        let config = SamplerConfig {
            mutation,
            ..SamplerConfig::default()
        };
        let sampler = Sampler::new(bundle.scorers(), bundle.proposer(), config);
        let kernel = sampler.kernel();
        let mut state = EditState::initial(inst.claim.clone(), evidence).map_err(EngineError::from)?;
        for _ in 0..per_instance {
            if report.steps == steps {
                return Ok(report);
            }
            report.steps += 1;
            let positions = kernel.positions(&state)?;
            let proposal = match kernel.propose(&state, &positions, &mut rng) {
                Ok(p) => p,
                Err(ProposalError::Rejected(_)) => continue,
                Err(ProposalError::Scorer(e)) => return Err(e.into()),
                Err(ProposalError::Text(e)) => return Err(EngineError::from(e).into()),
            };
            report.proposals += 1;
            let back =
                crate::text::apply_edit(&proposal.new_state, &proposal.reverse_action).map_err(EngineError::from)?;
            if back.tokens() != state.tokens() {
                report.broken_reverses += 1;
            }
            let fresh = kernel.positions(&proposal.new_state)?;
            let moves = kernel.enumerate_moves(&proposal.new_state, &fresh)?;
            let p = moves
                .moves
                .iter()
                .find(|(a, _)| *a == proposal.reverse_action)
                .map_or(0.0, |(_, p)| *p);
            let err = (p.ln() - proposal.reverse_logprob).abs();
            let err = if err.is_nan() { f64::INFINITY } else { err };
            report.max_error = report.max_error.max(err);
            if err <= REVERSE_TOLERANCE {
                report.consistent += 1;
            }
            if rng.gen::<bool>() {
                state = proposal.new_state;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::pi_ratio;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(BuiltinSpace::Small.model().space.len(), 39);
        assert_eq!(BuiltinSpace::Full.model().space.len(), 340);
        assert_eq!(BuiltinSpace::Symmetric.model().space.len(), 9);
        assert_eq!(BuiltinSpace::Single.model().space.len(), 1);
    }

    #[test]
    fn hand_built_slice() {
        let model = BuiltinSpace::Symmetric.model();
        let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
        let s = model.sampler();
        let i = model.space.index_of(&toks("p q")).unwrap();
        let j = model.space.index_of(&toks("p r")).unwrap();
        let ei = s.energy(&model.space.edit_state(i)).unwrap();
        let ej = s.energy(&model.space.edit_state(j)).unwrap();
        // P₁ = 1/2, P₂ = 1/3, P₃ = 1/3, A = min(1, π_j/π_i)
        let g = 0.5 * (1.0 / 3.0) * (1.0 / 3.0);
        assert!((t.get(i, j) - g * pi_ratio(&ej, &ei).min(1.0)).abs() < 1e-15);
        assert!((t.get(j, i) - g * pi_ratio(&ei, &ej).min(1.0)).abs() < 1e-15);
        // "p q" → "r r" needs two edits
        let k = model.space.index_of(&toks("r r")).unwrap();
        assert_eq!(t.get(i, k), 0.0);
    }

    #[test]
    fn symmetric_space_is_exact() {
        let model = BuiltinSpace::Symmetric.model();
        let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
        let e = model.energies().unwrap();
        assert!(t.max_row_sum_error() < 1e-12);
        assert!(stationarity_residual(&t, &e) <= 1e-9);
        assert!(detailed_balance_violation(&t, &e) <= 1e-12);
        assert!(is_irreducible(&t) && is_aperiodic(&t));
    }

    #[test]
    fn single_state_space() {
        let model = BuiltinSpace::Single.model();
        let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
        assert_eq!(empirical_distribution_check(&model, 1000, 1).unwrap(), 0.0);
    }

    #[test]
    fn oversized_space_is_refused() {
        let model = BuiltinSpace::Small.model();
        assert!(matches!(
            build_exact_kernel(&model, 100),
            Err(HarnessError::SpaceTooLarge { states: 39, .. })
        ));
    }

    #[test]
    fn small_and_full_spaces_balance() {
        for space in [BuiltinSpace::Small, BuiltinSpace::Full] {
            let model = space.model();
            let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
            let e = model.energies().unwrap();
            assert!(t.max_row_error < 1e-12, "{:?}", space);
            let r = stationarity_residual(&t, &e);
            let db = detailed_balance_violation(&t, &e);
            assert!(r <= 1e-9, "{space:?} residual {r}");
            assert!(db <= 1e-12, "{space:?} detailed balance {db}");
            assert!(is_irreducible(&t), "{space:?} not irreducible");
            assert!(is_aperiodic(&t));
        }
    }

    #[test]
    fn mutations_break_stationarity() {
        for m in MUTATIONS {
            let r = mutation_residual(m).unwrap();
            assert!(r > MUTATION_THRESHOLD, "{m:?} residual {r}");
        }
    }

    #[test]
    fn length_one_state_has_a_valid_row() {
        let model = BuiltinSpace::Small.model();
        let t = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
        let i = model.space.index_of(&toks("q")).unwrap();
        assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.row(i).iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn reducible_matrix_is_flagged() {
        let t = TransitionKernelMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(!is_irreducible(&t));
        let t = TransitionKernelMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(is_irreducible(&t));
        assert!(!is_aperiodic(&t));
    }
}
