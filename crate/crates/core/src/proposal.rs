//! The transition kernel `g(x′|x) = P₁(position|x) · P₂(action) · P₃(content|x masked, action)`.
//!
//! Positions are units (for replace/delete) or gaps between units (for insert). Content is
//! drawn from one of two separate spaces: single tokens, or whole candidate entities taken
//! from the evidence gazetteer. Every move has a unique reverse move:
//!
//! | move                         | reverse                                  |
//! |------------------------------|------------------------------------------|
//! | replace unit with `c`        | replace the unit now spanning `c` back   |
//! | insert `c` at a gap          | delete the unit now spanning `c`         |
//! | delete a unit                | insert its tokens at the vacated gap     |
//!
//! A move whose reverse does not exist after re-segmentation (for example, a token insert
//! that completes a gazetteer entity, so the inserted token is no longer its own unit) is
//! rejected outright. That keeps the move/reverse pairing an involution, which is what makes
//! per-move Metropolis-Hastings acceptance exact.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorers::{softmax, MaskedSequence, Proposer, SaliencyModel, ScorerError, TokenDistribution};
use crate::text::{apply_edit, EditAction, EditKind, EditState, Space, TextError, UnitKind};

/// `P₂(a)` for each of insert, delete, replace.
pub const ACTION_PROB: f64 = 1.0 / 3.0;

/// Relative saliency floor: `ε = SMOOTHING · max(1, max_i s_i)`.
pub const SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Deleting the only unit.
    EmptyResult,
    /// Entity branch chosen with an empty candidate space.
    NoCandidates,
    /// Re-segmentation of the proposed claim breaks the reverse move.
    Irreversible,
    /// Proposed claim length outside the configured bounds.
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposalError {
    #[error("proposal rejected: {0:?}")]
    Rejected(RejectReason),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// Inclusive claim-length limits for the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBounds {
    pub min: usize,
    pub max: Option<usize>,
}

impl Default for LengthBounds {
    fn default() -> Self {
        Self { min: 1, max: None }
    }
}

impl LengthBounds {
    pub fn contains(&self, len: usize) -> bool {
        len >= self.min && self.max.is_none_or(|m| len <= m)
    }
}

/// Deliberate kernel defects, used to show the stationarity checks can detect them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMutation {
    /// Adds 0.1 to the reverse log-probability of replacements.
    CorruptReverse,
    /// Leaves the α / (1−α) mixture weight out of forward insertion probabilities.
    DropAlpha,
    /// Reuses the forward position probability for the reverse move instead of
    /// recomputing it on the proposed claim.
    StaleReverseP1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSettings {
    /// Probability of the entity branch for insertions.
    pub alpha: f64,
    pub bounds: LengthBounds,
    pub mutation: Option<KernelMutation>,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            bounds: LengthBounds::default(),
            mutation: None,
        }
    }
}

/// `P₁` over units and insertion gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    pub token_probs: Vec<f64>,
    pub unit_probs: Vec<f64>,
    pub gap_probs: Vec<f64>,
}

/// Smoothed, normalized saliency per token; an entity unit gets the sum over its tokens.
/// Gaps are uniform.
pub fn position_distribution(
    state: &EditState,
    saliency: &dyn SaliencyModel,
) -> Result<PositionDistribution, ScorerError> {
    let s = saliency.token_saliency(state.tokens(), state.evidence())?;
    position_distribution_from_saliency(state, &s)
}

pub fn position_distribution_from_saliency(state: &EditState, s: &[f64]) -> Result<PositionDistribution, ScorerError> {
    if s.len() != state.tokens().len() {
        return Err(ScorerError::Protocol(format!(
            "saliency length {} for {} tokens",
            s.len(),
            state.tokens().len()
        )));
    }
    if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(ScorerError::Protocol("saliency must be finite and non-negative".into()));
    }
    let max = s.iter().copied().fold(1.0f64, f64::max);
    let eps = SMOOTHING * max;
    let z: f64 = s.iter().map(|x| x + eps).sum();
    let token_probs: Vec<f64> = s.iter().map(|x| (x + eps) / z).collect();
    let unit_probs = state
        .units()
        .iter()
        .map(|u| token_probs[u.start..u.end].iter().sum())
        .collect();
    let gaps = state.segmentation().gap_count();
    Ok(PositionDistribution {
        token_probs,
        unit_probs,
        gap_probs: vec![1.0 / gaps as f64; gaps],
    })
}

/// Categorical draw by inversion with one uniform.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn sample_action<R: Rng + ?Sized>(rng: &mut R) -> EditKind {
    let u: f64 = rng.gen();
    EditKind::ALL[((u * 3.0) as usize).min(2)]
}

/// The three log-factors of one move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProbFactors {
    pub position: f64,
    pub action: f64,
    pub content: f64,
}

impl LogProbFactors {
    pub fn total(&self) -> f64 {
        self.position + self.action + self.content
    }
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub action: EditAction,
    pub new_state: EditState,
    pub reverse_action: EditAction,
    pub forward: LogProbFactors,
    pub reverse: LogProbFactors,
    /// `ln g(x′|x)`
    pub forward_logprob: f64,
    /// `ln g(x|x′)`
    pub reverse_logprob: f64,
    /// `P₁` on the proposed claim, reusable if the move is accepted.
    pub new_positions: PositionDistribution,
}

/// Moves out of one state with their forward probabilities.
#[derive(Debug, Clone)]
pub struct MoveSet {
    pub moves: Vec<(EditAction, f64)>,
    /// Probability of draws that cannot form a move (deleting the only unit, or an entity
    /// insertion with no candidates).
    pub unproposable: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Forward,
    Reverse,
}

/// Entity candidates in a fixed order.
pub fn candidates(state: &EditState) -> Vec<Vec<String>> {
    state.evidence().gazetteer().entries().cloned().collect()
}

/// The reverse of `action` (taking `old` to `new`), if re-segmentation of `new` keeps it
/// well-defined.
pub fn reverse_action(old: &EditState, action: &EditAction, new: &EditState) -> Option<EditAction> {
    let new_seg = new.segmentation();
    let find = |start: usize, len: usize, space: Space| {
        new_seg
            .units()
            .iter()
            .position(|u| u.start == start && u.len() == len && space.matches(u.kind))
    };
    match action.kind {
        EditKind::Replace => {
            let span = *old.units().get(action.unit_index)?;
            let len = action.content.as_ref()?.len();
            let u = find(span.start, len, action.space)?;
            Some(EditAction::replace(
                u,
                old.unit_tokens(action.unit_index).to_vec(),
                action.space,
            ))
        }
        EditKind::Insert => {
            let at = old.segmentation().gap_offset(action.unit_index)?;
            let len = action.content.as_ref()?.len();
            let u = find(at, len, action.space)?;
            Some(EditAction::delete(u, action.space))
        }
        EditKind::Delete => {
            let span = *old.units().get(action.unit_index)?;
            let gap = new_seg.gap_at_offset(span.start)?;
            Some(EditAction::insert(
                gap,
                old.unit_tokens(action.unit_index).to_vec(),
                action.space,
            ))
        }
    }
}

/// Borrowed proposal machinery for one chain.
#[derive(Clone, Copy)]
pub struct Kernel<'a> {
    pub saliency: &'a dyn SaliencyModel,
    pub proposer: &'a dyn Proposer,
    pub settings: KernelSettings,
}

impl<'a> Kernel<'a> {
    pub fn new(saliency: &'a dyn SaliencyModel, proposer: &'a dyn Proposer, settings: KernelSettings) -> Self {
        Self {
            saliency,
            proposer,
            settings,
        }
    }

    pub fn positions(&self, state: &EditState) -> Result<PositionDistribution, ScorerError> {
        position_distribution(state, self.saliency)
    }

    fn unit_mask(state: &EditState, unit: usize) -> MaskedSequence {
        let u = state.units()[unit];
        MaskedSequence::new(state.tokens(), u.start, u.end)
    }

    fn gap_mask(state: &EditState, gap: usize) -> MaskedSequence {
        let at = state.segmentation().gap_offset(gap).expect("valid gap");
        MaskedSequence::new(state.tokens(), at, at)
    }

    /// Candidates and their normalized probabilities for a masked slot.
    pub fn entity_distribution(
        &self,
        state: &EditState,
        masked: &MaskedSequence,
    ) -> Result<(Vec<Vec<String>>, Vec<f64>), ScorerError> {
        let cands = candidates(state);
        if cands.is_empty() {
            return Ok((cands, Vec::new()));
        }
        let scores = self.proposer.entity_scores(masked, state.evidence(), &cands)?;
        if scores.len() != cands.len() {
            return Err(ScorerError::Protocol("entity score count mismatch".into()));
        }
        let probs = softmax(&scores);
        Ok((cands, probs))
    }

    pub fn token_distribution(
        &self,
        state: &EditState,
        masked: &MaskedSequence,
    ) -> Result<TokenDistribution, ScorerError> {
        self.proposer.token_dist(masked, state.evidence())
    }

    fn entity_prob(&self, state: &EditState, masked: &MaskedSequence, content: &[String]) -> Result<f64, ScorerError> {
        let (cands, probs) = self.entity_distribution(state, masked)?;
        Ok(cands
            .iter()
            .position(|c| c.as_slice() == content)
            .map_or(0.0, |i| probs[i]))
    }

    fn token_prob(&self, state: &EditState, masked: &MaskedSequence, content: &[String]) -> Result<f64, ScorerError> {
        if content.len() != 1 {
            return Ok(0.0);
        }
        Ok(self.token_distribution(state, masked)?.prob(&content[0]))
    }

    fn check_shape(state: &EditState, action: &EditAction) -> Result<(), ProposalError> {
        let invalid = |m: String| ProposalError::Text(TextError::InvalidAction(m));
        match action.kind {
            EditKind::Replace | EditKind::Delete => {
                let u = state
                    .units()
                    .get(action.unit_index)
                    .ok_or_else(|| invalid(format!("unit {} out of range", action.unit_index)))?;
                if !action.space.matches(u.kind) {
                    return Err(invalid(format!(
                        "{:?} space does not match unit kind {:?}",
                        action.space, u.kind
                    )));
                }
            }
            EditKind::Insert => {
                if action.unit_index >= state.segmentation().gap_count() {
                    return Err(invalid(format!("gap {} out of range", action.unit_index)));
                }
            }
        }
        match (&action.kind, &action.content) {
            (EditKind::Delete, None) => Ok(()),
            (EditKind::Delete, Some(_)) => Err(invalid("delete carries no content".into())),
            (_, Some(c)) if !c.is_empty() && (action.space == Space::Entity || c.len() == 1) => Ok(()),
            _ => Err(invalid("content must be one token or one entity".into())),
        }
    }

    fn factors(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        action: &EditAction,
        role: Role,
    ) -> Result<LogProbFactors, ProposalError> {
        Self::check_shape(state, action)?;
        let alpha = self.settings.alpha;
        let drop_alpha = role == Role::Forward && self.settings.mutation == Some(KernelMutation::DropAlpha);
        let (position, content) = match action.kind {
            EditKind::Delete => (positions.unit_probs[action.unit_index].ln(), 0.0),
            EditKind::Replace => {
                let masked = Self::unit_mask(state, action.unit_index);
                let c = action.content.as_deref().unwrap_or_default();
                let p = match action.space {
                    Space::Entity => self.entity_prob(state, &masked, c)?,
                    Space::Token => self.token_prob(state, &masked, c)?,
                };
                (positions.unit_probs[action.unit_index].ln(), p.ln())
            }
            EditKind::Insert => {
                let masked = Self::gap_mask(state, action.unit_index);
                let c = action.content.as_deref().unwrap_or_default();
                let (weight, p) = match action.space {
                    Space::Entity => (alpha, self.entity_prob(state, &masked, c)?),
                    Space::Token => (1.0 - alpha, self.token_prob(state, &masked, c)?),
                };
                let mixed = if drop_alpha { p } else { weight * p };
                (positions.gap_probs[action.unit_index].ln(), mixed.ln())
            }
        };
        Ok(LogProbFactors {
            position,
            action: ACTION_PROB.ln(),
            content,
        })
    }

    /// `ln g` of a specific move out of `state`, factor by factor.
    pub fn move_logprob(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        action: &EditAction,
    ) -> Result<LogProbFactors, ProposalError> {
        self.factors(state, positions, action, Role::Forward)
    }

    /// Builds the full proposal for a fixed move: applies it, checks the reverse exists and
    /// scores both directions, recomputing `P₁` on the proposed claim.
    pub fn evaluate(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        action: &EditAction,
    ) -> Result<Proposal, ProposalError> {
        Self::check_shape(state, action)?;
        if action.kind == EditKind::Delete && state.units().len() < 2 {
            return Err(ProposalError::Rejected(RejectReason::EmptyResult));
        }
        let new_state = apply_edit(state, action)?;
        if !self.settings.bounds.contains(new_state.tokens().len()) {
            return Err(ProposalError::Rejected(RejectReason::OutOfBounds));
        }
        let reverse_action =
            reverse_action(state, action, &new_state).ok_or(ProposalError::Rejected(RejectReason::Irreversible))?;
        let forward = self.factors(state, positions, action, Role::Forward)?;
        let new_positions = if new_state.tokens() == state.tokens() {
            positions.clone()
        } else {
            self.positions(&new_state)?
        };
        let mut reverse = self.factors(&new_state, &new_positions, &reverse_action, Role::Reverse)?;
        match self.settings.mutation {
            Some(KernelMutation::CorruptReverse) if action.kind == EditKind::Replace => reverse.content += 0.1,
            Some(KernelMutation::StaleReverseP1) => reverse.position = forward.position,
            _ => {}
        }
        Ok(Proposal {
            forward_logprob: forward.total(),
            reverse_logprob: reverse.total(),
            action: action.clone(),
            new_state,
            reverse_action,
            forward,
            reverse,
            new_positions,
        })
    }

    /// Replacement of `unit`: an entity unit draws a whole candidate entity, a token unit
    /// draws a token.
    pub fn propose_replace<R: Rng + ?Sized>(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        unit: usize,
        rng: &mut R,
    ) -> Result<Proposal, ProposalError> {
        let span = *state
            .units()
            .get(unit)
            .ok_or_else(|| TextError::InvalidAction(format!("unit {unit} out of range")))?;
        let masked = Self::unit_mask(state, unit);
        let action = match span.kind {
            UnitKind::Entity => {
                let (cands, probs) = self.entity_distribution(state, &masked)?;
                if cands.is_empty() {
                    return Err(ProposalError::Rejected(RejectReason::NoCandidates));
                }
                let i = sample_index(&probs, rng);
                EditAction::replace(unit, cands[i].clone(), Space::Entity)
            }
            UnitKind::Token => {
                let d = self.token_distribution(state, &masked)?;
                let probs: Vec<f64> = d.probs().collect();
                let i = sample_index(&probs, rng);
                EditAction::replace(unit, vec![d.entries()[i].0.clone()], Space::Token)
            }
        };
        self.evaluate(state, positions, &action)
    }

    /// Insertion at `gap`: entity branch with probability α, token branch otherwise.
    pub fn propose_insert<R: Rng + ?Sized>(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        gap: usize,
        rng: &mut R,
    ) -> Result<Proposal, ProposalError> {
        if gap >= state.segmentation().gap_count() {
            return Err(TextError::InvalidAction(format!("gap {gap} out of range")).into());
        }
        let masked = Self::gap_mask(state, gap);
        let branch: f64 = rng.gen();
        let action = if branch < self.settings.alpha {
            let (cands, probs) = self.entity_distribution(state, &masked)?;
            if cands.is_empty() {
                return Err(ProposalError::Rejected(RejectReason::NoCandidates));
            }
            let i = sample_index(&probs, rng);
            EditAction::insert(gap, cands[i].clone(), Space::Entity)
        } else {
            let d = self.token_distribution(state, &masked)?;
            let probs: Vec<f64> = d.probs().collect();
            let i = sample_index(&probs, rng);
            EditAction::insert(gap, vec![d.entries()[i].0.clone()], Space::Token)
        };
        self.evaluate(state, positions, &action)
    }

    pub fn propose_delete(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        unit: usize,
    ) -> Result<Proposal, ProposalError> {
        let span = *state
            .units()
            .get(unit)
            .ok_or_else(|| TextError::InvalidAction(format!("unit {unit} out of range")))?;
        if state.units().len() < 2 {
            return Err(ProposalError::Rejected(RejectReason::EmptyResult));
        }
        self.evaluate(state, positions, &EditAction::delete(unit, span.kind.into()))
    }

    /// One draw from `g(·|x)`: action, then position (a unit, or a gap for insertion), then
    /// content. Uses one uniform per stage.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        state: &EditState,
        positions: &PositionDistribution,
        rng: &mut R,
    ) -> Result<Proposal, ProposalError> {
        match sample_action(rng) {
            EditKind::Insert => {
                let gap = sample_index(&positions.gap_probs, rng);
                self.propose_insert(state, positions, gap, rng)
            }
            EditKind::Delete => {
                let unit = sample_index(&positions.unit_probs, rng);
                self.propose_delete(state, positions, unit)
            }
            EditKind::Replace => {
                let unit = sample_index(&positions.unit_probs, rng);
                self.propose_replace(state, positions, unit, rng)
            }
        }
    }

    /// Every move out of `state` with non-zero forward probability.
    pub fn enumerate_moves(&self, state: &EditState, positions: &PositionDistribution) -> Result<MoveSet, ScorerError> {
        let alpha = self.settings.alpha;
        let mut moves = Vec::new();
        let mut unproposable = 0.0;
        let units = state.units();

        for (u, span) in units.iter().enumerate() {
            let p_unit = positions.unit_probs[u] * ACTION_PROB;
            if units.len() >= 2 {
                moves.push((EditAction::delete(u, span.kind.into()), p_unit));
            } else {
                unproposable += p_unit;
            }
            let masked = Self::unit_mask(state, u);
            match span.kind {
                UnitKind::Entity => {
                    let (cands, probs) = self.entity_distribution(state, &masked)?;
                    for (c, p) in cands.into_iter().zip(probs) {
                        if p > 0.0 {
                            moves.push((EditAction::replace(u, c, Space::Entity), p_unit * p));
                        }
                    }
                }
                UnitKind::Token => {
                    for (t, p) in self.token_distribution(state, &masked)?.entries() {
                        if *p > 0.0 {
                            moves.push((EditAction::replace(u, vec![t.clone()], Space::Token), p_unit * p));
                        }
                    }
                }
            }
        }
        for gap in 0..state.segmentation().gap_count() {
            let p_gap = positions.gap_probs[gap] * ACTION_PROB;
            let masked = Self::gap_mask(state, gap);
            let (cands, probs) = self.entity_distribution(state, &masked)?;
            if cands.is_empty() {
                unproposable += p_gap * alpha;
            }
            for (c, p) in cands.into_iter().zip(probs) {
                if p > 0.0 {
                    moves.push((EditAction::insert(gap, c, Space::Entity), p_gap * alpha * p));
                }
            }
            for (t, p) in self.token_distribution(state, &masked)?.entries() {
                if *p > 0.0 {
                    moves.push((
                        EditAction::insert(gap, vec![t.clone()], Space::Token),
                        p_gap * (1.0 - alpha) * p,
                    ));
                }
            }
        }
        Ok(MoveSet { moves, unproposable })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scorers::{UniformProposer, UniformSaliency};
    use crate::text::{EvidenceSet, Gazetteer, TokenSequence};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    struct Fixed(Vec<f64>);
    impl SaliencyModel for Fixed {
        fn token_saliency(&self, _: &[String], _: &EvidenceSet) -> Result<Vec<f64>, ScorerError> {
            Ok(self.0.clone())
        }
    }

    fn state(s: &str, entities: &[&str]) -> EditState {
        let g = Gazetteer::new(entities.iter().map(|e| toks(e)));
        let ev = EvidenceSet::with_gazetteer(vec![], g);
        EditState::initial(TokenSequence::new(toks(s)).unwrap(), Arc::new(ev)).unwrap()
    }

    #[test]
    fn uniform_saliency_gives_uniform_units() {
        let st = state("a b c d", &[]);
        let p = position_distribution(&st, &Fixed(vec![1.0; 4])).unwrap();
        for q in &p.unit_probs {
            assert!((q - 0.25).abs() < 1e-12);
        }
        assert_eq!(p.gap_probs, vec![0.2; 5]);
    }

    #[test]
    fn entity_probability_is_token_sum() {
        // saliencies chosen so smoothed token probs are [0.1, 0.2, 0.3, 0.4]
        let st = state("a b c d", &["b c"]);
        let p = position_distribution_from_saliency(&st, &[100.0, 200.0, 300.0, 400.0]).unwrap();
        let eps = 0.4; // 1e-3 * 400
        let z = 1000.0 + 4.0 * eps;
        let expect = [(100.0 + eps) / z, (500.0 + 2.0 * eps) / z, (400.0 + eps) / z];
        for (a, b) in p.unit_probs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.unit_probs[1] - 0.5).abs() < 1e-3);
        assert!((p.unit_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_saliency_is_smoothed() {
        let st = state("a b", &[]);
        let p = position_distribution(&st, &Fixed(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.unit_probs, vec![0.5, 0.5]);
        assert!(position_distribution(&st, &Fixed(vec![0.0])).is_err());
        assert!(position_distribution(&st, &Fixed(vec![-1.0, 0.0])).is_err());
    }

    #[test]
    fn action_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0usize; 3];
        let n = 300_000;
        for _ in 0..n {
            let k = sample_action(&mut rng);
            counts[EditKind::ALL.iter().position(|x| *x == k).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    fn kernel<'a>(sal: &'a dyn SaliencyModel, prop: &'a dyn Proposer) -> Kernel<'a> {
        Kernel::new(sal, prop, KernelSettings::default())
    }

    #[test]
    fn forward_factors_multiply() {
        // P₁ = 0.5 (2 units, uniform), P₃ = 0.2 (5 tokens): g = 1/30
        let st = state("a b", &[]);
        let prop = UniformProposer::new(["a", "b", "c", "d", "e"]);
        let k = kernel(&UniformSaliency, &prop);
        let pos = k.positions(&st).unwrap();
        let f = k
            .move_logprob(&st, &pos, &EditAction::replace(0, toks("c"), Space::Token))
            .unwrap();
        assert!((f.total().exp() - 1.0 / 30.0).abs() < 1e-15);

        // gap prob 0.25 (3 units), token branch 0.5, P_tok 0.4: g = 1/60
        let st = state("a b c", &[]);
        let prop = UniformProposer::new(["a", "b"]);
        let five = UniformProposer::new(["a", "b", "c", "d", "e"]);
        let k = kernel(&UniformSaliency, &prop);
        let pos = k.positions(&st).unwrap();
        let f = k
            .move_logprob(&st, &pos, &EditAction::insert(1, toks("a"), Space::Token))
            .unwrap();
        // P_tok = 1/2 here; rescale the arithmetic oracle accordingly
        assert!((f.total().exp() - 0.25 / 3.0 * 0.5 * 0.5).abs() < 1e-15);
        let k5 = kernel(&UniformSaliency, &five);
        let f5 = k5
            .move_logprob(&st, &pos, &EditAction::insert(1, toks("a"), Space::Token))
            .unwrap();
        assert!((f5.total().exp() - 0.25 / 3.0 * 0.5 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn self_replacement_is_symmetric() {
        let st = state("a b c", &[]);
        let prop = UniformProposer::new(["a", "b", "c"]);
        let k = kernel(&UniformSaliency, &prop);
        let pos = k.positions(&st).unwrap();
        let p = k
            .evaluate(&st, &pos, &EditAction::replace(1, toks("b"), Space::Token))
            .unwrap();
        assert_eq!(p.new_state.tokens(), st.tokens());
        assert_eq!(p.forward_logprob, p.reverse_logprob);
    }

    #[test]
    fn insert_and_delete_reverse_each_other() {
        let st = state("a b", &["c d"]);
        let prop = UniformProposer::new(["a", "b", "c", "d"]);
        let k = kernel(&UniformSaliency, &prop);
        let pos = k.positions(&st).unwrap();
        let ins = k
            .evaluate(&st, &pos, &EditAction::insert(1, toks("c d"), Space::Entity))
            .unwrap();
        assert_eq!(ins.new_state.tokens(), toks("a c d b").as_slice());
        assert_eq!(ins.reverse_action, EditAction::delete(1, Space::Entity));
        assert_eq!(ins.reverse.content, 0.0);
        let back = apply_edit(&ins.new_state, &ins.reverse_action).unwrap();
        assert_eq!(back.tokens(), st.tokens());

        let del = k
            .evaluate(&ins.new_state, &ins.new_positions, &ins.reverse_action)
            .unwrap();
        assert_eq!(del.reverse_action, ins.action);
        assert!((del.forward_logprob - ins.reverse_logprob).abs() < 1e-15);
        assert!((del.reverse_logprob - ins.forward_logprob).abs() < 1e-15);
    }

    #[test]
    fn delete_guard_and_broken_reverse() {
        let prop = UniformProposer::new(["a", "b", "c", "d"]);
        let k = kernel(&UniformSaliency, &prop);
        let single = state("a", &[]);
        let pos = k.positions(&single).unwrap();
        assert_eq!(
            k.propose_delete(&single, &pos, 0).unwrap_err(),
            ProposalError::Rejected(RejectReason::EmptyResult)
        );
        // inserting "d" after "c" completes entity "c d": the inserted token is not a unit
        let st = state("c b", &["c d"]);
        let pos = k.positions(&st).unwrap();
        assert_eq!(
            k.evaluate(&st, &pos, &EditAction::insert(1, toks("d"), Space::Token))
                .unwrap_err(),
            ProposalError::Rejected(RejectReason::Irreversible)
        );
        // deleting "x" merges "c d" into an entity spanning the vacated gap
        let st = state("c x d", &["c d"]);
        let pos = k.positions(&st).unwrap();
        assert_eq!(
            k.propose_delete(&st, &pos, 1).unwrap_err(),
            ProposalError::Rejected(RejectReason::Irreversible)
        );
    }

    #[test]
    fn enumeration_sums_to_one_per_action() {
        let st = state("a c d", &["c d", "b"]);
        let prop = UniformProposer::new(["a", "b"]);
        let sal = Fixed(vec![0.3, 1.0, 2.0]);
        let k = kernel(&sal, &prop);
        let pos = k.positions(&st).unwrap();
        let set = k.enumerate_moves(&st, &pos).unwrap();
        for kind in EditKind::ALL {
            let s: f64 = set.moves.iter().filter(|(a, _)| a.kind == kind).map(|(_, p)| p).sum();
            assert!((s - 1.0 / 3.0).abs() < 1e-12, "{kind:?}: {s}");
        }
        for (a, p) in &set.moves {
            let f = k.move_logprob(&st, &pos, a).unwrap();
            assert!((f.total().exp() - p).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_proposals_are_reproducible() {
        let st = state("a c d b", &["c d"]);
        let prop = UniformProposer::new(["a", "b", "c"]);
        let sal = Fixed(vec![0.3, 1.0, 2.0, 0.0]);
        let k = kernel(&sal, &prop);
        let pos = k.positions(&st).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| match k.propose(&st, &pos, &mut rng) {
                    Ok(p) => format!("{:?} {} {}", p.action, p.forward_logprob, p.reverse_logprob),
                    Err(e) => e.to_string(),
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn no_candidates_rejects_entity_insert() {
        let st = state("a b", &[]);
        let prop = UniformProposer::new(["a", "b"]);
        let k = Kernel::new(
            &UniformSaliency,
            &prop,
            KernelSettings {
                alpha: 1.0,
                ..Default::default()
            },
        );
        let pos = k.positions(&st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            k.propose_insert(&st, &pos, 0, &mut rng).unwrap_err(),
            ProposalError::Rejected(RejectReason::NoCandidates)
        );
    }
}
