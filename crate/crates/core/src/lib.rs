//! Evidence-guided claim correction by Metropolis-Hastings sampling over token edits.
//!
//! A claim is edited one unit at a time (a token, or a whole entity from the evidence
//! gazetteer). Each edit is accepted with the Metropolis-Hastings rule against the target
//! `π(x) ∝ exp(−E(x))`, where the energy combines fluency, evidence support and distance
//! from the original claim.

pub mod energy;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod proposal;
pub mod protocol;
pub mod scorers;
pub mod synth;
pub mod text;

pub use energy::{EnergyBreakdown, EnergyWeights};
pub use engine::{CorrectionResult, Sampler, SamplerConfig, TraceRecord};
pub use proposal::{Kernel, KernelMutation, KernelSettings, LengthBounds, Proposal, ProposalError, RejectReason};
pub use text::{EditAction, EditKind, EditState, EvidenceSet, Gazetteer, Space, TokenSequence, UnitKind};
