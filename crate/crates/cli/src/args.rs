use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "factedit",
    version,
    about = "Correct factual errors in claims by sampling token edits against evidence"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Correct every claim in a JSON-lines file.
    Correct(CorrectArgs),
    /// Score corrections against gold claims (SARI, ROUGE-2, exact match).
    Eval(EvalArgs),
    /// Verify the sampler's kernel exactly on small built-in state spaces.
    Selfcheck(SelfcheckArgs),
    /// Print a trace file as a table.
    TraceView(TraceViewArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Reference,
    Remote,
}

/// `w_lm,w_v,w_h`
pub fn parse_weights(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated weights, got {s:?}"));
    }
    let mut w = [0.0; 3];
    for (slot, p) in w.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("bad weight {p:?}"))?;
    }
    Ok(w)
}

#[derive(Debug, Clone, Default, Args)]
pub struct CorrectArgs {
    /// Input instances, one JSON object per line.
    pub input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// TOML file with defaults for any of the options below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability of the entity branch for insertions.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Energy weights as w_lm,w_v,w_h.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<[f64; 3]>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    /// Scorer server: tcp://host:port, host:port, or stdio:<command>. Falls back to
    /// FACTEDIT_ENDPOINT.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Per-request timeout for the remote scorer.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Extra gazetteer entities, one per line.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Extra sentences for the reference n-gram model, one per line.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Add-k constant of the reference n-gram model.
    #[arg(long)]
    pub add_k: Option<f64>,
    /// Worker threads; each instance runs as its own chain.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write every sampler step to this file (JSON lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Output of `correct`.
    pub outputs: PathBuf,
    /// Instances with gold corrections.
    pub gold: PathBuf,
    /// Machine-readable report (JSON lines: one per instance, then a summary).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Largest n-gram order for SARI; 1 gives unigram SARI.
    #[arg(long, default_value_t = factedit_core::metrics::DEFAULT_MAX_N, value_parser = clap::value_parser!(usize))]
    pub sari_max_n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    /// Spaces to check (symmetric, small, full, single); all by default.
    #[arg(long = "space")]
    pub spaces: Vec<String>,
    /// Steps of the sampled chain compared against the exact target; 0 skips it.
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also draw this many proposals on synthetic claims and check each reverse
    /// probability against an enumeration of the reverse moves.
    #[arg(long, default_value_t = 0)]
    pub reverse_fuzz: usize,
    /// Skip the deliberate kernel defects that must be detected.
    #[arg(long)]
    pub no_mutation_tests: bool,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Test hook: perturb reverse probabilities of replacements; the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_reverse: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TraceViewArgs {
    pub trace: PathBuf,
    /// Only show this instance.
    #[arg(long)]
    pub id: Option<String>,
    /// Only show accepted steps.
    #[arg(long)]
    pub accepted: bool,
}
