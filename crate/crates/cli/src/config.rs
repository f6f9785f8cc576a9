//! Run configuration: command-line flags over a TOML file over built-in defaults.
//!
//! ```toml
//! iterations = 20
//! seed = 7
//! alpha = 0.5
//! weights = [1.0, 1.0, 1.0]
//! include_initial_in_ranking = true
//! min_len = 1
//! max_len = 40
//! scorer = "reference"       # or "remote"
//! endpoint = "127.0.0.1:7878"
//! timeout_ms = 30000
//! gazetteer = "entities.txt"  # relative paths resolve against this file's directory
//! background = "corpus.txt"
//! add_k = 1.0
//! ngram_order = 3
//! jobs = 4
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use factedit_core::scorers::ReferenceConfig;
use factedit_core::{EnergyWeights, LengthBounds, SamplerConfig, TokenSequence};
use serde::{Deserialize, Serialize};

use crate::args::{CorrectArgs, ScorerKind};
use crate::error::CliError;
use crate::instances::load_lines;

pub const ENDPOINT_ENV: &str = "FACTEDIT_ENDPOINT";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub weights: Option<[f64; 3]>,
    pub include_initial_in_ranking: Option<bool>,
    pub min_len: Option<usize>,
    pub max_len: Option<usize>,
    pub scorer: Option<ScorerKind>,
    pub endpoint: Option<String>,
    pub timeout_ms: Option<u64>,
    pub gazetteer: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub add_k: Option<f64>,
    pub ngram_order: Option<usize>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `path`, resolving relative file paths inside it against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.gazetteer, &mut cfg.background].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerSpec {
    Reference,
    Remote { endpoint: String, timeout_ms: u64 },
}

impl ScorerSpec {
    pub fn timeout(&self) -> Duration {
        match self {
            ScorerSpec::Reference => Duration::ZERO,
            ScorerSpec::Remote { timeout_ms, .. } => Duration::from_millis(*timeout_ms),
        }
    }
}

/// Everything `correct` needs besides the instances.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    pub scorer: ScorerSpec,
    pub reference: ReferenceConfig,
    /// Entities added to every instance's gazetteer.
    pub gazetteer: Vec<Vec<String>>,
    pub background: Vec<TokenSequence>,
    pub jobs: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl RunConfig {
    /// Flags first, then the file, then defaults. The endpoint also falls back to `env`
    /// (the value of [`ENDPOINT_ENV`]) between the flag and the file.
    pub fn resolve(args: &CorrectArgs, file: &FileConfig, env_endpoint: Option<String>) -> Result<Self, CliError> {
        let usage = CliError::Usage;
        let d = SamplerConfig::default();
        let w = args
            .weights
            .or(file.weights)
            .map(|[a, b, c]| EnergyWeights::new(a, b, c))
            .transpose()
            .map_err(usage)?
            .unwrap_or(d.weights);
        let sampler = SamplerConfig {
            iterations: args.iterations.or(file.iterations).unwrap_or(d.iterations),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            alpha: args.alpha.or(file.alpha).unwrap_or(d.alpha),
            weights: w,
            include_initial_in_ranking: file.include_initial_in_ranking.unwrap_or(d.include_initial_in_ranking),
            bounds: LengthBounds {
                min: file.min_len.unwrap_or(d.bounds.min),
                max: file.max_len.or(d.bounds.max),
            },
            mutation: None,
        };
        sampler.validate()?;

        let kind = args.scorer.or(file.scorer).unwrap_or(ScorerKind::Reference);
        let explicit_endpoint = args.endpoint.clone().or_else(|| file.endpoint.clone());
        let scorer = match kind {
            ScorerKind::Reference => {
                if explicit_endpoint.is_some() {
                    return Err(usage("an endpoint is only valid with --scorer remote".into()));
                }
                ScorerSpec::Reference
            }
            ScorerKind::Remote => {
                let endpoint = args
                    .endpoint
                    .clone()
                    .or(env_endpoint)
                    .or_else(|| file.endpoint.clone())
                    .ok_or_else(|| usage(format!("--scorer remote needs --endpoint or {ENDPOINT_ENV}")))?;
                ScorerSpec::Remote {
                    endpoint,
                    timeout_ms: args.timeout_ms.or(file.timeout_ms).unwrap_or(DEFAULT_TIMEOUT_MS),
                }
            }
        };

        let rd = ReferenceConfig::default();
        let reference = ReferenceConfig {
            add_k: args.add_k.or(file.add_k).unwrap_or(rd.add_k),
            ngram_order: file.ngram_order.unwrap_or(rd.ngram_order),
            ..rd
        };
        if !(reference.add_k > 0.0 && reference.add_k.is_finite()) {
            return Err(usage(format!("add_k must be positive, got {}", reference.add_k)));
        }
        if reference.ngram_order < 1 {
            return Err(usage("ngram_order must be at least 1".into()));
        }

        let gazetteer = match args.gazetteer.as_ref().or(file.gazetteer.as_ref()) {
            Some(p) => load_lines(p)?
                .iter()
                .map(|l| TokenSequence::from_text(l).into_tokens())
                .filter(|e| !e.is_empty())
                .collect(),
            None => Vec::new(),
        };
        let background = match args.background.as_ref().or(file.background.as_ref()) {
            Some(p) => load_lines(p)?.iter().map(|l| TokenSequence::from_text(l)).collect(),
            None => Vec::new(),
        };
        let jobs = args.jobs.or(file.jobs).unwrap_or_else(default_jobs);
        if jobs == 0 {
            return Err(usage("jobs must be at least 1".into()));
        }
        Ok(Self {
            sampler,
            scorer,
            reference,
            gazetteer,
            background,
            jobs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> CorrectArgs {
        CorrectArgs {
            input: "in.jsonl".into(),
            ..CorrectArgs::default()
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&args(), &FileConfig::default(), None).unwrap();
        assert_eq!(c.sampler, SamplerConfig::default());
        assert_eq!(c.scorer, ScorerSpec::Reference);
        assert_eq!(c.reference, ReferenceConfig::default());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = FileConfig::parse("iterations = 7\nseed = 3\nalpha = 0.25\nweights = [1.0, 2.0, 3.0]").unwrap();
        let a = CorrectArgs {
            seed: Some(11),
            ..args()
        };
        let c = RunConfig::resolve(&a, &file, None).unwrap();
        assert_eq!(c.sampler.iterations, 7);
        assert_eq!(c.sampler.seed, 11);
        assert_eq!(c.sampler.alpha, 0.25);
        assert_eq!(c.sampler.weights, EnergyWeights::new(1.0, 2.0, 3.0).unwrap());
    }

    #[test]
    fn zero_iterations_rejected() {
        let a = CorrectArgs {
            iterations: Some(0),
            ..args()
        };
        assert!(matches!(
            RunConfig::resolve(&a, &FileConfig::default(), None),
            Err(CliError::Usage(_))
        ));
        let file = FileConfig::parse("iterations = 0").unwrap();
        assert!(RunConfig::resolve(&args(), &file, None).is_err());
    }

    #[test]
    fn endpoint_iff_remote() {
        let remote = CorrectArgs {
            scorer: Some(ScorerKind::Remote),
            ..args()
        };
        assert!(RunConfig::resolve(&remote, &FileConfig::default(), None).is_err());
        let c = RunConfig::resolve(&remote, &FileConfig::default(), Some("h:1".into())).unwrap();
        assert_eq!(
            c.scorer,
            ScorerSpec::Remote {
                endpoint: "h:1".into(),
                timeout_ms: DEFAULT_TIMEOUT_MS
            }
        );
        let both = CorrectArgs {
            endpoint: Some("h:2".into()),
            ..remote.clone()
        };
        let c = RunConfig::resolve(&both, &FileConfig::default(), Some("h:1".into())).unwrap();
        assert!(matches!(c.scorer, ScorerSpec::Remote { ref endpoint, .. } if endpoint == "h:2"));

        let stray = CorrectArgs {
            endpoint: Some("h:2".into()),
            ..args()
        };
        assert!(RunConfig::resolve(&stray, &FileConfig::default(), None).is_err());
        // the environment alone does not force remote scoring
        assert!(RunConfig::resolve(&args(), &FileConfig::default(), Some("h:1".into())).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(FileConfig::parse("iteration = 3").is_err());
    }

    #[test]
    fn bad_weights_rejected() {
        let a = CorrectArgs {
            weights: Some([1.0, -1.0, 1.0]),
            ..args()
        };
        assert!(RunConfig::resolve(&a, &FileConfig::default(), None).is_err());
    }
}
