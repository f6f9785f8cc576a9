use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use factedit_core::engine::{chain_rng, derive_seed};
use factedit_core::harness::{
    reverse_consistency_fuzz, selfcheck, BuiltinSpace, HarnessError, ReverseFuzzReport, SelfCheckOptions,
    SelfCheckReport, REVERSE_TOLERANCE,
};
use factedit_core::metrics::{evaluate_corpus, CorpusReport, EvalItem, InstanceScore, SariScore};
use factedit_core::scorers::{reference_bundle, RemoteScorer, Scorers};
use factedit_core::{CorrectionResult, EditState, EvidenceSet, KernelMutation, Sampler, TokenSequence};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CorrectArgs, EvalArgs, SelfcheckArgs, TraceViewArgs};
use crate::config::{FileConfig, RunConfig, ScorerSpec, ENDPOINT_ENV};
use crate::error::{CliError, DataError};
use crate::instances::{load_instances_strict, load_outputs_strict, write_jsonl, ClaimInstance, OutputRecord};
use crate::trace::{instance_lines, read_trace, write_line, TraceHeader, TraceLine, TRACE_SCHEMA_VERSION};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DataError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Runs one chain. The chain seed depends only on the global seed and the instance id, so
/// results do not depend on scheduling.
pub fn correct_instance(inst: &ClaimInstance, cfg: &RunConfig) -> Result<CorrectionResult, CliError> {
    let claim = inst.claim_tokens();
    let evidence = Arc::new(EvidenceSet::new(inst.evidence_tokens(), &claim, &cfg.gazetteer));
    let state = EditState::initial(claim.clone(), evidence.clone())
        .map_err(|e| DataError::Invalid(format!("{}: {e}", inst.id)))?;
    let mut rng = chain_rng(derive_seed(cfg.sampler.seed, &inst.id));
    let result = match &cfg.scorer {
        ScorerSpec::Reference => {
            let bundle = reference_bundle(&claim, &evidence, &cfg.background, &cfg.reference);
            Sampler::new(bundle.scorers(), bundle.proposer(), cfg.sampler).run_with(state, &mut rng)?
        }
        ScorerSpec::Remote { endpoint, .. } => {
            let remote = RemoteScorer::connect(endpoint, cfg.scorer.timeout())?;
            let scorers = Scorers {
                fluency: &remote,
                verifier: &remote,
                saliency: &remote,
            };
            Sampler::new(scorers, &remote, cfg.sampler).run_with(state, &mut rng)?
        }
    };
    Ok(result)
}

pub fn output_record(id: &str, result: &CorrectionResult) -> OutputRecord {
    OutputRecord {
        id: id.to_string(),
        corrected: result.best.to_text(),
        energy: result.best_energy,
        iterations_run: result.trace.len(),
        accepted_count: result.accepted_count(),
    }
}

pub fn correct(args: &CorrectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let env_endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
    let cfg = RunConfig::resolve(args, &file, env_endpoint)?;
    let instances = load_instances_strict(&args.input)?;
    check_unique(instances.iter().map(|i| i.id.as_str()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    let results: Vec<CorrectionResult> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| correct_instance(inst, &cfg))
            .collect::<Result<_, _>>()
    })?;

    let records: Vec<OutputRecord> = instances
        .iter()
        .zip(&results)
        .map(|(i, r)| output_record(&i.id, r))
        .collect();
    match &args.output {
        Some(p) => write_jsonl(create(p)?, &records).map_err(|e| CliError::io(p, e))?,
        None => write_jsonl(&mut *out, &records).map_err(|e| CliError::io("<stdout>", e))?,
    }

    if let Some(p) = &args.trace {
        let mut w = create(p)?;
        let header = TraceLine::Header(TraceHeader {
            schema_version: TRACE_SCHEMA_VERSION,
            sampler: cfg.sampler,
            scorer: cfg.scorer.clone(),
            add_k: cfg.reference.add_k,
            ngram_order: cfg.reference.ngram_order,
        });
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            write_line(w, &header)?;
            for (inst, r) in instances.iter().zip(&results) {
                for line in instance_lines(&inst.id, r) {
                    write_line(w, &line)?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| CliError::io(p, e))?;
    }

    let changed = results.iter().filter(|r| r.best != r.initial).count();
    eprintln!("corrected {} instances, {changed} changed", results.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct EvalSummary<'a> {
    count: usize,
    mean_sari: SariScore,
    mean_rouge2: f64,
    mean_hamming: f64,
    exact_match_rate: f64,
    label_counts: &'a std::collections::BTreeMap<String, usize>,
    sari_max_n: usize,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Instance(&'a InstanceScore),
    Summary(EvalSummary<'a>),
}

/// Pairs outputs with gold instances by id. An instance without a gold correction is its
/// own reference.
pub fn eval_items(outputs: &[OutputRecord], gold: &[ClaimInstance]) -> Result<Vec<EvalItem>, DataError> {
    check_unique(outputs.iter().map(|o| o.id.as_str()))?;
    check_unique(gold.iter().map(|g| g.id.as_str()))?;
    let by_id: HashMap<&str, &OutputRecord> = outputs.iter().map(|o| (o.id.as_str(), o)).collect();
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let missing_outputs: Vec<String> = gold
        .iter()
        .filter(|g| !by_id.contains_key(g.id.as_str()))
        .map(|g| g.id.clone())
        .collect();
    let missing_gold: Vec<String> = outputs
        .iter()
        .filter(|o| !gold_ids.contains(o.id.as_str()))
        .map(|o| o.id.clone())
        .collect();
    if !missing_outputs.is_empty() || !missing_gold.is_empty() {
        return Err(DataError::IdMismatch {
            missing_outputs,
            missing_gold,
        });
    }
    Ok(gold
        .iter()
        .map(|g| {
            let reference = g.gold.as_deref().unwrap_or(&g.claim);
            EvalItem {
                id: g.id.clone(),
                source: g.claim_tokens().into_tokens(),
                output: TokenSequence::from_text(&by_id[g.id.as_str()].corrected).into_tokens(),
                references: vec![TokenSequence::from_text(reference).into_tokens()],
                label: g.label.clone(),
            }
        })
        .collect())
}

pub fn format_report(r: &CorpusReport) -> String {
    let mut s = String::new();
    let s_ = &r.mean_sari;
    s.push_str(&format!("{:<14}{}\n", "instances", r.count));
    s.push_str(&format!(
        "{:<14}{:.4}  (keep {:.4}, delete {:.4}, add {:.4})\n",
        "SARI", s_.final_score, s_.keep_f1, s_.delete_f1, s_.add_f1
    ));
    s.push_str(&format!("{:<14}{:.4}\n", "ROUGE-2", r.mean_rouge2));
    s.push_str(&format!("{:<14}{:.4}\n", "exact match", r.exact_match_rate));
    s.push_str(&format!("{:<14}{:.4}\n", "mean Hamming", r.mean_hamming));
    let labels: Vec<String> = r.label_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    s.push_str(&format!("{:<14}{}\n", "labels", labels.join(", ")));
    s
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.sari_max_n == 0 {
        return Err(CliError::Usage("--sari-max-n must be at least 1".into()));
    }
    let outputs = load_outputs_strict(&args.outputs)?;
    let gold = load_instances_strict(&args.gold)?;
    let items = eval_items(&outputs, &gold)?;
    let report = evaluate_corpus(&items, args.sari_max_n).map_err(|e| DataError::Invalid(e.to_string()))?;
    out.write_all(format_report(&report).as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))?;
    if let Some(p) = &args.report {
        let mut lines: Vec<ReportLine> = report.instances.iter().map(ReportLine::Instance).collect();
        lines.push(ReportLine::Summary(EvalSummary {
            count: report.count,
            mean_sari: report.mean_sari,
            mean_rouge2: report.mean_rouge2,
            mean_hamming: report.mean_hamming,
            exact_match_rate: report.exact_match_rate,
            label_counts: &report.label_counts,
            sari_max_n: args.sari_max_n,
        }));
        write_jsonl(create(p)?, &lines).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FullSelfCheck {
    pub kernel: SelfCheckReport,
    pub reverse_fuzz: Option<ReverseFuzzReport>,
    pub passed: bool,
}

fn sci(x: f64) -> String {
    format!("{x:.2e}")
}

pub fn format_selfcheck(r: &FullSelfCheck) -> String {
    let mut s = format!(
        "{:<10} {:>6} {:>10} {:>8} {:>10} {:>10} {:>6} {:>6} {:>8}  result\n",
        "space", "states", "residual", "tol", "balance", "row-err", "irred", "aper", "TV"
    );
    for sp in &r.kernel.spaces {
        s.push_str(&format!(
            "{:<10} {:>6} {:>10} {:>8} {:>10} {:>10} {:>6} {:>6} {:>8}  {}\n",
            sp.space.name(),
            sp.states,
            sci(sp.residual),
            sci(sp.residual_tolerance),
            sci(sp.detailed_balance),
            sci(sp.row_error),
            if sp.irreducible { "yes" } else { "no" },
            if sp.aperiodic { "yes" } else { "no" },
            sp.tv.map_or("-".to_string(), |t| format!("{t:.4}")),
            if sp.passed { "PASS" } else { "FAIL" },
        ));
    }
    for m in &r.kernel.mutations {
        s.push_str(&format!(
            "mutation {:<18} residual {}  {}\n",
            format!("{:?}", m.mutation),
            sci(m.residual),
            if m.detected { "detected" } else { "MISSED" }
        ));
    }
    if let Some(f) = &r.reverse_fuzz {
        s.push_str(&format!(
            "reverse fuzz: {} steps, {} proposals, {} consistent, max error {}  {}\n",
            f.steps,
            f.proposals,
            f.consistent,
            sci(f.max_error),
            if f.passed(REVERSE_TOLERANCE) { "PASS" } else { "FAIL" }
        ));
    }
    s.push_str(if r.passed {
        "selfcheck: PASS\n"
    } else {
        "selfcheck: FAIL\n"
    });
    s
}

pub fn run_selfcheck(args: &SelfcheckArgs) -> Result<FullSelfCheck, CliError> {
    let spaces = if args.spaces.is_empty() {
        BuiltinSpace::ALL.to_vec()
    } else {
        args.spaces
            .iter()
            .map(|s| BuiltinSpace::parse(s).ok_or_else(|| CliError::Usage(format!("unknown space {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    let mutation = args.corrupt_reverse.then_some(KernelMutation::CorruptReverse);
    let opts = SelfCheckOptions {
        spaces,
        empirical_steps: args.steps,
        seed: args.seed,
        mutation,
        mutation_tests: !args.no_mutation_tests,
    };
    let harness_err = |e: HarnessError| match e {
        HarnessError::Scorer(e) => CliError::Scorer(e),
        other => {
            eprintln!("selfcheck: {other}");
            CliError::SelfCheckFailed
        }
    };
    let kernel = selfcheck(&opts).map_err(harness_err)?;
    let reverse_fuzz = if args.reverse_fuzz > 0 {
        Some(reverse_consistency_fuzz(args.reverse_fuzz, args.seed, mutation).map_err(harness_err)?)
    } else {
        None
    };
    let passed = kernel.passed && reverse_fuzz.as_ref().is_none_or(|f| f.passed(REVERSE_TOLERANCE));
    Ok(FullSelfCheck {
        kernel,
        reverse_fuzz,
        passed,
    })
}

pub fn selfcheck_command(args: &SelfcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let report = run_selfcheck(args)?;
    let text = if args.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        format_selfcheck(&report)
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::SelfCheckFailed)
    }
}

fn tokens(t: &TokenSequence) -> String {
    t.to_text()
}

pub fn format_trace(lines: &[TraceLine], only_id: Option<&str>, accepted_only: bool) -> String {
    let mut s = String::new();
    let mut current: Option<&str> = None;
    for line in lines {
        match line {
            TraceLine::Header(h) => {
                s.push_str(&format!(
                    "# trace v{}: {} iterations, seed {}, alpha {}, weights ({}, {}, {})\n",
                    h.schema_version,
                    h.sampler.iterations,
                    h.sampler.seed,
                    h.sampler.alpha,
                    h.sampler.weights.w_lm,
                    h.sampler.weights.w_v,
                    h.sampler.weights.w_h
                ));
                current = None;
            }
            TraceLine::Step { id, step } => {
                if only_id.is_some_and(|o| o != id) || (accepted_only && !step.accepted) {
                    continue;
                }
                if current != Some(id.as_str()) {
                    s.push_str(&format!("\n== {id}\n"));
                    s.push_str(&format!(
                        "{:>4}  {:<8} {:<6} {:>3}  {:<24} {:>9} {:>9} {:>8} {:>8}  acc\n",
                        "iter", "action", "space", "pos", "content", "E_old", "E_new", "A", "u"
                    ));
                    current = Some(id.as_str());
                }
                let (action, space, pos, content) = match (&step.proposal, &step.rejection) {
                    (Some(p), _) => (
                        format!("{:?}", p.action).to_lowercase(),
                        format!("{:?}", p.space).to_lowercase(),
                        p.position.to_string(),
                        p.content.as_ref().map_or("-".into(), |c| c.join(" ")),
                    ),
                    (None, Some(r)) => ("-".into(), "-".into(), "-".into(), format!("[{r:?}]")),
                    (None, None) => ("-".into(), "-".into(), "-".into(), "-".into()),
                };
                s.push_str(&format!(
                    "{:>4}  {:<8} {:<6} {:>3}  {:<24} {:>9.3} {:>9} {:>8.2e} {:>8.4}  {}\n",
                    step.iteration,
                    action,
                    space,
                    pos,
                    content,
                    step.e_old.total,
                    step.e_new.map_or("-".into(), |e| format!("{:.3}", e.total)),
                    step.acceptance,
                    step.u,
                    if step.accepted { "yes" } else { "no" }
                ));
            }
            TraceLine::Result {
                id,
                initial,
                best,
                best_energy,
                initial_energy,
                accepted_count,
            } => {
                if only_id.is_some_and(|o| o != id) {
                    continue;
                }
                if current != Some(id.as_str()) {
                    s.push_str(&format!("\n== {id}\n"));
                }
                s.push_str(&format!(
                    "   initial ({:.3}): {}\n   best    ({:.3}): {}\n   accepted {accepted_count}\n",
                    initial_energy.total,
                    tokens(initial),
                    best_energy.total,
                    tokens(best)
                ));
                current = None;
            }
        }
    }
    s
}

pub fn trace_view(args: &TraceViewArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let f = File::open(&args.trace).map_err(|e| CliError::io(&args.trace, e))?;
    let lines = read_trace(BufReader::new(f))
        .map_err(|e| CliError::io(&args.trace, e))?
        .map_err(|e| DataError::Lines {
            path: args.trace.clone(),
            errors: vec![e],
        })?;
    out.write_all(format_trace(&lines, args.id.as_deref(), args.accepted).as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))
}
