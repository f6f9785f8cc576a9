//! Trace files: JSON lines, each tagged with `kind`.
//!
//! A run writes one `header` line (schema version and the full sampler configuration),
//! then for every instance in input order its `step` lines and one `result` line. Readers
//! accept several header-led segments in one file.

use std::io::{BufRead, Write};

use factedit_core::{CorrectionResult, EnergyBreakdown, SamplerConfig, TokenSequence, TraceRecord};
use serde::{Deserialize, Serialize};

use crate::config::ScorerSpec;
use crate::instances::LineError;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub sampler: SamplerConfig,
    pub scorer: ScorerSpec,
    pub add_k: f64,
    pub ngram_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step {
        id: String,
        step: TraceRecord,
    },
    Result {
        id: String,
        initial: TokenSequence,
        initial_energy: EnergyBreakdown,
        best: TokenSequence,
        best_energy: EnergyBreakdown,
        accepted_count: usize,
    },
}

pub fn instance_lines(id: &str, result: &CorrectionResult) -> Vec<TraceLine> {
    let mut out: Vec<TraceLine> = result
        .trace
        .iter()
        .map(|r| TraceLine::Step {
            id: id.to_string(),
            step: r.clone(),
        })
        .collect();
    out.push(TraceLine::Result {
        id: id.to_string(),
        initial: result.initial.clone(),
        initial_energy: result.initial_energy,
        best: result.best.clone(),
        best_energy: result.best_energy,
        accepted_count: result.accepted_count(),
    });
    out
}

pub fn write_line<W: Write>(w: &mut W, line: &TraceLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, line)?;
    w.write_all(b"\n")
}

/// Parses a whole trace. The first record must be a header of a known schema version.
pub fn read_trace<R: BufRead>(reader: R) -> std::io::Result<Result<Vec<TraceLine>, LineError>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |reason: String| LineError::Parse { line: i + 1, reason };
        let rec: TraceLine = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => return Ok(Err(parse(e.to_string()))),
        };
        match &rec {
            TraceLine::Header(h) if h.schema_version != TRACE_SCHEMA_VERSION => {
                return Ok(Err(parse(format!(
                    "unsupported trace schema version {} (expected {TRACE_SCHEMA_VERSION})",
                    h.schema_version
                ))))
            }
            TraceLine::Header(_) => {}
            _ if out.is_empty() => return Ok(Err(parse("trace does not start with a header".into()))),
            _ => {}
        }
        out.push(rec);
    }
    Ok(Ok(out))
}
