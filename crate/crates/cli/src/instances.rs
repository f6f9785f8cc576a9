//! Line-delimited JSON records: claim instances in, corrections out.
//!
//! An instance line looks like
//!
//! ```text
//! {"id": "1", "claim": "Paris is in Spain .", "evidence": ["Paris is the capital of France ."], "gold": "Paris is in France .", "label": "REFUTED"}
//! ```
//!
//! `id` and `claim` are required; `evidence` defaults to empty, `gold` and `label` are
//! optional. Numeric ids are read as their decimal text.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use factedit_core::{EnergyBreakdown, TokenSequence};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::error::DataError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("expected a string id, got {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimInstance {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub claim: String,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ClaimInstance {
    pub fn claim_tokens(&self) -> TokenSequence {
        TokenSequence::from_text(&self.claim)
    }

    pub fn evidence_tokens(&self) -> Vec<TokenSequence> {
        self.evidence.iter().map(|p| TokenSequence::from_text(p)).collect()
    }
}

/// One line of `correct` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub corrected: String,
    pub energy: EnergyBreakdown,
    pub iterations_run: usize,
    pub accepted_count: usize,
}

/// Records that parsed, plus one error per line that did not.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

trait Record: DeserializeOwned {
    const REQUIRED: &'static [&'static str];
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl Record for ClaimInstance {
    const REQUIRED: &'static [&'static str] = &["id", "claim"];
    fn check(&self) -> Result<(), String> {
        if self.claim_tokens().is_empty() {
            return Err("claim is empty".into());
        }
        Ok(())
    }
}

impl Record for OutputRecord {
    const REQUIRED: &'static [&'static str] = &["id", "corrected", "energy", "iterations_run", "accepted_count"];
}

fn parse_line<T: Record>(line: &str, lineno: usize) -> Result<T, LineError> {
    let parse = |reason: String| LineError::Parse { line: lineno, reason };
    let value: Value = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse("expected a JSON object".into()))?;
    if let Some(field) = T::REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
        return Err(LineError::MissingField { line: lineno, field });
    }
    let rec: T = serde_json::from_value(value).map_err(|e| parse(e.to_string()))?;
    rec.check().map_err(parse)?;
    Ok(rec)
}

fn parse_records<T: Record, R: BufRead>(reader: R) -> std::io::Result<Loaded<T>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, i + 1) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(e),
        }
    }
    Ok(Loaded { records, errors })
}

pub fn parse_instances<R: BufRead>(reader: R) -> std::io::Result<Loaded<ClaimInstance>> {
    parse_records(reader)
}

pub fn parse_outputs<R: BufRead>(reader: R) -> std::io::Result<Loaded<OutputRecord>> {
    parse_records(reader)
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads every line; malformed lines are returned as errors alongside the good ones.
pub fn load_instances(path: &Path) -> Result<Loaded<ClaimInstance>, DataError> {
    parse_instances(open(path)?).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_outputs(path: &Path) -> Result<Loaded<OutputRecord>, DataError> {
    parse_outputs(open(path)?).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Like [`load_instances`], but any bad line fails the whole file.
pub fn load_instances_strict(path: &Path) -> Result<Vec<ClaimInstance>, DataError> {
    strict(path, load_instances(path)?)
}

pub fn load_outputs_strict(path: &Path) -> Result<Vec<OutputRecord>, DataError> {
    strict(path, load_outputs(path)?)
}

fn strict<T>(path: &Path, loaded: Loaded<T>) -> Result<Vec<T>, DataError> {
    if loaded.errors.is_empty() {
        Ok(loaded.records)
    } else {
        Err(DataError::Lines {
            path: path.to_path_buf(),
            errors: loaded.errors,
        })
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_instances<W: Write>(w: W, instances: &[ClaimInstance]) -> std::io::Result<()> {
    write_jsonl(w, instances)
}

/// Non-empty lines that do not start with `#`.
pub fn load_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Loaded<ClaimInstance> {
        parse_instances(s.as_bytes()).unwrap()
    }

    #[test]
    fn single_line() {
        let l = parse(r#"{"id":"1","claim":"a b","evidence":["a b c"]}"#);
        assert!(l.errors.is_empty());
        assert_eq!(l.records[0].claim_tokens().len(), 2);
        assert_eq!(l.records[0].evidence, vec!["a b c"]);
    }

    #[test]
    fn empty_input() {
        let l = parse("");
        assert!(l.records.is_empty() && l.errors.is_empty());
    }

    #[test]
    fn missing_claim_keeps_other_lines() {
        let l = parse(concat!(
            r#"{"id":"1","claim":"a b"}"#,
            "\n",
            r#"{"id":"2","evidence":[]}"#,
            "\n\n",
            r#"{"id":3,"claim":"c"}"#,
            "\n",
        ));
        assert_eq!(
            l.errors,
            vec![LineError::MissingField {
                line: 2,
                field: "claim"
            }]
        );
        let ids: Vec<_> = l.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
    }

    #[test]
    fn bad_lines_are_numbered() {
        let l = parse("{\"id\":\"1\",\"claim\":\"a\"}\nnot json\n[1]\n{\"id\":\"4\",\"claim\":\"  \"}\n{\"id\":true,\"claim\":\"x\"}\n");
        let lines: Vec<usize> = l
            .errors
            .iter()
            .map(|e| match e {
                LineError::Parse { line, .. } | LineError::MissingField { line, .. } => *line,
            })
            .collect();
        assert_eq!(lines, [2, 3, 4, 5]);
        assert_eq!(l.records.len(), 1);
    }

    #[test]
    fn evidence_defaults_to_empty() {
        let l = parse(r#"{"id":"1","claim":"a"}"#);
        assert!(l.records[0].evidence.is_empty());
        assert_eq!(l.records[0].gold, None);
    }
}
