//! SARI, ROUGE-2 and Hamming distance for scoring corrections against references.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::hamming;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("at least one reference is required")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SariScore {
    pub keep_f1: f64,
    pub delete_f1: f64,
    pub add_f1: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
}

impl SariScore {
    pub fn from_components(keep_f1: f64, delete_f1: f64, add_f1: f64) -> Self {
        Self {
            keep_f1,
            delete_f1,
            add_f1,
            final_score: (keep_f1 + delete_f1 + add_f1) / 3.0,
        }
    }
}

/// Highest n-gram order used by SARI; 1 gives the unigram variant.
pub const DEFAULT_MAX_N: usize = 4;

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngrams(seq: &[String], n: usize) -> Counts<'_> {
    let mut c = HashMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *c.entry(w).or_insert(0) += 1;
        }
    }
    c
}

fn size(c: &Counts) -> usize {
    c.values().sum()
}

fn intersect<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(k, &x)| b.get(k).map(|&y| (*k, x.min(y))))
        .filter(|(_, v)| *v > 0)
        .collect()
}

fn subtract<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(k, &x)| {
            let d = x.saturating_sub(b.get(k).copied().unwrap_or(0));
            (d > 0).then_some((*k, d))
        })
        .collect()
}

/// `0/0 := 1`.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 of a system multiset against a reference multiset; `P + R = 0 ⇒ 0`.
fn f1(sys: &Counts, reference: &Counts) -> f64 {
    let overlap = size(&intersect(sys, reference));
    let p = ratio(overlap, size(sys));
    let r = ratio(overlap, size(reference));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn sari_single(source: &[String], output: &[String], reference: &[String], max_n: usize) -> (f64, f64, f64) {
    let (mut keep, mut del, mut add) = (0.0, 0.0, 0.0);
    for n in 1..=max_n {
        let s = ngrams(source, n);
        let o = ngrams(output, n);
        let r = ngrams(reference, n);
        keep += f1(&intersect(&s, &o), &intersect(&s, &r));
        del += f1(&subtract(&s, &o), &subtract(&s, &r));
        add += f1(&subtract(&o, &s), &subtract(&r, &s));
    }
    let m = max_n as f64;
    (keep / m, del / m, add / m)
}

/// SARI of `output` as an edit of `source`. Each component is the mean F1 over n-gram
/// orders `1..=max_n`; with several references each component takes its best reference.
pub fn sari<R: AsRef<[String]>>(
    source: &[String],
    output: &[String],
    references: &[R],
    max_n: usize,
) -> Result<SariScore, MetricError> {
    if references.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let max_n = max_n.max(1);
    let (mut keep, mut del, mut add) = (0.0f64, 0.0f64, 0.0f64);
    for r in references {
        let (k, d, a) = sari_single(source, output, r.as_ref(), max_n);
        keep = keep.max(k);
        del = del.max(d);
        add = add.max(a);
    }
    Ok(SariScore::from_components(keep, del, add))
}

/// Bigram-overlap F1. Two sequences without bigrams score 1; one without scores 0.
pub fn rouge2(output: &[String], reference: &[String]) -> f64 {
    let o = ngrams(output, 2);
    let r = ngrams(reference, 2);
    match (size(&o), size(&r)) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        (no, nr) => {
            let overlap = size(&intersect(&o, &r)) as f64;
            let p = overlap / no as f64;
            let rc = overlap / nr as f64;
            if p + rc == 0.0 {
                0.0
            } else {
                2.0 * p * rc / (p + rc)
            }
        }
    }
}

/// One scored correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub source: Vec<String>,
    pub output: Vec<String>,
    pub references: Vec<Vec<String>>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub id: String,
    pub label: Option<String>,
    pub sari: SariScore,
    pub rouge2: f64,
    /// Hamming distance to the closest reference.
    pub hamming: usize,
    pub exact_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub count: usize,
    pub mean_sari: SariScore,
    pub mean_rouge2: f64,
    pub mean_hamming: f64,
    pub exact_match_rate: f64,
    pub label_counts: BTreeMap<String, usize>,
    pub instances: Vec<InstanceScore>,
}

pub fn score_item(item: &EvalItem, max_n: usize) -> Result<InstanceScore, MetricError> {
    let sari = sari(&item.source, &item.output, &item.references, max_n)?;
    let rouge2 = item
        .references
        .iter()
        .map(|r| rouge2(&item.output, r))
        .fold(0.0, f64::max);
    let hamming = item
        .references
        .iter()
        .map(|r| hamming(&item.output, r))
        .min()
        .unwrap_or(0);
    Ok(InstanceScore {
        id: item.id.clone(),
        label: item.label.clone(),
        sari,
        rouge2,
        hamming,
        exact_match: item.references.contains(&item.output),
    })
}

/// Per-instance scores and arithmetic means. An empty corpus has zero means.
pub fn evaluate_corpus(items: &[EvalItem], max_n: usize) -> Result<CorpusReport, MetricError> {
    let instances = items
        .iter()
        .map(|it| score_item(it, max_n))
        .collect::<Result<Vec<_>, _>>()?;
    let n = instances.len();
    let mean = |f: &dyn Fn(&InstanceScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            instances.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mean_sari = SariScore::from_components(
        mean(&|s| s.sari.keep_f1),
        mean(&|s| s.sari.delete_f1),
        mean(&|s| s.sari.add_f1),
    );
    let mut label_counts = BTreeMap::new();
    for s in &instances {
        let key = s.label.clone().unwrap_or_else(|| "UNLABELED".into());
        *label_counts.entry(key).or_insert(0) += 1;
    }
    Ok(CorpusReport {
        count: n,
        mean_rouge2: mean(&|s| s.rouge2),
        mean_hamming: mean(&|s| s.hamming as f64),
        exact_match_rate: mean(&|s| f64::from(u8::from(s.exact_match))),
        mean_sari,
        label_counts,
        instances,
    })
}
