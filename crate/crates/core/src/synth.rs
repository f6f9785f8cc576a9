//! Synthetic claims with planted entity errors, for end-to-end checks of the sampler.
//!
//! Each instance comes from a template: a claim frame with one slot, and an evidence
//! sentence that states the same fact in different words. A refuted claim carries a wrong
//! filler of the slot's type that the evidence never mentions; the gold correction carries
//! the filler the evidence names. A background corpus fills every claim frame with every
//! filler of its type, so the n-gram fluency model knows the frames but has no preference
//! between fillers.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{chain_rng, derive_seed, CorrectionResult, EngineError, Sampler, SamplerConfig};
use crate::scorers::{reference_bundle, ReferenceConfig};
use crate::text::{EditState, EvidenceSet, TokenSequence};

const NATIONALITIES: &[&str] = &[
    "American",
    "German",
    "French",
    "Italian",
    "British",
    "Canadian",
    "Japanese",
    "Spanish",
    "Swedish",
    "Mexican",
    "Australian",
    "Danish",
];
const CITIES: &[&str] = &[
    "Paris", "Berlin", "London", "Madrid", "Rome", "Vienna", "Tokyo", "Boston", "Chicago", "Dublin", "Prague", "Lisbon",
];
const COUNTRIES: &[&str] = &[
    "France", "Germany", "Japan", "Canada", "Brazil", "Spain", "Italy", "Mexico", "Sweden", "Norway", "Chile", "Poland",
];
const PEOPLE: &[&str] = &[
    "Anna Berg",
    "Mark Cole",
    "Lena Hart",
    "Paul Novak",
    "Ruth Diaz",
    "Owen Price",
    "Clara Holm",
    "Victor Lang",
    "Irene Stone",
    "Hugo Brandt",
    "Maya Quinn",
    "Felix Moreau",
];
const FILMS: &[&str] = &[
    "Silent River",
    "Blue Harbor",
    "Night Train",
    "Golden Hour",
    "Paper Moon",
    "Iron Valley",
    "Broken Compass",
    "Winter Garden",
    "Red Orchard",
    "Hollow Crown",
    "Glass Tower",
    "Distant Shore",
    "Velvet Storm",
    "Quiet Fields",
    "Amber Road",
    "Crimson Tide",
    "Lost Signal",
    "Open Water",
    "Stone Bridge",
    "Pale Horizon",
];
const PLACES: &[&str] = &[
    "Velmora", "Ostrava", "Kelburn", "Marisol", "Tarnow", "Brenna", "Caldera", "Dunmore", "Esker", "Falkirk", "Garrow",
    "Hadley", "Isolde", "Jarrow", "Kestrel", "Lunder",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Nationality,
    City,
    Year,
    Country,
    Person,
}

impl Slot {
    fn fillers(self) -> Vec<String> {
        match self {
            Slot::Nationality => NATIONALITIES.iter().map(|s| s.to_string()).collect(),
            Slot::City => CITIES.iter().map(|s| s.to_string()).collect(),
            Slot::Country => COUNTRIES.iter().map(|s| s.to_string()).collect(),
            Slot::Person => PEOPLE.iter().map(|s| s.to_string()).collect(),
            Slot::Year => (1962..1974).map(|y| y.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Subject {
    Film,
    Person,
    Place,
}

impl Subject {
    fn pool(self) -> &'static [&'static str] {
        match self {
            Subject::Film => FILMS,
            Subject::Person => PEOPLE,
            Subject::Place => PLACES,
        }
    }
}

struct Template {
    subject: Subject,
    slot: Slot,
    claim: &'static str,
    evidence: &'static str,
}

// {S} subject, {X} slot, {A} the indefinite article for the slot, {P} a person named only
// in the evidence
const TEMPLATES: &[Template] = &[
    Template {
        subject: Subject::Film,
        slot: Slot::Nationality,
        claim: "{S} is {A} {X} film .",
        evidence: "{S} is {A} {X} drama film directed by {P} .",
    },
    Template {
        subject: Subject::Person,
        slot: Slot::City,
        claim: "{S} was born in {X} .",
        evidence: "{S} is a singer and actor who was born in {X} .",
    },
    Template {
        subject: Subject::Film,
        slot: Slot::Year,
        claim: "{S} was released in {X} .",
        evidence: "{S} is a drama film directed by {P} that was first released in {X} .",
    },
    Template {
        subject: Subject::Place,
        slot: Slot::Country,
        claim: "{S} is located in {X} .",
        evidence: "{S} is a small town located in the north of {X} .",
    },
    Template {
        subject: Subject::Film,
        slot: Slot::Person,
        claim: "{S} was directed by {X} .",
        evidence: "{S} is a crime film written and directed by {X} .",
    },
    Template {
        subject: Subject::Place,
        slot: Slot::Country,
        claim: "{S} is the capital of {X} .",
        evidence: "{S} has been the capital city of {X} since 1850 .",
    },
];

fn article(word: &str) -> &'static str {
    if word.starts_with(['A', 'E', 'I', 'O', 'U']) {
        "an"
    } else {
        "a"
    }
}

fn fill(frame: &str, subject: &str, slot: &str, person: &str) -> TokenSequence {
    TokenSequence::from_text(
        &frame
            .replace("{S}", subject)
            .replace("{A}", article(slot))
            .replace("{X}", slot)
            .replace("{P}", person),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub id: String,
    pub claim: TokenSequence,
    pub evidence: Vec<TokenSequence>,
    pub gold: TokenSequence,
    pub label: String,
}

/// Add-k constant for the synthetic suite's n-gram model. With k = 1 the unseen-context
/// mass is large enough that deleting tokens lowers the energy more than Hamming distance
/// raises it, and the chain drifts toward shorter claims.
pub const SYNTHETIC_ADD_K: f64 = 0.01;

/// Reference scorer parameters used for the synthetic suites.
pub fn reference_config() -> ReferenceConfig {
    ReferenceConfig {
        add_k: SYNTHETIC_ADD_K,
        ..ReferenceConfig::default()
    }
}

/// Every claim frame filled with every (subject, filler) pair of its types.
pub fn background_corpus() -> Vec<TokenSequence> {
    let mut out = Vec::new();
    for tpl in TEMPLATES {
        for subject in tpl.subject.pool() {
            for f in tpl.slot.fillers() {
                out.push(fill(tpl.claim, subject, &f, ""));
            }
        }
    }
    out
}

fn generate(n: usize, seed: u64, planted: bool) -> Vec<SyntheticInstance> {
    let mut rng = chain_rng(seed);
    (0..n)
        .map(|i| {
            let tpl = &TEMPLATES[i % TEMPLATES.len()];
            let subject = *tpl.subject.pool().choose(&mut rng).expect("non-empty pool");
            let fillers = tpl.slot.fillers();
            let gold = fillers[rng.gen_range(0..fillers.len())].clone();
            let person = loop {
                let p = *PEOPLE.choose(&mut rng).expect("non-empty");
                if p != subject && p != gold {
                    break p;
                }
            };
            let wrong = loop {
                let w = &fillers[rng.gen_range(0..fillers.len())];
                // same article, so the planted error stays one entity edit away
                let same_article = !tpl.claim.contains("{A}") || article(w) == article(&gold);
                if *w != gold && w != person && same_article {
                    break w.clone();
                }
            };
            let gold_claim = fill(tpl.claim, subject, &gold, "");
            let claim = if planted {
                fill(tpl.claim, subject, &wrong, "")
            } else {
                gold_claim.clone()
            };
            SyntheticInstance {
                id: format!("{}-{i:03}", if planted { "planted" } else { "supported" }),
                claim,
                evidence: vec![fill(tpl.evidence, subject, &gold, person)],
                gold: gold_claim,
                label: if planted { "REFUTED" } else { "SUPPORTED" }.into(),
            }
        })
        .collect()
}

/// `n` claims, each with one wrong entity the evidence contradicts.
pub fn planted_errors(n: usize, seed: u64) -> Vec<SyntheticInstance> {
    generate(n, seed, true)
}

/// `n` claims the evidence already supports.
pub fn supported_claims(n: usize, seed: u64) -> Vec<SyntheticInstance> {
    generate(n, seed, false)
}

impl SyntheticInstance {
    pub fn evidence_set(&self) -> EvidenceSet {
        EvidenceSet::new(self.evidence.clone(), &self.claim, &[])
    }

    /// Runs the sampler with reference scorers; the chain seed is derived from `config.seed`
    /// and the instance id.
    pub fn correct(
        &self,
        background: &[TokenSequence],
        reference: &ReferenceConfig,
        config: &SamplerConfig,
    ) -> Result<CorrectionResult, EngineError> {
        let evidence = Arc::new(self.evidence_set());
        let bundle = reference_bundle(&self.claim, &evidence, background, reference);
        let sampler = Sampler::new(bundle.scorers(), bundle.proposer(), *config);
        let mut rng = chain_rng(derive_seed(config.seed, &self.id));
        sampler.run_with(EditState::initial(self.claim.clone(), evidence)?, &mut rng)
    }
}

/// Fraction of instances whose best state within `within` iterations equals the gold claim.
pub fn correction_rate(
    instances: &[SyntheticInstance],
    background: &[TokenSequence],
    reference: &ReferenceConfig,
    config: &SamplerConfig,
    within: usize,
) -> Result<f64, EngineError> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for inst in instances {
        let result = inst.correct(background, reference, config)?;
        if *result.best_within(within).0 == inst.gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / instances.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::LexicalVerifier;

    fn coverage(s: &TokenSequence, inst: &SyntheticInstance) -> f64 {
        LexicalVerifier::coverage(s.tokens(), &inst.evidence_set())
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(planted_errors(12, 3), planted_errors(12, 3));
        assert_ne!(planted_errors(12, 3), planted_errors(12, 4));
    }

    #[test]
    fn planted_claims_differ_from_gold_only_in_the_slot() {
        for inst in planted_errors(60, 1) {
            assert_ne!(inst.claim, inst.gold);
            assert!(coverage(&inst.gold, &inst) > coverage(&inst.claim, &inst));
            assert_eq!(coverage(&inst.gold, &inst), 1.0);
        }
        for inst in supported_claims(12, 1) {
            assert_eq!(inst.claim, inst.gold);
        }
    }

    #[test]
    fn background_is_neutral_between_fillers() {
        let bg = background_corpus();
        for f in NATIONALITIES {
            let n = bg.iter().filter(|s| s.tokens().iter().any(|t| t == f)).count();
            assert_eq!(n, FILMS.len());
        }
    }
}
