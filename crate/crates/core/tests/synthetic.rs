use std::sync::Arc;

use factedit_core::scorers::reference_bundle;
use factedit_core::synth::{background_corpus, correction_rate, planted_errors, reference_config, supported_claims};
use factedit_core::text::{apply_edit, EditState};
use factedit_core::{EnergyWeights, Sampler, SamplerConfig};

fn config() -> SamplerConfig {
    SamplerConfig {
        seed: 42,
        ..SamplerConfig::default()
    }
}

// Brute-force oracle: no single edit from the gold claim reaches a state of lower or equal
// energy, so the gold claim is a strict local minimum the sampler can settle in.
#[test]
fn gold_claims_are_local_energy_minima() {
    let bg = background_corpus();
    let rc = reference_config();
    for inst in planted_errors(30, 1) {
        let ev = Arc::new(inst.evidence_set());
        let bundle = reference_bundle(&inst.claim, &ev, &bg, &rc);
        let sampler = Sampler::new(bundle.scorers(), bundle.proposer(), config());
        let gold = EditState::initial(inst.claim.clone(), ev)
            .unwrap()
            .with_tokens(inst.gold.clone());
        let e_gold = sampler.energy(&gold).unwrap().total;
        let kernel = sampler.kernel();
        let pos = kernel.positions(&gold).unwrap();
        for (action, _) in kernel.enumerate_moves(&gold, &pos).unwrap().moves {
            let next = apply_edit(&gold, &action).unwrap();
            if next.tokens() == gold.tokens() {
                continue;
            }
            let e = sampler.energy(&next).unwrap().total;
            assert!(
                e > e_gold,
                "{} beaten by {} ({e} <= {e_gold})",
                inst.gold,
                next.current()
            );
        }
    }
}

#[test]
fn planted_errors_are_mostly_corrected() {
    let bg = background_corpus();
    let rate = correction_rate(&planted_errors(60, 1), &bg, &reference_config(), &config(), 20).unwrap();
    assert!(rate >= 0.9, "{rate}");
}

#[test]
fn supported_claims_are_left_alone() {
    let bg = background_corpus();
    let rate = correction_rate(&supported_claims(60, 2), &bg, &reference_config(), &config(), 20).unwrap();
    assert!(rate >= 0.95, "{rate}");
}

#[test]
fn verifier_term_drives_correction() {
    let bg = background_corpus();
    let insts = planted_errors(30, 1);
    let full = correction_rate(&insts, &bg, &reference_config(), &config(), 20).unwrap();
    let blind = SamplerConfig {
        weights: EnergyWeights::new(1.0, 0.0, 1.0).unwrap(),
        ..config()
    };
    let without = correction_rate(&insts, &bg, &reference_config(), &blind, 20).unwrap();
    assert!(without < full, "{without} vs {full}");
}
