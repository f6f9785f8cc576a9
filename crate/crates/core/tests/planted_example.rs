use std::collections::HashSet;
use std::sync::Arc;

use factedit_core::scorers::reference_bundle;
use factedit_core::synth::{background_corpus, reference_config};
use factedit_core::text::apply_edit;
use factedit_core::{EditState, EvidenceSet, Sampler, SamplerConfig, TokenSequence};

const EVIDENCE: &str = "One True Thing is an American drama film .";
const GOLD: &str = "One True Thing is an American film .";

fn setup(claim: &str) -> (TokenSequence, Arc<EvidenceSet>, factedit_core::scorers::ScorerBundle) {
    let claim = TokenSequence::from_text(claim);
    let ev = Arc::new(EvidenceSet::new(vec![TokenSequence::from_text(EVIDENCE)], &claim, &[]));
    let bundle = reference_bundle(&claim, &ev, &background_corpus(), &reference_config());
    (claim, ev, bundle)
}

// Exhaustive search of everything reachable in at most two moves.
#[test]
fn gold_is_the_unique_minimizer_within_two_edits() {
    let (claim, ev, bundle) = setup("One True Thing is a German film .");
    let sampler = Sampler::new(bundle.scorers(), bundle.proposer(), SamplerConfig::default());
    let kernel = sampler.kernel();
    let start = EditState::initial(claim, ev).unwrap();
    let mut seen: HashSet<Vec<String>> = HashSet::from([start.tokens().to_vec()]);
    let mut frontier = vec![start.clone()];
    for _ in 0..2 {
        let mut next = Vec::new();
        for x in &frontier {
            let pos = kernel.positions(x).unwrap();
            for (a, _) in kernel.enumerate_moves(x, &pos).unwrap().moves {
                let n = apply_edit(x, &a).unwrap();
                if seen.insert(n.tokens().to_vec()) {
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    let gold = TokenSequence::from_text(GOLD);
    assert!(seen.contains(gold.tokens()));
    let e_gold = sampler.energy(&start.with_tokens(gold.clone())).unwrap().total;
    for t in seen {
        let t = TokenSequence::new(t).unwrap();
        if t != gold {
            let e = sampler.energy(&start.with_tokens(t.clone())).unwrap().total;
            assert!(e > e_gold, "{t} ({e}) vs gold ({e_gold})");
        }
    }
}

#[test]
fn wrong_nationality_is_corrected_for_most_seeds() {
    let (claim, ev, bundle) = setup("One True Thing is an Italian film .");
    let hits = (0..100)
        .filter(|&seed| {
            let s = Sampler::new(
                bundle.scorers(),
                bundle.proposer(),
                SamplerConfig {
                    seed,
                    ..SamplerConfig::default()
                },
            );
            s.run(claim.clone(), ev.clone()).unwrap().best.to_text() == GOLD
        })
        .count();
    assert!(hits >= 90, "{hits}/100");
}
