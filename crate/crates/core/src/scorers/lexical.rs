//! Evidence-coverage verifier.

use super::{clamp_prob, ScorerError, Verifier};
use crate::text::EvidenceSet;

/// English function words plus punctuation; never counted as claim content.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being",
    "but", "by", "can", "could", "did", "do", "does", "during", "each", "for", "from", "had", "has", "have", "he",
    "her", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "may", "more", "most",
    "no", "nor", "not", "of", "on", "only", "or", "other", "our", "over", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
    "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    if token.chars().all(|c| c.is_ascii_punctuation()) {
        return true;
    }
    let lower = token.to_lowercase();
    STOPWORDS.binary_search(&lower.as_str()).is_ok()
}

/// `σ(κ·(c − c₀))` over the fraction `c` of content tokens found in the evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalVerifier {
    pub steepness: f64,
    pub midpoint: f64,
}

impl Default for LexicalVerifier {
    fn default() -> Self {
        Self {
            steepness: 50.0,
            midpoint: 0.95,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LexicalVerifier {
    pub fn new(steepness: f64, midpoint: f64) -> Self {
        Self { steepness, midpoint }
    }

    /// Fraction of non-stopword tokens mentioned by the evidence; 1 when there are none.
    pub fn coverage(seq: &[String], evidence: &EvidenceSet) -> f64 {
        let (mut content, mut covered) = (0usize, 0usize);
        for t in seq.iter().filter(|t| !is_stopword(t)) {
            content += 1;
            if evidence.mentions(t) {
                covered += 1;
            }
        }
        if content == 0 {
            1.0
        } else {
            covered as f64 / content as f64
        }
    }

    pub fn prob_from_coverage(&self, c: f64) -> f64 {
        clamp_prob(sigmoid(self.steepness * (c - self.midpoint)))
    }
}

impl Verifier for LexicalVerifier {
    fn support_prob(&self, seq: &[String], evidence: &EvidenceSet) -> Result<f64, ScorerError> {
        Ok(self.prob_from_coverage(Self::coverage(seq, evidence)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::TokenSequence;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn evidence(p: &str) -> EvidenceSet {
        EvidenceSet::from_texts(&[p], &TokenSequence::default())
    }

    #[test]
    fn stopword_table_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stopword("The"));
        assert!(is_stopword("."));
        assert!(!is_stopword("Paris"));
    }

    #[test]
    fn sigmoid_reference_values() {
        let v = LexicalVerifier::new(10.0, 0.5);
        assert!((v.prob_from_coverage(0.5) - 0.5).abs() < 1e-12);
        assert!((v.prob_from_coverage(1.0) - 0.993_307_149_075_715_2).abs() < 1e-12);
        assert!((v.prob_from_coverage(0.0) - 0.006_692_850_924_284_856).abs() < 1e-12);
    }

    #[test]
    fn coverage_counts_content_tokens() {
        let ev = evidence("Paris is in France");
        assert_eq!(LexicalVerifier::coverage(&toks("Paris is in Germany"), &ev), 0.5);
        assert_eq!(LexicalVerifier::coverage(&toks("is in the"), &ev), 1.0);
        assert_eq!(LexicalVerifier::coverage(&[], &ev), 1.0);
        // case-insensitive
        assert_eq!(LexicalVerifier::coverage(&toks("paris FRANCE"), &ev), 1.0);
    }

    #[test]
    fn clamped_at_extremes() {
        let v = LexicalVerifier::new(1e4, 0.5);
        assert_eq!(v.prob_from_coverage(0.0), 1e-6);
        assert_eq!(v.prob_from_coverage(1.0), 1.0 - 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: &[&str] = &["Paris", "France", "is", "in", "the", "Germany", "city", ".", "capital"];

        fn claim() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec(prop::sample::select(WORDS), 0..10)
                .prop_map(|v| v.into_iter().map(String::from).collect())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn output_is_clamped(c in claim(), k in 0.0f64..200.0, mid in -1.0f64..2.0) {
                let v = LexicalVerifier::new(k, mid);
                let p = v.support_prob(&c, &evidence("Paris is the capital of France .")).unwrap();
                prop_assert!((1e-6..=1.0 - 1e-6).contains(&p));
            }
        }

        proptest! {
            #[test]
            fn adding_covered_content_never_hurts(c in claim(), at in 0usize..10) {
                let ev = evidence("Paris is the capital of France .");
                let v = LexicalVerifier::default();
                let before = v.support_prob(&c, &ev).unwrap();
                let mut grown = c.clone();
                grown.insert(at.min(c.len()), "capital".to_string());
                prop_assert!(v.support_prob(&grown, &ev).unwrap() >= before);
            }
        }
    }
}
