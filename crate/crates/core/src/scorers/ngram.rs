//! Add-k smoothed n-gram model used as the reference fluency scorer.
//!
//! Two count tables are kept, one reading left-to-right and one right-to-left, so a token
//! can be scored from either side. The pseudo-log-likelihood of a sequence averages the
//! two directions per position.

use std::collections::HashMap;

use super::{FluencyModel, ScorerError};

const BOUNDARY: u32 = u32::MAX;
const UNKNOWN: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Default)]
struct DirectionalCounts {
    // context ids ++ [word id] -> count
    ngrams: HashMap<Vec<u32>, u64>,
    // context ids -> total count over vocabulary words
    contexts: HashMap<Vec<u32>, u64>,
}

impl DirectionalCounts {
    fn add(&mut self, padded: &[u32], ctx_len: usize) {
        for i in ctx_len..padded.len() {
            let ctx = &padded[i - ctx_len..i];
            *self.ngrams.entry(padded[i - ctx_len..=i].to_vec()).or_default() += 1;
            *self.contexts.entry(ctx.to_vec()).or_default() += 1;
        }
    }

    fn count(&self, ctx: &[u32], word: u32) -> (u64, u64) {
        let mut key = Vec::with_capacity(ctx.len() + 1);
        key.extend_from_slice(ctx);
        key.push(word);
        (
            self.ngrams.get(&key).copied().unwrap_or(0),
            self.contexts.get(ctx).copied().unwrap_or(0),
        )
    }
}

/// Add-k n-gram model with forward and backward count tables.
#[derive(Debug, Clone)]
pub struct NGramMLM {
    order: usize,
    k: f64,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    forward: DirectionalCounts,
    backward: DirectionalCounts,
}

impl NGramMLM {
    /// An untrained model (uniform over whatever vocabulary is added).
    pub fn new(order: usize, k: f64) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        assert!(k > 0.0, "add-k constant must be positive");
        Self {
            order,
            k,
            vocab: Vec::new(),
            ids: HashMap::new(),
            forward: DirectionalCounts::default(),
            backward: DirectionalCounts::default(),
        }
    }

    pub fn with_vocab<S: AsRef<str>>(order: usize, k: f64, vocab: &[S]) -> Self {
        let mut m = Self::new(order, k);
        for v in vocab {
            m.intern(v.as_ref());
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&id) = self.ids.get(tok) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(tok.to_string());
        self.ids.insert(tok.to_string(), id);
        id
    }

    fn id(&self, tok: &str) -> u32 {
        self.ids.get(tok).copied().unwrap_or(UNKNOWN)
    }

    pub fn extend_vocab<S: AsRef<str>>(&mut self, tokens: &[S]) {
        for t in tokens {
            self.intern(t.as_ref());
        }
    }

    pub fn train_sentence<S: AsRef<str>>(&mut self, tokens: &[S]) {
        if tokens.is_empty() {
            return;
        }
        let ids: Vec<u32> = tokens.iter().map(|t| self.intern(t.as_ref())).collect();
        let ctx = self.order - 1;
        let mut padded = vec![BOUNDARY; ctx];
        padded.extend_from_slice(&ids);
        self.forward.add(&padded, ctx);
        let mut padded = vec![BOUNDARY; ctx];
        padded.extend(ids.iter().rev());
        self.backward.add(&padded, ctx);
    }

    pub fn train<S: AsRef<str>>(&mut self, corpus: &[Vec<S>]) {
        for s in corpus {
            self.train_sentence(s);
        }
    }

    fn smoothed(&self, counts: &DirectionalCounts, ctx: &[u32], word: u32) -> f64 {
        let (c, total) = if word == UNKNOWN {
            (0, counts.count(ctx, word).1)
        } else {
            counts.count(ctx, word)
        };
        let v = self.vocab.len().max(1) as f64;
        (c as f64 + self.k) / (total as f64 + self.k * v)
    }

    fn context_ids(&self, side: &[String], forward: bool) -> Vec<u32> {
        // most distant first, matching the padded training layout
        let n = self.order - 1;
        let mut ctx = vec![BOUNDARY; n];
        if forward {
            let take = side.len().min(n);
            for (slot, tok) in ctx[n - take..].iter_mut().zip(&side[side.len() - take..]) {
                *slot = self.id(tok);
            }
        } else {
            let take = side.len().min(n);
            for (slot, tok) in ctx[n - take..].iter_mut().zip(side[..take].iter().rev()) {
                *slot = self.id(tok);
            }
        }
        ctx
    }

    /// `P(word | left)` from the left-to-right table; `left` is everything before the word.
    pub fn prob_forward(&self, left: &[String], word: &str) -> f64 {
        let ctx = self.context_ids(left, true);
        self.smoothed(&self.forward, &ctx, self.id(word))
    }

    /// `P(word | right)` from the right-to-left table; `right` is everything after the word.
    pub fn prob_backward(&self, right: &[String], word: &str) -> f64 {
        let ctx = self.context_ids(right, false);
        self.smoothed(&self.backward, &ctx, self.id(word))
    }

    /// Average of forward and backward log-probabilities of `seq[i]`.
    pub fn position_logprob(&self, seq: &[String], i: usize) -> f64 {
        0.5 * (self.prob_forward(&seq[..i], &seq[i]).ln() + self.prob_backward(&seq[i + 1..], &seq[i]).ln())
    }

    pub fn pseudo_loglik_of(&self, seq: &[String]) -> f64 {
        (0..seq.len()).map(|i| self.position_logprob(seq, i)).sum()
    }
}

impl FluencyModel for NGramMLM {
    fn pseudo_loglik(&self, seq: &[String]) -> Result<f64, ScorerError> {
        Ok(self.pseudo_loglik_of(seq))
    }
}
