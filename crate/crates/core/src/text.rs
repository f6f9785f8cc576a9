//! Tokenized claim state, gazetteer-based entity segmentation and edit application.
//!
//! A claim is a sequence of word tokens. The sampler never edits raw tokens directly:
//! it edits *units*, where a unit is either a single non-entity token or a whole
//! named entity recognized by longest-match lookup in a [`Gazetteer`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("edit would leave an empty claim")]
    EmptyResult,
    #[error("invalid token {0:?}: tokens must be non-empty and free of whitespace")]
    InvalidToken(String),
    #[error("empty token sequence")]
    EmptySequence,
}

/// Ordered word tokens of a claim or passage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Builds a sequence, rejecting empty tokens and tokens with internal whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self, TextError> {
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TextError::InvalidToken(t.clone()));
            }
        }
        Ok(Self(tokens))
    }

    pub fn from_text(text: &str) -> Self {
        Self(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

const DETACHED: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', '(', ')'];

/// Whitespace tokenization with leading/trailing punctuation split off as separate tokens.
///
/// Interior punctuation ("U.S", "1,000", "don't") is kept attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && DETACHED.contains(&chars[lo]) {
            lo += 1;
        }
        while hi > lo && DETACHED.contains(&chars[hi - 1]) {
            hi -= 1;
        }
        for c in &chars[..lo] {
            out.push(c.to_string());
        }
        if lo < hi {
            out.push(chars[lo..hi].iter().collect());
        }
        for c in &chars[hi..] {
            out.push(c.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Token,
    Entity,
}

/// Half-open token range `[start, end)` with its unit kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: UnitKind,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn is_entity(&self) -> bool {
        self.kind == UnitKind::Entity
    }
}

/// Disjoint, sorted units covering the whole sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segmentation {
    units: Vec<Span>,
}

impl Segmentation {
    pub fn units(&self) -> &[Span] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn gap_count(&self) -> usize {
        self.units.len() + 1
    }

    /// Token offset of insertion gap `gap` (0 = before the first unit).
    pub fn gap_offset(&self, gap: usize) -> Option<usize> {
        match gap {
            0 => Some(0),
            g if g <= self.units.len() => Some(self.units[g - 1].end),
            _ => None,
        }
    }

    /// Inverse of [`Segmentation::gap_offset`]: the gap sitting at token offset `offset`, if
    /// `offset` is a unit boundary.
    pub fn gap_at_offset(&self, offset: usize) -> Option<usize> {
        if offset == 0 {
            return Some(0);
        }
        self.units.iter().position(|u| u.end == offset).map(|i| i + 1)
    }

    pub fn unit_starting_at(&self, start: usize) -> Option<usize> {
        self.units.iter().position(|u| u.start == start)
    }

    /// Unit index covering token `token`.
    pub fn unit_of_token(&self, token: usize) -> Option<usize> {
        self.units.iter().position(|u| u.start <= token && token < u.end)
    }
}

/// Case-sensitive set of multi-token entity surface forms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeSet<Vec<String>>,
    // first token -> entry lengths, longest first
    by_head: HashMap<String, Vec<usize>>,
}

impl Gazetteer {
    pub fn new<I, E>(entries: I) -> Self
    where
        I: IntoIterator<Item = E>,
        E: Into<Vec<String>>,
    {
        let mut g = Self::default();
        for e in entries {
            g.insert(e.into());
        }
        g
    }

    pub fn insert(&mut self, entry: Vec<String>) {
        if entry.is_empty() || self.entries.contains(&entry) {
            return;
        }
        let lens = self.by_head.entry(entry[0].clone()).or_default();
        lens.push(entry.len());
        lens.sort_unstable_by(|a, b| b.cmp(a));
        lens.dedup();
        self.entries.insert(entry);
    }

    pub fn contains(&self, entry: &[String]) -> bool {
        self.entries.contains(entry)
    }

    /// Entries in a fixed (lexicographic) order.
    pub fn entries(&self) -> impl Iterator<Item = &Vec<String>> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length of the longest entry matching `tokens[at..]`.
    pub fn longest_match(&self, tokens: &[String], at: usize) -> Option<usize> {
        let lens = self.by_head.get(&tokens[at])?;
        lens.iter()
            .copied()
            .find(|&len| at + len <= tokens.len() && self.entries.contains(&tokens[at..at + len]))
    }
}

/// Leftmost-longest gazetteer segmentation; uncovered tokens become singleton units.
pub fn segment(seq: &[String], gazetteer: &Gazetteer) -> Segmentation {
    let mut units = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        match gazetteer.longest_match(seq, i) {
            Some(len) => {
                units.push(Span {
                    start: i,
                    end: i + len,
                    kind: UnitKind::Entity,
                });
                i += len;
            }
            None => {
                units.push(Span {
                    start: i,
                    end: i + 1,
                    kind: UnitKind::Token,
                });
                i += 1;
            }
        }
    }
    Segmentation { units }
}

fn is_stop_like(token: &str) -> bool {
    crate::scorers::lexical::is_stopword(token)
}

fn entity_like(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase) || token.chars().any(|c| c.is_ascii_digit())
}

/// Maximal runs of capitalized or numeric tokens, skipping runs that are a lone stopword
/// ("The", "In", ...).
pub fn harvest_entities(tokens: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !entity_like(&tokens[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && entity_like(&tokens[i]) {
            i += 1;
        }
        let run = &tokens[start..i];
        if run.len() == 1 && is_stop_like(&run[0]) {
            continue;
        }
        out.push(run.to_vec());
    }
    out
}

/// Retrieved evidence passages plus the candidate entity space they induce.
#[derive(Debug, Clone, Default)]
pub struct EvidenceSet {
    passages: Vec<TokenSequence>,
    gazetteer: Gazetteer,
    // lowercase passage vocabulary, for coverage lookups
    lowercase_vocab: HashSet<String>,
}

impl EvidenceSet {
    /// Builds the evidence set; the gazetteer is harvested from passages and the original
    /// claim, then augmented with `extra` entries.
    pub fn new(passages: Vec<TokenSequence>, original: &TokenSequence, extra: &[Vec<String>]) -> Self {
        let mut gazetteer = Gazetteer::default();
        for p in &passages {
            for e in harvest_entities(p.tokens()) {
                gazetteer.insert(e);
            }
        }
        for e in harvest_entities(original.tokens()) {
            gazetteer.insert(e);
        }
        for e in extra {
            gazetteer.insert(e.clone());
        }
        Self::with_gazetteer(passages, gazetteer)
    }

    pub fn with_gazetteer(passages: Vec<TokenSequence>, gazetteer: Gazetteer) -> Self {
        let lowercase_vocab = passages
            .iter()
            .flat_map(|p| p.tokens().iter().map(|t| t.to_lowercase()))
            .collect();
        Self {
            passages,
            gazetteer,
            lowercase_vocab,
        }
    }

    pub fn from_texts<S: AsRef<str>>(passages: &[S], original: &TokenSequence) -> Self {
        let passages = passages.iter().map(|p| TokenSequence::from_text(p.as_ref())).collect();
        Self::new(passages, original, &[])
    }

    pub fn passages(&self) -> &[TokenSequence] {
        &self.passages
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    /// Case-insensitive membership in any passage.
    pub fn mentions(&self, token: &str) -> bool {
        self.lowercase_vocab.contains(&token.to_lowercase())
    }

    pub fn mentions_sequence(&self, needle: &[String]) -> bool {
        !needle.is_empty()
            && self
                .passages
                .iter()
                .any(|p| p.tokens().windows(needle.len()).any(|w| w == needle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

impl EditKind {
    pub const ALL: [EditKind; 3] = [EditKind::Insert, EditKind::Delete, EditKind::Replace];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Token,
    Entity,
}

impl From<UnitKind> for Space {
    fn from(k: UnitKind) -> Self {
        match k {
            UnitKind::Token => Space::Token,
            UnitKind::Entity => Space::Entity,
        }
    }
}

impl Space {
    pub fn matches(self, kind: UnitKind) -> bool {
        Space::from(kind) == self
    }
}

/// One edit. For `Insert`, `unit_index` is a gap index in `0..=units.len()`; for `Delete`,
/// `space` records the kind of the deleted unit so the reverse insertion is determined.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditAction {
    pub kind: EditKind,
    pub unit_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<Vec<String>>,
    pub space: Space,
}

impl EditAction {
    pub fn replace(unit_index: usize, content: Vec<String>, space: Space) -> Self {
        Self {
            kind: EditKind::Replace,
            unit_index,
            content: Some(content),
            space,
        }
    }

    pub fn insert(gap: usize, content: Vec<String>, space: Space) -> Self {
        Self {
            kind: EditKind::Insert,
            unit_index: gap,
            content: Some(content),
            space,
        }
    }

    pub fn delete(unit_index: usize, space: Space) -> Self {
        Self {
            kind: EditKind::Delete,
            unit_index,
            content: None,
            space,
        }
    }
}

/// The chain state: current tokens with their segmentation, linked to the original claim
/// and the evidence.
#[derive(Debug, Clone)]
pub struct EditState {
    current: TokenSequence,
    segmentation: Segmentation,
    original: Arc<TokenSequence>,
    evidence: Arc<EvidenceSet>,
}

impl EditState {
    /// Initial state `x⁰`.
    pub fn initial(claim: TokenSequence, evidence: Arc<EvidenceSet>) -> Result<Self, TextError> {
        if claim.is_empty() {
            return Err(TextError::EmptySequence);
        }
        let segmentation = segment(claim.tokens(), evidence.gazetteer());
        Ok(Self {
            original: Arc::new(claim.clone()),
            current: claim,
            segmentation,
            evidence,
        })
    }

    /// A state at `current` sharing the original claim and evidence of `self`.
    pub fn with_tokens(&self, current: TokenSequence) -> Self {
        let segmentation = segment(current.tokens(), self.evidence.gazetteer());
        Self {
            current,
            segmentation,
            original: Arc::clone(&self.original),
            evidence: Arc::clone(&self.evidence),
        }
    }

    pub fn current(&self) -> &TokenSequence {
        &self.current
    }

    pub fn tokens(&self) -> &[String] {
        self.current.tokens()
    }

    pub fn segmentation(&self) -> &Segmentation {
        &self.segmentation
    }

    pub fn units(&self) -> &[Span] {
        self.segmentation.units()
    }

    pub fn original(&self) -> &TokenSequence {
        &self.original
    }

    pub fn evidence(&self) -> &EvidenceSet {
        &self.evidence
    }

    pub fn evidence_arc(&self) -> &Arc<EvidenceSet> {
        &self.evidence
    }

    pub fn unit_tokens(&self, unit: usize) -> &[String] {
        let u = self.units()[unit];
        &self.tokens()[u.start..u.end]
    }
}

/// Applies `action`, returning a freshly segmented state. The input is untouched.
pub fn apply_edit(state: &EditState, action: &EditAction) -> Result<EditState, TextError> {
    let units = state.units();
    let tokens = state.tokens();
    let content = |a: &EditAction| -> Result<Vec<String>, TextError> {
        match &a.content {
            Some(c) if !c.is_empty() => {
                TokenSequence::new(c.clone())?;
                Ok(c.clone())
            }
            _ => Err(TextError::InvalidAction(format!(
                "{:?} requires non-empty content",
                a.kind
            ))),
        }
    };
    let mut out: Vec<String> = Vec::with_capacity(tokens.len() + 4);
    match action.kind {
        EditKind::Delete => {
            if action.content.is_some() {
                return Err(TextError::InvalidAction("delete carries no content".into()));
            }
            let u = units
                .get(action.unit_index)
                .ok_or_else(|| TextError::InvalidAction(format!("unit {} out of range", action.unit_index)))?;
            if u.len() == tokens.len() {
                return Err(TextError::EmptyResult);
            }
            out.extend_from_slice(&tokens[..u.start]);
            out.extend_from_slice(&tokens[u.end..]);
        }
        EditKind::Replace => {
            let u = units
                .get(action.unit_index)
                .ok_or_else(|| TextError::InvalidAction(format!("unit {} out of range", action.unit_index)))?;
            let c = content(action)?;
            out.extend_from_slice(&tokens[..u.start]);
            out.extend(c);
            out.extend_from_slice(&tokens[u.end..]);
        }
        EditKind::Insert => {
            let at = state
                .segmentation()
                .gap_offset(action.unit_index)
                .ok_or_else(|| TextError::InvalidAction(format!("gap {} out of range", action.unit_index)))?;
            let c = content(action)?;
            out.extend_from_slice(&tokens[..at]);
            out.extend(c);
            out.extend_from_slice(&tokens[at..]);
        }
    }
    Ok(state.with_tokens(TokenSequence(out)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn gaz(entries: &[&str]) -> Gazetteer {
        Gazetteer::new(entries.iter().map(|e| toks(e)))
    }

    fn state(s: &str, entries: &[&str]) -> EditState {
        let ev = EvidenceSet::with_gazetteer(vec![], gaz(entries));
        EditState::initial(TokenSequence(toks(s)), Arc::new(ev)).unwrap()
    }

    fn span(start: usize, end: usize, kind: UnitKind) -> Span {
        Span { start, end, kind }
    }

    #[test]
    fn segments_longest_entities() {
        let seq = toks("Will Smith starred in The Truman Show in 2006");
        let seg = segment(&seq, &gaz(&["Will Smith", "The Truman Show"]));
        use UnitKind::*;
        assert_eq!(
            seg.units(),
            &[
                span(0, 2, Entity),
                span(2, 3, Token),
                span(3, 4, Token),
                span(4, 7, Entity),
                span(7, 8, Token),
                span(8, 9, Token)
            ]
        );
    }

    #[test]
    fn empty_gazetteer_gives_singletons() {
        let seg = segment(&toks("a b c"), &Gazetteer::default());
        assert_eq!(seg.len(), 3);
        assert!(seg.units().iter().all(|u| u.len() == 1 && !u.is_entity()));
    }

    #[test]
    fn leftmost_match_wins_overlap() {
        let seg = segment(&toks("x y z"), &gaz(&["x y", "y z"]));
        assert_eq!(
            seg.units(),
            &[span(0, 2, UnitKind::Entity), span(2, 3, UnitKind::Token)]
        );
    }

    #[test]
    fn longest_entry_preferred_at_same_start() {
        let seg = segment(&toks("a b c d"), &gaz(&["a b", "a b c"]));
        assert_eq!(seg.units()[0], span(0, 3, UnitKind::Entity));
    }

    #[test]
    fn tokenizer_detaches_edge_punctuation() {
        assert_eq!(
            tokenize("One True Thing is a German film."),
            toks("One True Thing is a German film .")
        );
        assert_eq!(tokenize("(born 1970), U.S."), toks("( born 1970 ) , U.S ."));
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn token_sequence_rejects_bad_tokens() {
        assert!(TokenSequence::new(vec!["a b".into()]).is_err());
        assert!(TokenSequence::new(vec!["".into()]).is_err());
        assert!(TokenSequence::new(toks("a b")).is_ok());
    }

    #[test]
    fn harvests_capitalized_runs() {
        let found = harvest_entities(&toks("The film One True Thing was shot in New York in 1998 ."));
        assert_eq!(found, vec![toks("One True Thing"), toks("New York"), toks("1998")]);
    }

    #[test]
    fn delete_replace_insert() {
        let s = state("a b c", &[]);
        let d = apply_edit(&s, &EditAction::delete(1, Space::Token)).unwrap();
        assert_eq!(d.tokens(), toks("a c").as_slice());

        let s = state("a b", &["c d"]);
        let i = apply_edit(&s, &EditAction::insert(2, toks("c d"), Space::Entity)).unwrap();
        assert_eq!(i.tokens(), toks("a b c d").as_slice());
        assert_eq!(i.units()[2], span(2, 4, UnitKind::Entity));

        let r = apply_edit(&s, &EditAction::replace(0, toks("z"), Space::Token)).unwrap();
        assert_eq!(r.tokens(), toks("z b").as_slice());
        assert_eq!(r.original().tokens(), toks("a b").as_slice());
    }

    #[test]
    fn edit_errors() {
        let s = state("a", &[]);
        assert_eq!(
            apply_edit(&s, &EditAction::delete(0, Space::Token)).unwrap_err(),
            TextError::EmptyResult
        );
        assert!(matches!(
            apply_edit(&s, &EditAction::delete(3, Space::Token)),
            Err(TextError::InvalidAction(_))
        ));
        assert!(matches!(
            apply_edit(&s, &EditAction::insert(2, toks("x"), Space::Token)),
            Err(TextError::InvalidAction(_))
        ));
        let mut bad = EditAction::replace(0, vec![], Space::Token);
        assert!(apply_edit(&s, &bad).is_err());
        bad.content = None;
        assert!(apply_edit(&s, &bad).is_err());
    }

    #[test]
    fn entity_delete_removes_whole_unit() {
        let s = state("Will Smith starred", &["Will Smith"]);
        let d = apply_edit(&s, &EditAction::delete(0, Space::Entity)).unwrap();
        assert_eq!(d.tokens(), toks("starred").as_slice());
    }

    #[test]
    fn gap_offsets_round_trip() {
        let s = state("Will Smith starred in it", &["Will Smith"]);
        let seg = s.segmentation();
        for g in 0..seg.gap_count() {
            let off = seg.gap_offset(g).unwrap();
            assert_eq!(seg.gap_at_offset(off), Some(g));
        }
        assert_eq!(seg.gap_at_offset(1), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn seq() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..8)
                .prop_map(|v| v.into_iter().map(String::from).collect())
        }

        proptest! {
            #[test]
            fn segmentation_covers_and_is_idempotent(s in seq()) {
                let g = gaz(&["a b", "c", "b c d"]);
                let seg = segment(&s, &g);
                prop_assert_eq!(&seg, &segment(&s, &g));
                let mut at = 0;
                for u in seg.units() {
                    prop_assert_eq!(u.start, at);
                    prop_assert!(u.end > u.start);
                    if !u.is_entity() { prop_assert_eq!(u.len(), 1); }
                    at = u.end;
                }
                prop_assert_eq!(at, s.len());
            }

            #[test]
            fn token_count_changes_by_content(s in seq(), pick in 0usize..8, c in seq()) {
                let st = state(&s.join(" "), &["a b"]);
                let n = st.units().len();
                let u = pick % n;
                let ulen = st.units()[u].len();
                let ins = apply_edit(&st, &EditAction::insert(pick % (n + 1), c.clone(), Space::Token)).unwrap();
                prop_assert_eq!(ins.tokens().len(), s.len() + c.len());
                let rep = apply_edit(&st, &EditAction::replace(u, c.clone(), Space::Token)).unwrap();
                prop_assert_eq!(rep.tokens().len() + ulen, s.len() + c.len());
                match apply_edit(&st, &EditAction::delete(u, Space::Token)) {
                    Ok(del) => prop_assert_eq!(del.tokens().len() + ulen, s.len()),
                    Err(e) => prop_assert_eq!(e, TextError::EmptyResult),
                }
            }
        }
    }
}
