//! Repairs for synthetic (back-translated) corpora and for final system
//! output: untranslated-word masking, windowed reordering, named-entity
//! treatment and quotation marks.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::aligner::Alignment;
use crate::textproc::Sentence;
use crate::{Error, Result};

pub const UNK: &str = "unk";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NeType {
    AddressNumber,
    Geographical,
    Institution,
    Media,
    Number,
    Artifact,
    Personal,
    Time,
}

impl NeType {
    pub const ALL: [NeType; 8] = [
        NeType::AddressNumber,
        NeType::Geographical,
        NeType::Institution,
        NeType::Media,
        NeType::Number,
        NeType::Artifact,
        NeType::Personal,
        NeType::Time,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NeType::AddressNumber => "address-number",
            NeType::Geographical => "geographical",
            NeType::Institution => "institution",
            NeType::Media => "media",
            NeType::Number => "number",
            NeType::Artifact => "artifact",
            NeType::Personal => "personal",
            NeType::Time => "time",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        NeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown NE type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeSpan {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub kind: NeType,
    pub surface: String,
}

impl NeSpan {
    fn check(&self, len: usize) -> Result<()> {
        if self.start >= self.end || self.end > len {
            return Err(Error::invalid(alloc::format!(
                "NE span {}..{} invalid for sentence {} of length {len}",
                self.start, self.end, self.sentence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreAction {
    Copy,
    Remove,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostAction {
    Copy,
    Ignore,
}

impl PreAction {
    pub fn name(self) -> &'static str {
        match self {
            PreAction::Copy => "copy",
            PreAction::Remove => "remove",
            PreAction::Ignore => "ignore",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(PreAction::Copy),
            "remove" => Ok(PreAction::Remove),
            "ignore" => Ok(PreAction::Ignore),
            _ => Err(Error::invalid(alloc::format!("unknown pre-action {s:?}"))),
        }
    }
}

impl PostAction {
    pub fn name(self) -> &'static str {
        match self {
            PostAction::Copy => "copy",
            PostAction::Ignore => "ignore",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(PostAction::Copy),
            "ignore" => Ok(PostAction::Ignore),
            _ => Err(Error::invalid(alloc::format!("unknown post-action {s:?}"))),
        }
    }
}

/// Pre- and post-treatment action for each of the eight NE types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NePolicy {
    pub rows: [(PreAction, PostAction); 8],
}

impl Default for NePolicy {
    fn default() -> Self {
        use PostAction as Po;
        use PreAction as Pr;
        NePolicy {
            rows: [
                (Pr::Copy, Po::Copy),     // address-number
                (Pr::Remove, Po::Copy),   // geographical
                (Pr::Copy, Po::Ignore),   // institution
                (Pr::Copy, Po::Ignore),   // media
                (Pr::Copy, Po::Copy),     // number
                (Pr::Copy, Po::Ignore),   // artifact
                (Pr::Copy, Po::Copy),     // personal
                (Pr::Copy, Po::Ignore),   // time
            ],
        }
    }
}

impl NePolicy {
    pub fn all_ignore() -> Self {
        NePolicy {
            rows: [(PreAction::Ignore, PostAction::Ignore); 8],
        }
    }

    fn idx(kind: NeType) -> usize {
        NeType::ALL.iter().position(|&t| t == kind).unwrap_or(0)
    }

    pub fn pre(&self, kind: NeType) -> PreAction {
        self.rows[Self::idx(kind)].0
    }

    pub fn post(&self, kind: NeType) -> PostAction {
        self.rows[Self::idx(kind)].1
    }

    pub fn set(&mut self, kind: NeType, pre: PreAction, post: PostAction) {
        self.rows[Self::idx(kind)] = (pre, post);
    }
}

/// Characters that mark a token as belonging to the source language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiacriticProfile {
    pub chars: BTreeSet<char>,
}

impl DiacriticProfile {
    /// Czech letters not shared with German.
    pub fn czech() -> Self {
        let lower = "áčďéěíňóřšťúůýž";
        let chars = lower.chars().flat_map(|c| c.to_uppercase().chain(core::iter::once(c))).collect();
        DiacriticProfile { chars }
    }

    pub fn new<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let chars: BTreeSet<char> = chars.into_iter().collect();
        if chars.is_empty() {
            return Err(Error::Empty("diacritic profile"));
        }
        Ok(DiacriticProfile { chars })
    }

    pub fn marks(&self, token: &str) -> bool {
        token.chars().any(|c| self.chars.contains(&c))
    }
}

/// Replaces every target token containing a profile character with `unk`.
/// Returns the new target side and the number of replacements.
pub fn strip_untranslated(
    src: &[Sentence],
    tgt: &[Sentence],
    profile: &DiacriticProfile,
    unk: &str,
) -> Result<(Vec<Sentence>, usize)> {
    if src.len() != tgt.len() {
        return Err(Error::LengthMismatch {
            what: "bitext sides",
            left: src.len(),
            right: tgt.len(),
        });
    }
    let mut replaced = 0;
    let out = tgt
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for t in s.tokens.iter_mut() {
                if profile.marks(t) {
                    *t = unk.to_string();
                    replaced += 1;
                }
            }
            s
        })
        .collect();
    Ok((out, replaced))
}

/// Uniform shuffle inside consecutive, non-overlapping windows.
pub fn window_shuffle<R: rand::Rng>(tokens: &mut [String], window: usize, rng: &mut R) {
    for chunk in tokens.chunks_mut(window.max(1)) {
        chunk.shuffle(rng);
    }
}

/// Doubles the corpus: pass one shuffles odd-indexed sentences and copies
/// even-indexed ones, pass two does the opposite.
pub fn reorder_augment(corpus: &[Sentence], window: usize, seed: u64) -> Result<Vec<Sentence>> {
    if window < 1 {
        return Err(Error::invalid("window must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(corpus.len() * 2);
    for parity in [1, 0] {
        for (i, s) in corpus.iter().enumerate() {
            let mut s = s.clone();
            if i % 2 == parity {
                window_shuffle(&mut s.tokens, window, &mut rng);
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// Lowercase, decompose and drop combining marks.
pub fn fold_for_matching(s: &str) -> String {
    s.to_lowercase().nfd().filter(|c| !is_combining_mark(*c)).collect()
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance after case folding and diacritic stripping.
pub fn ne_distance(a: &str, b: &str) -> usize {
    levenshtein(&fold_for_matching(a), &fold_for_matching(b))
}

/// One edit applied to a sentence, in the coordinates of the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub action: &'static str,
    pub tokens: Vec<String>,
}

/// Applies non-overlapping replacements right to left.
fn apply_edits(tokens: &[String], edits: &[&Replacement]) -> Vec<String> {
    let mut out = tokens.to_vec();
    let mut sorted: Vec<&&Replacement> = edits.iter().collect();
    sorted.sort_by(|a, b| b.start.cmp(&a.start));
    for e in sorted {
        out.splice(e.start..e.end, e.tokens.iter().cloned());
    }
    out
}

/// Re-applies a replacement log to the original sentences.
pub fn replay(input: &[Sentence], log: &[Replacement]) -> Vec<Sentence> {
    input
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let edits: Vec<&Replacement> = log.iter().filter(|r| r.sentence == i).collect();
            let mut s = s.clone();
            if !edits.is_empty() {
                s.tokens = apply_edits(&s.tokens, &edits);
            }
            s
        })
        .collect()
}

/// Contiguous range from the smallest to the largest linked position.
fn hull(positions: impl Iterator<Item = usize>) -> Option<(usize, usize)> {
    let mut lo = usize::MAX;
    let mut hi = 0;
    let mut any = false;
    for p in positions {
        any = true;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    any.then_some((lo, hi + 1))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeReport {
    pub sentences: Vec<Sentence>,
    pub log: Vec<Replacement>,
    /// Spans left alone because the existing translation was close enough.
    pub trusted: usize,
    /// Spans with no aligned counterpart.
    pub unaligned: usize,
    /// Spans whose hull overlapped an earlier replacement in the same
    /// sentence; these are not applied.
    pub overlaps: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretreatConfig {
    /// `None` disables the distance check, so every span is trusted.
    pub lev_threshold: Option<usize>,
    pub unk: String,
    /// Delete removed hulls instead of masking them with `unk`.
    pub delete_removed: bool,
}

impl Default for PretreatConfig {
    fn default() -> Self {
        PretreatConfig {
            lev_threshold: Some(3),
            unk: UNK.into(),
            delete_removed: false,
        }
    }
}

/// Accepts proposed edits for one sentence in hull order, flagging those
/// that overlap an accepted one.
fn admit(proposed: Vec<Replacement>, log: &mut Vec<Replacement>, overlaps: &mut Vec<(usize, usize, usize)>) -> Vec<Replacement> {
    let mut accepted: Vec<Replacement> = Vec::new();
    let mut sorted = proposed;
    sorted.sort_by_key(|r| (r.start, r.end));
    for r in sorted {
        if accepted.iter().any(|a| r.start < a.end && a.start < r.end) {
            overlaps.push((r.sentence, r.start, r.end));
            continue;
        }
        accepted.push(r);
    }
    log.extend(accepted.iter().cloned());
    accepted
}

fn check_spans(spans: &[NeSpan], sides: &[Sentence]) -> Result<()> {
    for sp in spans {
        let s = sides
            .get(sp.sentence)
            .ok_or_else(|| Error::invalid(alloc::format!("NE span for missing sentence {}", sp.sentence)))?;
        sp.check(s.len())?;
    }
    Ok(())
}

/// Source-side NEs whose aligned target hull differs by more than the
/// threshold are copied, masked or ignored per policy.
pub fn ne_pretreat(
    src: &[Sentence],
    tgt: &[Sentence],
    spans: &[NeSpan],
    alignments: &[Alignment],
    policy: &NePolicy,
    cfg: &PretreatConfig,
) -> Result<NeReport> {
    if src.len() != tgt.len() || src.len() != alignments.len() {
        return Err(Error::LengthMismatch {
            what: "bitext vs alignments",
            left: src.len(),
            right: tgt.len().min(alignments.len()),
        });
    }
    check_spans(spans, src)?;
    let mut report = NeReport::default();
    let mut per_sentence: Vec<Vec<Replacement>> = vec![Vec::new(); src.len()];
    for sp in spans {
        let i = sp.sentence;
        let t = &tgt[i];
        let Some((hs, he)) = hull(
            alignments[i]
                .links
                .iter()
                .filter(|l| (sp.start..sp.end).contains(&l.0) && l.1 < t.len())
                .map(|l| l.1),
        ) else {
            report.unaligned += 1;
            continue;
        };
        let surface = src[i].tokens[sp.start..sp.end].join(" ");
        let counterpart = t.tokens[hs..he].join(" ");
        if cfg.lev_threshold.is_none_or(|th| ne_distance(&surface, &counterpart) <= th) {
            report.trusted += 1;
            continue;
        }
        let (action, tokens) = match policy.pre(sp.kind) {
            PreAction::Ignore => continue,
            PreAction::Copy => ("copy", src[i].tokens[sp.start..sp.end].to_vec()),
            PreAction::Remove if cfg.delete_removed => ("delete", Vec::new()),
            PreAction::Remove => ("remove", vec![cfg.unk.clone()]),
        };
        per_sentence[i].push(Replacement {
            sentence: i,
            start: hs,
            end: he,
            action,
            tokens,
        });
    }
    let mut out = Vec::with_capacity(tgt.len());
    for (i, proposed) in per_sentence.into_iter().enumerate() {
        let accepted = admit(proposed, &mut report.log, &mut report.overlaps);
        let mut s = tgt[i].clone();
        if !accepted.is_empty() {
            s.tokens = apply_edits(&s.tokens, &accepted.iter().collect::<Vec<_>>());
        }
        out.push(s);
    }
    report.sentences = out;
    Ok(report)
}

/// Hypothesis-side NEs whose type is copy-on-post are replaced by the hull
/// of aligned source tokens. `alignment` links (source, hypothesis).
pub fn ne_posttreat(
    src: &Sentence,
    hyp: &Sentence,
    alignment: &Alignment,
    spans: &[NeSpan],
    policy: &NePolicy,
) -> Result<NeReport> {
    for sp in spans {
        sp.check(hyp.len())?;
    }
    let mut report = NeReport::default();
    let mut proposed = Vec::new();
    for sp in spans {
        if policy.post(sp.kind) == PostAction::Ignore {
            continue;
        }
        let Some((hs, he)) = hull(
            alignment
                .links
                .iter()
                .filter(|l| (sp.start..sp.end).contains(&l.1) && l.0 < src.len())
                .map(|l| l.0),
        ) else {
            report.unaligned += 1;
            continue;
        };
        proposed.push(Replacement {
            sentence: sp.sentence,
            start: sp.start,
            end: sp.end,
            action: "copy",
            tokens: src.tokens[hs..he].to_vec(),
        });
    }
    let accepted = admit(proposed, &mut report.log, &mut report.overlaps);
    let mut s = hyp.clone();
    s.tokens = apply_edits(&s.tokens, &accepted.iter().collect::<Vec<_>>());
    report.sentences = vec![s];
    Ok(report)
}

/// Word lists for the rule-based tagger; entries may span several tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    pub personal: BTreeSet<String>,
    pub geographical: BTreeSet<String>,
}

const GAZETTEER_MAX_TOKENS: usize = 4;

fn is_number(tok: &str) -> bool {
    let mut saw_digit = false;
    let mut prev_sep = true;
    for c in tok.chars() {
        if c.is_ascii_digit() {
            saw_digit = true;
            prev_sep = false;
        } else if (c == '.' || c == ',') && !prev_sep {
            prev_sep = true;
        } else {
            return false;
        }
    }
    saw_digit && !prev_sep
}

fn is_capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

/// Rule-based NE tagger: digit tokens are numbers, gazetteer hits (longest
/// first) are personal or geographical, and runs of capitalized tokens
/// after the first position default to personal.
pub fn tag_nes_default(s: &Sentence, sentence: usize, gazetteer: Option<&Gazetteer>) -> Vec<NeSpan> {
    let toks = &s.tokens;
    let mut out = Vec::new();
    let mut i = 0;
    let span = |start: usize, end: usize, kind: NeType| NeSpan {
        sentence,
        start,
        end,
        kind,
        surface: toks[start..end].join(" "),
    };
    'outer: while i < toks.len() {
        if is_number(&toks[i]) {
            out.push(span(i, i + 1, NeType::Number));
            i += 1;
            continue;
        }
        if let Some(g) = gazetteer {
            for len in (1..=GAZETTEER_MAX_TOKENS.min(toks.len() - i)).rev() {
                let phrase = toks[i..i + len].join(" ");
                let kind = if g.geographical.contains(&phrase) {
                    NeType::Geographical
                } else if g.personal.contains(&phrase) {
                    NeType::Personal
                } else {
                    continue;
                };
                out.push(span(i, i + len, kind));
                i += len;
                continue 'outer;
            }
        }
        if i > 0 && is_capitalized(&toks[i]) {
            let start = i;
            while i < toks.len() && is_capitalized(&toks[i]) {
                i += 1;
            }
            out.push(span(start, i, NeType::Personal));
            continue;
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuoteStyle {
    pub open: char,
    pub close: char,
}

impl QuoteStyle {
    pub const CZECH: QuoteStyle = QuoteStyle {
        open: '\u{201E}',
        close: '\u{201C}',
    };
}

/// Straight double quotes alternate between opening and closing marks. An
/// unmatched final quote becomes closing and is reported as a warning.
pub fn normalize_quotes(s: &Sentence, style: QuoteStyle) -> (Sentence, usize) {
    let total: usize = s.tokens.iter().map(|t| t.matches('"').count()).sum();
    let mut seen = 0;
    let mut out = s.clone();
    for tok in out.tokens.iter_mut() {
        if !tok.contains('"') {
            continue;
        }
        *tok = tok
            .chars()
            .map(|c| {
                if c != '"' {
                    return c;
                }
                let odd_last = total % 2 == 1 && seen == total - 1;
                let q = if seen % 2 == 0 && !odd_last { style.open } else { style.close };
                seen += 1;
                q
            })
            .collect();
    }
    (out, total % 2)
}

/// Indices of sentences with at least one NE span and of those without,
/// each in original order.
pub fn split_by_ne_presence(n_sentences: usize, spans: &[NeSpan]) -> (Vec<usize>, Vec<usize>) {
    let tagged: BTreeSet<usize> = spans.iter().map(|s| s.sentence).collect();
    (0..n_sentences).partition(|i| tagged.contains(i))
}
