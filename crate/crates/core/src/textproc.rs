//! Corpus ingestion: tokenization, truecasing, length filtering and a
//! character n-gram Naive Bayes language identifier.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::{Error, FxMap, Result};

/// A tokenized line. Tokens are never empty and never contain whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub line_index: usize,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, line_index: usize) -> Self {
        Sentence { tokens, line_index }
    }

    /// Builds a sentence from already-split tokens, dropping empty ones.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        Sentence {
            tokens: tokens
                .iter()
                .map(|t| t.as_ref())
                .filter(|t| !t.is_empty())
                .map(ToString::to_string)
                .collect(),
            line_index: 0,
        }
    }

    /// Whitespace split without punctuation peeling.
    pub fn from_spaced(line: &str) -> Self {
        Sentence {
            tokens: line.split_whitespace().map(ToString::to_string).collect(),
            line_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_peelable(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// off each chunk one character at a time. Internal punctuation ("a-b",
/// "don't", "3.5") stays attached.
pub fn tokenize(raw_line: &str, line_index: usize) -> Sentence {
    let mut tokens = Vec::new();
    for chunk in raw_line.split_whitespace() {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && is_peelable(chars[lo].1) {
            lo += 1;
        }
        while hi > lo && is_peelable(chars[hi - 1].1) {
            hi -= 1;
        }
        for &(_, c) in &chars[..lo] {
            tokens.push(c.to_string());
        }
        if lo < hi {
            let start = chars[lo].0;
            let end = if hi == chars.len() {
                chunk.len()
            } else {
                chars[hi].0
            };
            tokens.push(chunk[start..end].to_string());
        }
        for &(_, c) in &chars[hi..] {
            tokens.push(c.to_string());
        }
    }
    Sentence { tokens, line_index }
}

/// Most frequent casing per lowercased word.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TruecaseModel {
    pub entries: BTreeMap<String, (String, u64)>,
}

impl TruecaseModel {
    pub fn casing(&self, word: &str) -> Option<&str> {
        self.entries
            .get(&word.to_lowercase())
            .map(|(c, _)| c.as_str())
    }
}

/// Moses-style truecaser training. Sentence-initial tokens are only counted
/// for words never seen elsewhere.
pub fn train_truecaser<'a, I>(corpus: I) -> Result<TruecaseModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    type Counts = BTreeMap<String, BTreeMap<String, u64>>;
    let mut inner: Counts = BTreeMap::new();
    let mut initial: Counts = BTreeMap::new();
    let mut seen = false;
    for s in corpus {
        seen = true;
        for (i, tok) in s.tokens.iter().enumerate() {
            let table = if i == 0 { &mut initial } else { &mut inner };
            *table
                .entry(tok.to_lowercase())
                .or_default()
                .entry(tok.clone())
                .or_insert(0) += 1;
        }
    }
    if !seen {
        return Err(Error::Empty("truecaser corpus"));
    }

    let mut entries = BTreeMap::new();
    let keys: Vec<String> = inner.keys().chain(initial.keys()).cloned().collect();
    for lower in keys {
        if entries.contains_key(&lower) {
            continue;
        }
        let forms = inner.get(&lower).or_else(|| initial.get(&lower)).unwrap();
        let mut best: Option<(&String, u64)> = None;
        for (form, &count) in forms {
            best = match best {
                None => Some((form, count)),
                Some((bf, bc)) => {
                    let better = count > bc
                        || (count == bc && *form == lower && *bf != lower)
                        || (count == bc && *bf != lower && form < bf);
                    if better {
                        Some((form, count))
                    } else {
                        Some((bf, bc))
                    }
                }
            };
        }
        let (form, count) = best.unwrap();
        entries.insert(lower.clone(), (form.clone(), count));
    }
    Ok(TruecaseModel { entries })
}

/// Recases the first token only. Unknown words pass through.
pub fn apply_truecase(s: &Sentence, model: &TruecaseModel) -> Sentence {
    let mut out = s.clone();
    if let Some(first) = out.tokens.first_mut() {
        if let Some(casing) = model.casing(first) {
            *first = casing.to_string();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthFilter {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for LengthFilter {
    fn default() -> Self {
        LengthFilter {
            min_tokens: 3,
            max_tokens: 80,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop,
}

pub fn filter_by_length(s: &Sentence, filter: LengthFilter) -> Verdict {
    let n = s.tokens.len();
    if n >= filter.min_tokens && n <= filter.max_tokens {
        Verdict::Keep
    } else {
        Verdict::Drop
    }
}

/// Multinomial Naive Bayes over character n-grams, add-one smoothed.
///
/// Each label's table covers every n-gram seen in training under any label;
/// the remaining mass sits in a single per-label `unseen` bucket, so a
/// label's table plus its unseen bucket sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LangIdModel {
    pub order: usize,
    pub labels: Vec<String>,
    pub log_priors: Vec<f64>,
    pub tables: Vec<FxMap<String, f64>>,
    pub unseen: Vec<f64>,
}

/// Character n-grams of the space-joined sentence padded by one space on
/// each side. Empty sentences have no n-grams; padded text shorter than
/// `order` yields itself as a single gram.
pub fn char_ngrams(s: &Sentence, order: usize) -> Vec<String> {
    if s.tokens.is_empty() {
        return Vec::new();
    }
    let mut text = String::from(" ");
    text.push_str(&s.join());
    text.push(' ');
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= order {
        return alloc::vec![text];
    }
    chars
        .windows(order)
        .map(|w| w.iter().collect::<String>())
        .collect()
}

pub fn train_langid<'a, I>(
    labeled: &BTreeMap<String, I>,
    ngram_order: usize,
) -> Result<LangIdModel>
where
    I: Clone + IntoIterator<Item = &'a Sentence>,
{
    if labeled.len() < 2 {
        return Err(Error::invalid("language id needs at least two labels"));
    }
    if ngram_order == 0 {
        return Err(Error::invalid("n-gram order must be positive"));
    }
    let mut counts: Vec<FxMap<String, u64>> = Vec::new();
    let mut sentence_counts = Vec::new();
    let mut union: BTreeMap<String, ()> = BTreeMap::new();
    for (label, corpus) in labeled {
        let mut table: FxMap<String, u64> = FxMap::default();
        let mut n = 0usize;
        for s in corpus.clone() {
            n += 1;
            for g in char_ngrams(s, ngram_order) {
                *table.entry(g).or_insert(0) += 1;
            }
        }
        if n == 0 {
            return Err(Error::invalid(alloc::format!(
                "label {label:?} has no training sentences"
            )));
        }
        for g in table.keys() {
            union.insert(g.clone(), ());
        }
        counts.push(table);
        sentence_counts.push(n);
    }
    let total_sentences: usize = sentence_counts.iter().sum();
    let vocab = union.len() as f64;
    let mut tables = Vec::new();
    let mut unseen = Vec::new();
    for table in &counts {
        let tokens: u64 = table.values().sum();
        let denom = tokens as f64 + vocab + 1.0;
        let mut logp: FxMap<String, f64> = FxMap::default();
        for g in union.keys() {
            let c = table.get(g).copied().unwrap_or(0) as f64;
            logp.insert(g.clone(), ((c + 1.0) / denom).ln());
        }
        tables.push(logp);
        unseen.push((1.0 / denom).ln());
    }
    Ok(LangIdModel {
        order: ngram_order,
        labels: labeled.keys().cloned().collect(),
        log_priors: sentence_counts
            .iter()
            .map(|&n| (n as f64 / total_sentences as f64).ln())
            .collect(),
        tables,
        unseen,
    })
}

impl LangIdModel {
    /// Unnormalized log posterior per label, in label order.
    pub fn log_posteriors(&self, s: &Sentence) -> Vec<f64> {
        let grams = char_ngrams(s, self.order);
        (0..self.labels.len())
            .map(|l| {
                let table = &self.tables[l];
                self.log_priors[l]
                    + grams
                        .iter()
                        .map(|g| table.get(g).copied().unwrap_or(self.unseen[l]))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Returns the argmax label (earliest label on ties) and the margin between
/// the best and second-best log posterior.
pub fn classify_language<'m>(s: &Sentence, model: &'m LangIdModel) -> (&'m str, f64) {
    let post = model.log_posteriors(s);
    let mut best = 0;
    for (i, &p) in post.iter().enumerate() {
        if p > post[best] {
            best = i;
        }
    }
    let second = post
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    (model.labels[best].as_str(), post[best] - second)
}

/// Keeps sentences classified as `keep_label`, preserving order.
pub fn filter_language<'a>(
    corpus: &'a [Sentence],
    model: &LangIdModel,
    keep_label: &str,
) -> Vec<&'a Sentence> {
    corpus
        .iter()
        .filter(|s| classify_language(s, model).0 == keep_label)
        .collect()
}
