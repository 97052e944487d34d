//! Interpolated Kneser-Ney n-gram language model, kept in ARPA (backoff)
//! form.
//!
//! Each sentence is counted as `<s> w1 … wn </s>` with a single `<s>`; the
//! start marker is only ever a context. n-grams that begin with `<s>` keep
//! their raw counts at every order, all other lower-order n-grams use
//! continuation counts.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::textproc::Sentence;
use crate::vocab::{Vocab, WordId};
use crate::{Error, FxMap, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 probability written for `<s>`, which is never predicted.
pub const BOS_LOG10: f64 = -99.0;

#[derive(Debug, Clone)]
pub struct NgramCounts {
    pub order: usize,
    pub vocab: Vocab,
    /// `tables[k - 1]` holds the k-gram counts.
    pub tables: Vec<FxMap<Vec<WordId>, u64>>,
}

impl NgramCounts {
    pub fn get(&self, ngram: &[&str]) -> u64 {
        let ids: Option<Vec<WordId>> = ngram.iter().map(|w| self.vocab.get(w)).collect();
        match ids {
            Some(ids) if !ids.is_empty() && ids.len() <= self.order => {
                self.tables[ids.len() - 1].get(&ids).copied().unwrap_or(0)
            }
            _ => 0,
        }
    }
}

pub fn count_ngrams(corpus: &[Sentence], order: usize) -> Result<NgramCounts> {
    if order == 0 {
        return Err(Error::invalid("language model order must be at least 1"));
    }
    let mut vocab = Vocab::new();
    let bos = vocab.intern(BOS);
    let eos = vocab.intern(EOS);
    let mut tables: Vec<FxMap<Vec<WordId>, u64>> = (0..order).map(|_| FxMap::default()).collect();
    let mut seq = Vec::new();
    for s in corpus {
        seq.clear();
        seq.push(bos);
        for t in &s.tokens {
            seq.push(vocab.intern(t));
        }
        seq.push(eos);
        for k in 1..=order {
            for w in seq.windows(k) {
                if k == 1 && w[0] == bos {
                    continue;
                }
                *tables[k - 1].entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    Ok(NgramCounts {
        order,
        vocab,
        tables,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramEntry {
    pub log10_prob: f64,
    pub log10_backoff: f64,
}

#[derive(Debug, Clone)]
pub struct ArpaLM {
    pub order: usize,
    pub vocab: Vocab,
    /// `ngrams[k - 1]` holds the k-gram entries.
    pub ngrams: Vec<FxMap<Vec<WordId>, NgramEntry>>,
    bos: WordId,
    eos: WordId,
    unk: WordId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnReport {
    pub discounts: Vec<f64>,
    /// Orders whose count-of-counts gave no usable discount (0.5 used).
    pub fallback_orders: Vec<usize>,
}

/// Interpolated Kneser-Ney, one discount per order `D = n1 / (n1 + 2·n2)`.
pub fn estimate_kn(counts: &NgramCounts) -> Result<(ArpaLM, KnReport)> {
    let order = counts.order;
    let mut vocab = counts.vocab.clone();
    let bos = vocab.intern(BOS);
    let eos = vocab.intern(EOS);
    let unk = vocab.intern(UNK);

    // Adjusted counts per order.
    let mut adjusted: Vec<FxMap<Vec<WordId>, u64>> = Vec::with_capacity(order);
    for k in 1..=order {
        if k == order {
            adjusted.push(counts.tables[k - 1].clone());
            continue;
        }
        let mut table: FxMap<Vec<WordId>, u64> = FxMap::default();
        for (g, &c) in &counts.tables[k - 1] {
            if g[0] == bos {
                table.insert(g.clone(), c);
            }
        }
        for g in counts.tables[k].keys() {
            if g[1] != bos {
                *table.entry(g[1..].to_vec()).or_insert(0) += 1;
            }
        }
        // n-grams whose every occurrence starts a sentence have no left
        // extension; `<s>`-initial ones already hold raw counts.
        for (g, &c) in &counts.tables[k - 1] {
            table.entry(g.clone()).or_insert(c);
        }
        adjusted.push(table);
    }

    let mut report = KnReport::default();
    let mut discounts = Vec::with_capacity(order);
    for (k, table) in adjusted.iter().enumerate() {
        let (mut n1, mut n2) = (0u64, 0u64);
        for (g, &a) in table {
            if k == 0 && g[0] == bos {
                continue;
            }
            match a {
                1 => n1 += 1,
                2 => n2 += 1,
                _ => {}
            }
        }
        let d = if n1 == 0 {
            report.fallback_orders.push(k + 1);
            0.5
        } else {
            n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)
        };
        discounts.push(d);
    }
    report.discounts = discounts.clone();

    // Context totals and type counts.
    let mut ctx: Vec<FxMap<Vec<WordId>, (u64, u64)>> = Vec::with_capacity(order);
    for table in &adjusted {
        let mut m: FxMap<Vec<WordId>, (u64, u64)> = FxMap::default();
        for (g, &a) in table {
            if g.len() == 1 && g[0] == bos {
                continue;
            }
            let e = m.entry(g[..g.len() - 1].to_vec()).or_insert((0, 0));
            e.0 += a;
            e.1 += 1;
        }
        ctx.push(m);
    }

    let mut ngrams: Vec<FxMap<Vec<WordId>, NgramEntry>> = (0..order).map(|_| FxMap::default()).collect();

    // Unigrams: interpolate with the uniform distribution over the
    // predictable vocabulary (everything but <s>, plus <unk>).
    let (uni_total, uni_types) = ctx[0].get(&Vec::new()).copied().unwrap_or((0, 0));
    if uni_total == 0 {
        return Err(Error::Empty("language model corpus"));
    }
    let has_unk = adjusted[0].contains_key(&vec![unk]);
    let predictable = uni_types + u64::from(!has_unk);
    let d1 = discounts[0];
    let uniform_mass = d1 * uni_types as f64 / uni_total as f64 / predictable as f64;
    for (g, &a) in &adjusted[0] {
        if g[0] == bos {
            continue;
        }
        let p = (a as f64 - d1).max(0.0) / uni_total as f64 + uniform_mass;
        ngrams[0].insert(g.clone(), NgramEntry { log10_prob: p.log10(), log10_backoff: 0.0 });
    }
    if !has_unk {
        ngrams[0].insert(vec![unk], NgramEntry { log10_prob: uniform_mass.log10(), log10_backoff: 0.0 });
    }
    ngrams[0].insert(vec![bos], NgramEntry { log10_prob: BOS_LOG10, log10_backoff: 0.0 });

    for k in 2..=order {
        let d = discounts[k - 1];
        let (lower, rest) = ngrams.split_at_mut(k - 1);
        let lower = &lower[k - 2];
        for (g, &a) in &adjusted[k - 1] {
            let (total, types) = ctx[k - 1][&g[..k - 1]];
            let lower_p = 10f64.powf(lower[&g[1..]].log10_prob);
            let p = (a as f64 - d).max(0.0) / total as f64
                + d * types as f64 / total as f64 * lower_p;
            rest[0].insert(g.clone(), NgramEntry { log10_prob: p.log10(), log10_backoff: 0.0 });
        }
    }

    // Backoff weights live on the context n-gram.
    for k in 2..=order {
        let d = discounts[k - 1];
        for (h, &(total, types)) in &ctx[k - 1] {
            let gamma = d * types as f64 / total as f64;
            if let Some(e) = ngrams[h.len() - 1].get_mut(h) {
                e.log10_backoff = gamma.log10();
            }
        }
    }

    Ok((
        ArpaLM {
            order,
            vocab,
            ngrams,
            bos,
            eos,
            unk,
        },
        report,
    ))
}

impl ArpaLM {
    /// Builds a model from explicit entries (word n-gram, log10 p, log10 bo).
    pub fn from_entries(order: usize, entries: Vec<(Vec<String>, f64, f64)>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("language model order must be at least 1"));
        }
        let mut vocab = Vocab::new();
        let bos = vocab.intern(BOS);
        let eos = vocab.intern(EOS);
        let unk = vocab.intern(UNK);
        let mut ngrams: Vec<FxMap<Vec<WordId>, NgramEntry>> = (0..order).map(|_| FxMap::default()).collect();
        for (words, p, bo) in entries {
            if words.is_empty() || words.len() > order {
                return Err(Error::invalid(alloc::format!(
                    "n-gram of length {} in an order-{order} model",
                    words.len()
                )));
            }
            let ids = vocab.intern_all(&words);
            ngrams[ids.len() - 1].insert(ids, NgramEntry { log10_prob: p, log10_backoff: bo });
        }
        Ok(ArpaLM {
            order,
            vocab,
            ngrams,
            bos,
            eos,
            unk,
        })
    }

    /// All entries as (words, log10 p, log10 bo), sorted by order then words.
    pub fn entries(&self) -> Vec<(Vec<String>, f64, f64)> {
        let mut out = Vec::new();
        for table in &self.ngrams {
            let mut block: Vec<(Vec<String>, f64, f64)> = table
                .iter()
                .map(|(g, e)| {
                    (
                        g.iter().map(|&w| self.vocab.word(w).to_string()).collect(),
                        e.log10_prob,
                        e.log10_backoff,
                    )
                })
                .collect();
            block.sort_by(|a, b| a.0.cmp(&b.0));
            out.extend(block);
        }
        out
    }

    pub fn bos(&self) -> WordId {
        self.bos
    }

    pub fn eos(&self) -> WordId {
        self.eos
    }

    pub fn unk(&self) -> WordId {
        self.unk
    }

    /// Id of a word, `<unk>` when the model has no unigram for it.
    pub fn word_id(&self, w: &str) -> WordId {
        match self.vocab.get(w) {
            Some(id) if self.ngrams[0].contains_key(&[id][..]) => id,
            _ => self.unk,
        }
    }

    /// log10 P(w | context) with standard backoff; only the last
    /// `order - 1` context words matter.
    pub fn log10_prob(&self, context: &[WordId], w: WordId) -> f64 {
        let keep = context.len().min(self.order - 1);
        let mut ctx = &context[context.len() - keep..];
        let mut acc = 0.0;
        let mut key: Vec<WordId> = Vec::with_capacity(self.order);
        loop {
            key.clear();
            key.extend_from_slice(ctx);
            key.push(w);
            if let Some(e) = self.ngrams[key.len() - 1].get(&key) {
                return acc + e.log10_prob;
            }
            if ctx.is_empty() {
                // Unknown unigram: fall back to <unk>.
                return acc
                    + self.ngrams[0]
                        .get(&[self.unk][..])
                        .map_or(BOS_LOG10, |e| e.log10_prob);
            }
            if let Some(e) = self.ngrams[ctx.len() - 1].get(ctx) {
                acc += e.log10_backoff;
            }
            ctx = &ctx[1..];
        }
    }

    pub fn score_ids(&self, words: &[WordId]) -> f64 {
        let mut ctx = vec![self.bos];
        let mut total = 0.0;
        for &w in words.iter().chain(core::iter::once(&self.eos)) {
            total += self.log10_prob(&ctx, w);
            ctx.push(w);
        }
        total
    }
}

/// log10 probability of the sentence including `</s>`.
pub fn score_sentence(lm: &ArpaLM, s: &Sentence) -> f64 {
    let ids: Vec<WordId> = s.tokens.iter().map(|t| lm.word_id(t)).collect();
    lm.score_ids(&ids)
}

/// `10^(−Σ log10 p / N)` where N counts every word and `</s>`.
pub fn perplexity(lm: &ArpaLM, corpus: &[Sentence]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("perplexity corpus"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for s in corpus {
        total += score_sentence(lm, s);
        n += s.len() + 1;
    }
    Ok(10f64.powf(-total / n as f64))
}
