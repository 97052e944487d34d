//! Phrase vocabulary and skip-gram negative-sampling phrase embeddings.
//!
//! Every vocabulary phrase (unigram, bigram or trigram) is trained as a
//! center unit that predicts the unigrams within `window` tokens of its
//! boundaries. Contexts are always unigrams.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::linalg::{dot, Matrix};
use crate::textproc::Sentence;
use crate::{Error, FxMap, Result};

pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseEntry {
    /// Tokens joined by a single space.
    pub phrase: String,
    pub order: u8,
    pub frequency: u64,
}

/// Entries grouped by order (unigrams first); within an order sorted by
/// descending frequency, then lexicographically. An entry's index is its
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseVocab {
    pub entries: Vec<PhraseEntry>,
    pub caps: [usize; MAX_ORDER],
    index: FxMap<String, usize>,
}

impl PhraseVocab {
    /// Rebuilds the lookup index; entries must already satisfy the ordering
    /// invariant.
    pub fn from_entries(entries: Vec<PhraseEntry>, caps: [usize; MAX_ORDER]) -> Result<Self> {
        let mut index = FxMap::default();
        for (i, e) in entries.iter().enumerate() {
            if e.order == 0 || e.order as usize > MAX_ORDER {
                return Err(Error::invalid(alloc::format!("bad order for {:?}", e.phrase)));
            }
            if index.insert(e.phrase.clone(), i).is_some() {
                return Err(Error::invalid(alloc::format!("duplicate phrase {:?}", e.phrase)));
            }
        }
        Ok(PhraseVocab {
            entries,
            caps,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, phrase: &str) -> Option<usize> {
        self.index.get(phrase).copied()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.phrase.clone()).collect()
    }
}

/// Counts contiguous 1-, 2- and 3-grams and keeps the `caps[n-1]` most
/// frequent of each order (frequency ties broken lexicographically).
pub fn build_phrase_vocab(corpus: &[Sentence], caps: [usize; MAX_ORDER]) -> Result<PhraseVocab> {
    if caps.iter().any(|&c| c == 0) {
        return Err(Error::invalid("phrase vocabulary caps must be positive"));
    }
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::Empty("phrase vocabulary corpus"));
    }
    let mut counts: [FxMap<String, u64>; MAX_ORDER] = Default::default();
    for s in corpus {
        for n in 1..=MAX_ORDER {
            if s.tokens.len() < n {
                break;
            }
            for w in s.tokens.windows(n) {
                *counts[n - 1].entry(w.join(" ")).or_insert(0) += 1;
            }
        }
    }
    let mut entries = Vec::new();
    for (n, table) in counts.into_iter().enumerate() {
        let mut items: Vec<(String, u64)> = table.into_iter().collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.truncate(caps[n]);
        entries.extend(items.into_iter().map(|(phrase, frequency)| PhraseEntry {
            phrase,
            order: (n + 1) as u8,
            frequency,
        }));
    }
    PhraseVocab::from_entries(entries, caps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormState {
    Raw,
    Unit,
    CenteredUnit,
}

/// One vector per vocabulary entry, labelled by phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub labels: Vec<String>,
    pub vectors: Matrix,
    pub norm_state: NormState,
}

impl EmbeddingMatrix {
    pub fn new(labels: Vec<String>, vectors: Matrix) -> Self {
        assert_eq!(labels.len(), vectors.rows);
        EmbeddingMatrix {
            labels,
            vectors,
            norm_state: NormState::Raw,
        }
    }

    pub fn rows(&self) -> usize {
        self.vectors.rows
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn all_finite(&self) -> bool {
        self.vectors.data.iter().all(|v| v.is_finite())
    }

    /// Copy with every row scaled to unit length (zero rows stay zero).
    pub fn unit_rows(&self) -> Matrix {
        let mut m = self.vectors.clone();
        for r in 0..m.rows {
            let row = m.row_mut(r);
            let n = dot(row, row).sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub window: usize,
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl SgnsConfig {
    /// Published hyperparameters: window 5, 300 dimensions, 10 negatives,
    /// 5 epochs, no subsampling.
    pub fn paper(seed: u64) -> Self {
        SgnsConfig {
            window: 5,
            dim: 300,
            negatives: 10,
            epochs: 5,
            initial_lr: 0.025,
            min_lr: 1e-4,
            seed,
        }
    }

    /// Same schedule at desk scale.
    pub fn desk(seed: u64) -> Self {
        SgnsConfig {
            dim: 32,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.dim == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "window, dim, negatives and epochs must all be at least 1",
            ));
        }
        if !(self.initial_lr > 0.0) || self.min_lr < 0.0 {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

impl Default for SgnsConfig {
    fn default() -> Self {
        Self::desk(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgnsReport {
    /// Vocabulary indices with no occurrence in the corpus; they keep their
    /// random initialization.
    pub untrained: Vec<usize>,
    pub occurrences: usize,
    pub final_lr: f64,
}

struct Occurrence {
    center: u32,
    sentence: u32,
    start: u32,
    end: u32,
}

const NO_CONTEXT: u32 = u32::MAX;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Trains center vectors with skip-gram negative sampling. Single-threaded
/// and bit-reproducible for a fixed seed.
pub fn train_sgns(
    corpus: &[Sentence],
    vocab: &PhraseVocab,
    cfg: &SgnsConfig,
) -> Result<(EmbeddingMatrix, SgnsReport)> {
    cfg.validate()?;
    if vocab.is_empty() {
        return Err(Error::Empty("phrase vocabulary"));
    }
    // Context vocabulary: unigram entries, in vocabulary order.
    let unigram_rows: Vec<usize> = (0..vocab.len())
        .filter(|&i| vocab.entries[i].order == 1)
        .collect();
    let mut ctx_of_vocab = vec![NO_CONTEXT; vocab.len()];
    for (ci, &vi) in unigram_rows.iter().enumerate() {
        ctx_of_vocab[vi] = ci as u32;
    }

    let mut contexts: Vec<Vec<u32>> = Vec::with_capacity(corpus.len());
    let mut occurrences = Vec::new();
    let mut seen = vec![false; vocab.len()];
    let mut buf = String::new();
    for (si, s) in corpus.iter().enumerate() {
        let ids: Vec<u32> = s
            .tokens
            .iter()
            .map(|t| vocab.get(t).map_or(NO_CONTEXT, |v| ctx_of_vocab[v]))
            .collect();
        contexts.push(ids);
        for start in 0..s.tokens.len() {
            for n in 1..=MAX_ORDER {
                let end = start + n;
                if end > s.tokens.len() {
                    break;
                }
                buf.clear();
                for (k, t) in s.tokens[start..end].iter().enumerate() {
                    if k > 0 {
                        buf.push(' ');
                    }
                    buf.push_str(t);
                }
                if let Some(center) = vocab.get(&buf) {
                    seen[center] = true;
                    occurrences.push(Occurrence {
                        center: center as u32,
                        sentence: si as u32,
                        start: start as u32,
                        end: end as u32,
                    });
                }
            }
        }
    }

    // Negative-sampling distribution: unigram frequency ^ 0.75.
    let mut cumulative = Vec::with_capacity(unigram_rows.len());
    let mut acc = 0.0;
    for &vi in &unigram_rows {
        acc += (vocab.entries[vi].frequency as f64).powf(0.75);
        cumulative.push(acc);
    }

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = Matrix::zeros(vocab.len(), dim);
    for v in input.data.iter_mut() {
        *v = (rng.random::<f64>() - 0.5) / dim as f64;
    }
    let mut output = Matrix::zeros(unigram_rows.len(), dim);

    let total_steps = (cfg.epochs * occurrences.len()).max(1) as f64;
    let mut step = 0usize;
    let mut lr = cfg.initial_lr;
    let mut grad = vec![0.0; dim];
    let mut center = vec![0.0; dim];
    for _epoch in 0..cfg.epochs {
        for occ in &occurrences {
            lr = (cfg.initial_lr * (1.0 - step as f64 / total_steps)).max(cfg.min_lr);
            step += 1;
            if cumulative.is_empty() {
                continue;
            }
            let sent = &contexts[occ.sentence as usize];
            let (start, end) = (occ.start as usize, occ.end as usize);
            let left = start.saturating_sub(cfg.window)..start;
            let right = end..(end + cfg.window).min(sent.len());
            for pos in left.chain(right) {
                let positive = sent[pos];
                if positive == NO_CONTEXT {
                    continue;
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                center.copy_from_slice(input.row(occ.center as usize));
                for d in 0..=cfg.negatives {
                    let (target, label) = if d == 0 {
                        (positive, 1.0)
                    } else {
                        let u = rng.random::<f64>() * acc;
                        let t = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
                            as u32;
                        if t == positive {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = output.row_mut(target as usize);
                    let g = (label - sigmoid(dot(&center, out))) * lr;
                    for k in 0..dim {
                        grad[k] += g * out[k];
                        out[k] += g * center[k];
                    }
                }
                for (v, g) in input.row_mut(occ.center as usize).iter_mut().zip(&grad) {
                    *v += g;
                }
            }
        }
        if !input.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("skip-gram center vectors"));
        }
    }

    let untrained = (0..vocab.len()).filter(|&i| !seen[i]).collect();
    Ok((
        EmbeddingMatrix::new(vocab.labels(), input),
        SgnsReport {
            untrained,
            occurrences: occurrences.len(),
            final_lr: lr,
        },
    ))
}

/// Descending cosine, ascending index on ties.
pub(crate) fn rank_cmp(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Keeps the `k` best of `scored` under [`rank_cmp`], sorted.
pub(crate) fn top_k(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_cmp);
        scored.truncate(k);
    }
    scored.sort_by(rank_cmp);
    scored
}

/// Top-`k` rows of `unit` by cosine with the unit vector `query`, optionally
/// excluding one row.
pub fn top_k_cosine(
    query: &[f64],
    unit: &Matrix,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let scored: Vec<(usize, f64)> = (0..unit.rows)
        .filter(|&r| Some(r) != exclude)
        .map(|r| (r, dot(query, unit.row(r))))
        .collect();
    top_k(scored, k)
}

/// Top-`k` neighbors of a row by cosine similarity, excluding the row itself.
/// Requests beyond `rows - 1` return every other row.
pub fn nearest_neighbors(
    query_index: usize,
    m: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query_index >= m.rows() {
        return Err(Error::invalid("query index out of range"));
    }
    let unit = m.unit_rows();
    Ok(top_k_cosine(
        unit.row(query_index),
        &unit,
        k,
        Some(query_index),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::from_spaced(l)).collect()
    }

    #[test]
    fn counts_contiguous_ngrams() {
        let v = build_phrase_vocab(&corpus(&["a b a b"]), [10, 10, 10]).unwrap();
        let f = |p: &str| v.entries[v.get(p).unwrap()].frequency;
        assert_eq!(f("a b"), 2);
        assert_eq!(f("b a"), 1);
        assert_eq!(f("a"), 2);
        assert_eq!(v.len(), 2 + 2 + 2);
    }

    #[test]
    fn caps_and_tie_rule() {
        let v = build_phrase_vocab(&corpus(&["a b a b"]), [2, 1, 1]).unwrap();
        let phrases: Vec<&str> = v.entries.iter().map(|e| e.phrase.as_str()).collect();
        assert_eq!(phrases, ["a", "b", "a b", "a b a"]);
        assert_eq!(v.get("b a b"), None);
    }

    #[test]
    fn vocab_rejects_empty_corpus_and_zero_caps() {
        assert!(build_phrase_vocab(&[], [1, 1, 1]).is_err());
        assert!(build_phrase_vocab(&corpus(&["a"]), [0, 1, 1]).is_err());
    }

    #[test]
    fn sgns_shapes_and_finiteness() {
        let c = corpus(&["a b c d e", "b c d e a", "c a b d e"]);
        let v = build_phrase_vocab(&c, [10, 5, 5]).unwrap();
        let cfg = SgnsConfig {
            dim: 8,
            epochs: 1,
            ..SgnsConfig::desk(3)
        };
        let (m, report) = train_sgns(&c, &v, &cfg).unwrap();
        assert_eq!(m.rows(), v.len());
        assert_eq!(m.dim(), 8);
        assert!(m.all_finite());
        assert!(report.untrained.is_empty());
    }

    #[test]
    fn sgns_is_reproducible() {
        let c = corpus(&["a b c d e", "b c d e a"]);
        let v = build_phrase_vocab(&c, [10, 5, 5]).unwrap();
        let cfg = SgnsConfig {
            dim: 6,
            ..SgnsConfig::desk(11)
        };
        assert_eq!(train_sgns(&c, &v, &cfg).unwrap(), train_sgns(&c, &v, &cfg).unwrap());
    }

    #[test]
    fn sgns_reports_missing_entries() {
        let c = corpus(&["a b c"]);
        let mut entries = build_phrase_vocab(&c, [5, 5, 5]).unwrap().entries;
        entries.push(PhraseEntry {
            phrase: "zzz".to_string(),
            order: 1,
            frequency: 1,
        });
        let v = PhraseVocab::from_entries(entries, [6, 5, 5]).unwrap();
        let (m, report) = train_sgns(&c, &v, &SgnsConfig::desk(1)).unwrap();
        assert_eq!(report.untrained, vec![v.get("zzz").unwrap()]);
        assert!(m.all_finite());
    }

    #[test]
    fn sgns_rejects_zero_epochs() {
        let c = corpus(&["a b c"]);
        let v = build_phrase_vocab(&c, [5, 5, 5]).unwrap();
        let cfg = SgnsConfig {
            epochs: 0,
            ..SgnsConfig::desk(1)
        };
        assert!(train_sgns(&c, &v, &cfg).is_err());
    }

    #[test]
    fn nearest_neighbor_examples() {
        let m = EmbeddingMatrix::new(
            vec!["e1".into(), "e2".into(), "e3".into()],
            Matrix::from_rows(3, 2, vec![1., 0., 0., 1., 1., 0.]),
        );
        assert_eq!(nearest_neighbors(0, &m, 1).unwrap(), vec![(2, 1.0)]);
        assert_eq!(nearest_neighbors(0, &m, 2).unwrap(), vec![(2, 1.0), (1, 0.0)]);
        assert_eq!(nearest_neighbors(0, &m, 10).unwrap().len(), 2);
        assert!(nearest_neighbors(0, &m, 0).is_err());
    }
}
