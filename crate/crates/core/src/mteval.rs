//! Corpus and sentence BLEU over tokenized text.

use alloc::string::String;
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::{Error, FxMap, Result};

pub const MAX_N: usize = 4;

/// Additive sufficient statistics for BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_N],
    pub totals: [u64; MAX_N],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl core::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: BleuStats) {
        for n in 0..MAX_N {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

impl core::ops::SubAssign for BleuStats {
    fn sub_assign(&mut self, o: BleuStats) {
        for n in 0..MAX_N {
            self.matches[n] -= o.matches[n];
            self.totals[n] -= o.totals[n];
        }
        self.hyp_len -= o.hyp_len;
        self.ref_len -= o.ref_len;
    }
}

fn ngram_counts<'a>(toks: &'a [&'a str], n: usize) -> FxMap<&'a [&'a str], u64> {
    let mut m = FxMap::default();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    /// Clipped n-gram matches of one hypothesis against one reference.
    pub fn from_pair<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> Self {
        let h: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
        let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        let mut st = BleuStats {
            hyp_len: h.len() as u64,
            ref_len: r.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_N {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            st.totals[n - 1] = h.len().saturating_sub(n - 1) as u64;
            st.matches[n - 1] = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
        }
        st
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn precisions(&self) -> [f64; MAX_N] {
        core::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        })
    }

    /// BLEU on a 0–100 scale; zero whenever some order has no matches.
    pub fn bleu(&self) -> f64 {
        if self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let logp: f64 = self.precisions().iter().map(|p| p.ln()).sum::<f64>() / MAX_N as f64;
        100.0 * self.brevity_penalty() * logp.exp()
    }

    /// Add-one smoothing on orders 2..4 that have zero matches.
    pub fn smoothed_bleu(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut logp = 0.0;
        for n in 0..MAX_N {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            logp += if n > 0 && self.matches[n] == 0 {
                (1.0 / (t + 1.0)).ln()
            } else {
                (m / t).ln()
            };
        }
        100.0 * self.brevity_penalty() * (logp / MAX_N as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_N],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub cased: bool,
    pub stats: BleuStats,
}

impl BleuReport {
    pub fn from_stats(stats: BleuStats, cased: bool) -> Self {
        BleuReport {
            bleu: stats.bleu(),
            precisions: stats.precisions(),
            brevity_penalty: stats.brevity_penalty(),
            hyp_len: stats.hyp_len,
            ref_len: stats.ref_len,
            cased,
            stats,
        }
    }
}

fn fold_case<S: AsRef<str>>(toks: &[S], cased: bool) -> Vec<String> {
    toks.iter()
        .map(|t| if cased { t.as_ref().into() } else { t.as_ref().to_lowercase() })
        .collect()
}

pub fn pair_stats<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T], cased: bool) -> BleuStats {
    if cased {
        BleuStats::from_pair(hyp, reference)
    } else {
        BleuStats::from_pair(&fold_case(hyp, false), &fold_case(reference, false))
    }
}

/// Single-reference 4-gram corpus BLEU over pre-tokenized sentences.
pub fn corpus_bleu<H: AsRef<[S]>, R: AsRef<[T]>, S: AsRef<str>, T: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    cased: bool,
) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "hypotheses vs references",
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::Empty("BLEU corpus"));
    }
    let mut st = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        st += pair_stats(h.as_ref(), r.as_ref(), cased);
    }
    Ok(BleuReport::from_stats(st, cased))
}

pub fn sentence_bleu<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T], cased: bool) -> f64 {
    pair_stats(hyp, reference, cased).smoothed_bleu()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_100() {
        let h = vec![toks("a b c d e"), toks("f g h i")];
        let r = corpus_bleu(&h, &h, true).unwrap();
        assert!((r.bleu - 100.0).abs() < 1e-9);
        assert!((sentence_bleu(&h[0], &h[0], true) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_is_zero() {
        let r = corpus_bleu(&[toks("x y z w")], &[toks("a b c d")], true).unwrap();
        assert_eq!(r.bleu, 0.0);
        let empty: Vec<&str> = Vec::new();
        assert_eq!(sentence_bleu(&empty, &toks("a b"), true), 0.0);
    }

    #[test]
    fn short_hypothesis_without_four_grams() {
        let r = corpus_bleu(&[toks("the cat sat")], &[toks("the cat sat down")], true).unwrap();
        assert_eq!(&r.precisions[..3], &[1.0, 1.0, 1.0]);
        assert!((r.brevity_penalty - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        // no 4-gram in the hypothesis, so the geometric mean collapses
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn uncased_folds() {
        let r = corpus_bleu(&[toks("The Cat sat on mats")], &[toks("the cat sat on mats")], false).unwrap();
        assert!((r.bleu - 100.0).abs() < 1e-9);
        let c = corpus_bleu(&[toks("The Cat sat on mats")], &[toks("the cat sat on mats")], true).unwrap();
        assert!(c.bleu < 100.0);
    }

    #[test]
    fn smoothing_only_touches_zero_orders() {
        let h = toks("a b c d e f");
        let r = toks("a b c d e f");
        let st = BleuStats::from_pair(&h, &r);
        assert!((st.smoothed_bleu() - st.bleu()).abs() < 1e-9);
        let st2 = BleuStats::from_pair(&toks("a x b y"), &toks("a z b w"));
        assert_eq!(st2.bleu(), 0.0);
        // orders 2..4: totals 3,2,1 with zero matches -> 1/4, 1/3, 1/2
        let want2 = 100.0 * (((0.5f64).ln() + (0.25f64).ln() + (1.0f64 / 3.0).ln() + (0.5f64).ln()) / 4.0).exp();
        assert!((st2.smoothed_bleu() - want2).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch() {
        assert!(corpus_bleu(&[toks("a")], &[toks("a"), toks("b")], true).is_err());
    }
}
