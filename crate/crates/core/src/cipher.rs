//! Synthetic language pairs: a sparse Markov-chain language and a
//! word-substitution cipher of it with its own, disjoint vocabulary.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::textproc::Sentence;
use crate::{Error, FxSet, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CipherConfig {
    pub vocab_size: usize,
    /// Monolingual sentences per side.
    pub sentences: usize,
    /// Parallel held-out pairs.
    pub dev_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Successors per word in the chain.
    pub branching: usize,
    /// Zipf exponent of the successor prior and start distribution.
    pub zipf: f64,
    /// Capitalized proper names shared verbatim by both languages.
    pub names: usize,
    /// Probability per sentence that two adjacent cipher tokens swap.
    pub reorder_prob: f64,
    pub seed: u64,
}

impl Default for CipherConfig {
    fn default() -> Self {
        CipherConfig {
            vocab_size: 200,
            sentences: 20_000,
            dev_size: 500,
            min_len: 5,
            max_len: 14,
            branching: 6,
            zipf: 1.0,
            names: 0,
            reorder_prob: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CipherPair {
    /// Plaintext language A.
    pub mono_a: Vec<Sentence>,
    /// Cipher language B, drawn independently of `mono_a`.
    pub mono_b: Vec<Sentence>,
    pub dev_a: Vec<Sentence>,
    pub dev_b: Vec<Sentence>,
    /// Word of A → word of B.
    pub key: BTreeMap<String, String>,
}

const A_ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const A_VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const B_ONSETS: [&str; 12] = ["č", "ď", "ř", "š", "ž", "ť", "ň", "v", "z", "h", "j", "c"];
const B_VOWELS: [&str; 6] = ["á", "é", "ě", "í", "ú", "ů"];

fn words<R: rand::Rng>(n: usize, onsets: &[&str], vowels: &[&str], rng: &mut R) -> Vec<String> {
    let mut seen = FxSet::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syl = 2 + rng.random_range(0..2);
        let w: String = (0..syl)
            .map(|_| {
                let mut s = String::from(onsets[rng.random_range(0..onsets.len())]);
                s.push_str(vowels[rng.random_range(0..vowels.len())]);
                s
            })
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Chain {
    start: Vec<f64>,
    next: Vec<Vec<(usize, f64)>>,
}

fn sample(cum: &[f64], rng: &mut impl rand::Rng) -> usize {
    let total = *cum.last().unwrap_or(&1.0);
    let x = rng.random_range(0.0..total);
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

impl Chain {
    fn build(cfg: &CipherConfig, rng: &mut ChaCha8Rng) -> Chain {
        let v = cfg.vocab_size;
        let prior = cumulative((0..v).map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf)));
        let next = (0..v)
            .map(|_| {
                let mut succ: Vec<usize> = Vec::with_capacity(cfg.branching);
                while succ.len() < cfg.branching.min(v) {
                    let s = sample(&prior, rng);
                    if !succ.contains(&s) {
                        succ.push(s);
                    }
                }
                let weights: Vec<f64> = succ.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                let cum = cumulative(weights.into_iter());
                succ.into_iter().zip(cum).collect()
            })
            .collect();
        Chain { start: prior, next }
    }

    fn sentence(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut w = sample(&self.start, rng);
        out.push(w);
        while out.len() < len {
            let succ = &self.next[w];
            let cum: Vec<f64> = succ.iter().map(|p| p.1).collect();
            w = succ[sample(&cum, rng)].0;
            out.push(w);
        }
        out
    }
}

/// Generates the pair deterministically from `cfg.seed`.
pub fn generate(cfg: &CipherConfig) -> Result<CipherPair> {
    if cfg.vocab_size < 2 || cfg.branching == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::invalid("cipher config needs vocab >= 2, branching >= 1, 1 <= min_len <= max_len"));
    }
    if !(0.0..=1.0).contains(&cfg.reorder_prob) {
        return Err(Error::invalid("reorder_prob must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab_a = words(cfg.vocab_size, &A_ONSETS, &A_VOWELS, &mut rng);
    let mut vocab_b = words(cfg.vocab_size, &B_ONSETS, &B_VOWELS, &mut rng);
    vocab_b.shuffle(&mut rng);
    let names: Vec<String> = words(cfg.names, &A_ONSETS, &A_VOWELS, &mut rng)
        .into_iter()
        .map(|w| {
            let mut c = w.chars();
            let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
            first + c.as_str() + "x"
        })
        .collect();
    let chain = Chain::build(cfg, &mut rng);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        chain.sentence(len, rng)
    };
    let render = |ids: &[usize], vocab: &[String], name: Option<(usize, &String)>| -> Sentence {
        let mut toks: Vec<String> = ids.iter().map(|&i| vocab[i].clone()).collect();
        if let Some((pos, n)) = name {
            toks.insert(pos.min(toks.len()), n.clone());
        }
        Sentence::from_tokens(&toks)
    };
    let pick_name = |rng: &mut ChaCha8Rng, len: usize| {
        (!names.is_empty() && rng.random_range(0.0..1.0) < 0.2)
            .then(|| (rng.random_range(1..=len), &names[rng.random_range(0..names.len())]))
    };
    let noise = |s: &mut Sentence, rng: &mut ChaCha8Rng| {
        if s.len() >= 2 && rng.random_range(0.0..1.0) < cfg.reorder_prob {
            let i = rng.random_range(0..s.len() - 1);
            s.tokens.swap(i, i + 1);
        }
    };
    let mut mono_a = Vec::with_capacity(cfg.sentences);
    let mut mono_b = Vec::with_capacity(cfg.sentences);
    for _ in 0..cfg.sentences {
        let ids = draw(&mut rng);
        let name = pick_name(&mut rng, ids.len());
        mono_a.push(render(&ids, &vocab_a, name));
    }
    for _ in 0..cfg.sentences {
        let ids = draw(&mut rng);
        let name = pick_name(&mut rng, ids.len());
        let mut s = render(&ids, &vocab_b, name);
        noise(&mut s, &mut rng);
        mono_b.push(s);
    }
    let mut dev_a = Vec::with_capacity(cfg.dev_size);
    let mut dev_b = Vec::with_capacity(cfg.dev_size);
    for _ in 0..cfg.dev_size {
        let ids = draw(&mut rng);
        let name = pick_name(&mut rng, ids.len());
        dev_a.push(render(&ids, &vocab_a, name));
        let mut b = render(&ids, &vocab_b, name);
        noise(&mut b, &mut rng);
        dev_b.push(b);
    }
    for (i, s) in mono_a.iter_mut().chain(mono_b.iter_mut()).enumerate() {
        s.line_index = i % cfg.sentences.max(1);
    }
    for (i, (a, b)) in dev_a.iter_mut().zip(dev_b.iter_mut()).enumerate() {
        a.line_index = i;
        b.line_index = i;
    }
    let key = vocab_a.into_iter().zip(vocab_b).collect();
    Ok(CipherPair {
        mono_a,
        mono_b,
        dev_a,
        dev_b,
        key,
    })
}

/// Plaintext of cipher-side sentences under `key` (A word to B word).
/// Tokens outside the key, such as names, pass through.
pub fn decipher(key: &BTreeMap<String, String>, corpus_b: &[Sentence]) -> Vec<Sentence> {
    let inverse: BTreeMap<&str, &str> = key.iter().map(|(a, b)| (b.as_str(), a.as_str())).collect();
    corpus_b
        .iter()
        .map(|s| {
            let toks: Vec<String> = s
                .tokens
                .iter()
                .map(|t| inverse.get(t.as_str()).map_or_else(|| t.clone(), |a| (*a).to_string()))
                .collect();
            Sentence::new(toks, s.line_index)
        })
        .collect()
}

/// Fraction of reference positions whose token the hypothesis reproduces
/// at the same position. Extra hypothesis tokens count as errors too.
pub fn decipherment_accuracy(hyps: &[Sentence], refs: &[Sentence]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "hypotheses vs references",
            left: hyps.len(),
            right: refs.len(),
        });
    }
    let mut hit = 0usize;
    let mut total = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        total += h.len().max(r.len());
        hit += h.tokens.iter().zip(&r.tokens).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::Empty("decipherment corpus"));
    }
    Ok(hit as f64 / total as f64)
}
