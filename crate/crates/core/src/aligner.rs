//! fast_align-style word alignment: IBM Model 2 reparameterized with a
//! diagonal-favoring prior, trained by EM, plus symmetrization heuristics.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::textproc::Sentence;
use crate::vocab::{Vocab, WordId};
use crate::{Error, FxMap, Result};

/// Probability used in Viterbi search for pairs never seen in training.
const UNSEEN_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    pub iterations: usize,
    /// Diagonal tension.
    pub lambda: f64,
    /// Null-alignment probability.
    pub p0: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            iterations: 5,
            lambda: 4.0,
            p0: 0.08,
        }
    }
}

/// Translation table `t(tgt | src)` plus the fixed distortion parameters.
#[derive(Debug, Clone)]
pub struct AlignModel {
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    /// Indexed by source word id.
    pub table: Vec<FxMap<WordId, f64>>,
    pub null_table: FxMap<WordId, f64>,
    pub lambda: f64,
    pub p0: f64,
    /// Corpus log-likelihood before each EM update and after the last one.
    pub log_likelihoods: Vec<f64>,
    /// Pairs skipped because one side was empty.
    pub skipped: usize,
}

/// Source-index → target-index links.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    pub links: BTreeSet<(usize, usize)>,
}

impl Alignment {
    pub fn from_links<I: IntoIterator<Item = (usize, usize)>>(links: I) -> Self {
        Alignment {
            links: links.into_iter().collect(),
        }
    }

    pub fn inverted(&self) -> Alignment {
        Alignment::from_links(self.links.iter().map(|&(s, t)| (t, s)))
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn contains(&self, s: usize, t: usize) -> bool {
        self.links.contains(&(s, t))
    }

    /// Target positions linked to any source position in `start..end`.
    pub fn targets_of(&self, start: usize, end: usize) -> Vec<usize> {
        self.links
            .range((start, 0)..(end, 0))
            .map(|&(_, t)| t)
            .collect()
    }
}

#[inline]
fn diagonal(i: usize, j: usize, m: usize, n: usize, lambda: f64) -> f64 {
    let d = (i + 1) as f64 / m as f64 - (j + 1) as f64 / n as f64;
    (-lambda * d.abs()).exp()
}

/// Normalized prior over source positions for target position `j`.
fn prior_row(j: usize, m: usize, n: usize, lambda: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..m).map(|i| diagonal(i, j, m, n, lambda)));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
}

struct Encoded {
    pairs: Vec<(Vec<WordId>, Vec<WordId>)>,
    skipped: usize,
}

impl AlignModel {
    fn t(&self, e: WordId, f: WordId) -> f64 {
        self.table
            .get(e as usize)
            .and_then(|row| row.get(&f))
            .copied()
            .unwrap_or(0.0)
    }

    /// One pass over the corpus: returns the log-likelihood under the
    /// current parameters and, when `counts` is given, accumulates expected
    /// counts.
    fn e_step(
        &self,
        corpus: &[(Vec<WordId>, Vec<WordId>)],
        mut counts: Option<(&mut Vec<FxMap<WordId, f64>>, &mut FxMap<WordId, f64>)>,
    ) -> f64 {
        let mut ll = 0.0;
        let mut prior = Vec::new();
        let mut post = Vec::new();
        for (src, tgt) in corpus {
            let (m, n) = (src.len(), tgt.len());
            for (j, &f) in tgt.iter().enumerate() {
                prior_row(j, m, n, self.lambda, &mut prior);
                post.clear();
                post.push(self.p0 * self.null_table.get(&f).copied().unwrap_or(0.0));
                for (i, &e) in src.iter().enumerate() {
                    post.push((1.0 - self.p0) * prior[i] * self.t(e, f));
                }
                let z: f64 = post.iter().sum();
                if !(z > 0.0) {
                    continue;
                }
                ll += z.ln();
                if let Some((table, null)) = counts.as_mut() {
                    *null.entry(f).or_insert(0.0) += post[0] / z;
                    for (i, &e) in src.iter().enumerate() {
                        let p = post[i + 1] / z;
                        if p > 0.0 {
                            *table[e as usize].entry(f).or_insert(0.0) += p;
                        }
                    }
                }
            }
        }
        ll
    }

    /// Viterbi links: for each target word the best source position, null
    /// links dropped. Ties go to the lowest source index; null wins only when
    /// strictly better.
    pub fn align_sentence<S: AsRef<str>>(&self, src: &[S], tgt: &[S]) -> Alignment {
        let (m, n) = (src.len(), tgt.len());
        let mut links = BTreeSet::new();
        if m == 0 || n == 0 {
            return Alignment { links };
        }
        let src_ids: Vec<Option<WordId>> = src.iter().map(|w| self.src_vocab.get(w.as_ref())).collect();
        let mut prior = Vec::new();
        for (j, w) in tgt.iter().enumerate() {
            let f = self.tgt_vocab.get(w.as_ref());
            prior_row(j, m, n, self.lambda, &mut prior);
            let lookup = |p: Option<f64>| p.filter(|&v| v > 0.0).unwrap_or(UNSEEN_FLOOR);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for i in 0..m {
                let t = lookup(match (src_ids[i], f) {
                    (Some(e), Some(f)) => Some(self.t(e, f)),
                    _ => None,
                });
                let score = (1.0 - self.p0) * prior[i] * t;
                if score > best.1 {
                    best = (i, score);
                }
            }
            let null = self.p0 * lookup(f.and_then(|f| self.null_table.get(&f).copied()));
            if best.1 >= null {
                links.insert((best.0, j));
            }
        }
        Alignment { links }
    }
}

fn encode(bitext: &[(Sentence, Sentence)], src_vocab: &mut Vocab, tgt_vocab: &mut Vocab) -> Encoded {
    let mut pairs = Vec::with_capacity(bitext.len());
    let mut skipped = 0;
    for (s, t) in bitext {
        if s.is_empty() || t.is_empty() {
            skipped += 1;
            continue;
        }
        pairs.push((src_vocab.intern_all(&s.tokens), tgt_vocab.intern_all(&t.tokens)));
    }
    Encoded { pairs, skipped }
}

/// EM training with λ and p0 held fixed. The translation table starts
/// uniform over co-occurring pairs.
pub fn train_fastalign(bitext: &[(Sentence, Sentence)], params: AlignParams) -> Result<AlignModel> {
    if params.iterations == 0 {
        return Err(Error::invalid("alignment needs at least one EM iteration"));
    }
    if !(0.0..1.0).contains(&params.p0) || !(params.lambda >= 0.0) {
        return Err(Error::invalid("need lambda >= 0 and 0 <= p0 < 1"));
    }
    let mut src_vocab = Vocab::new();
    let mut tgt_vocab = Vocab::new();
    let enc = encode(bitext, &mut src_vocab, &mut tgt_vocab);
    if enc.pairs.is_empty() {
        return Err(Error::Empty("alignment bitext"));
    }
    let mut table: Vec<FxMap<WordId, f64>> = vec![FxMap::default(); src_vocab.len()];
    let mut null_table: FxMap<WordId, f64> = FxMap::default();
    for (src, tgt) in &enc.pairs {
        for &e in src {
            for &f in tgt {
                table[e as usize].insert(f, 1.0);
            }
        }
        for &f in tgt {
            null_table.insert(f, 1.0);
        }
    }
    for row in table.iter_mut() {
        let z = row.len() as f64;
        row.values_mut().for_each(|v| *v /= z);
    }
    let z = null_table.len() as f64;
    null_table.values_mut().for_each(|v| *v /= z);

    let mut model = AlignModel {
        src_vocab,
        tgt_vocab,
        table,
        null_table,
        lambda: params.lambda,
        p0: params.p0,
        log_likelihoods: Vec::new(),
        skipped: enc.skipped,
    };
    for _ in 0..params.iterations {
        let mut counts: Vec<FxMap<WordId, f64>> = vec![FxMap::default(); model.src_vocab.len()];
        let mut null_counts: FxMap<WordId, f64> = FxMap::default();
        let ll = model.e_step(&enc.pairs, Some((&mut counts, &mut null_counts)));
        model.log_likelihoods.push(ll);
        for row in counts.iter_mut() {
            let z: f64 = row.values().sum();
            if z > 0.0 {
                row.values_mut().for_each(|v| *v /= z);
            }
        }
        let z: f64 = null_counts.values().sum();
        if z > 0.0 {
            null_counts.values_mut().for_each(|v| *v /= z);
        }
        model.table = counts;
        model.null_table = null_counts;
    }
    let ll = model.e_step(&enc.pairs, None);
    model.log_likelihoods.push(ll);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetrization {
    Intersection,
    Union,
    GrowDiagFinalAnd,
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// Combines a source→target and a target→source alignment, both expressed
/// as (source, target) links.
pub fn symmetrize(fwd: &Alignment, rev: &Alignment, heuristic: Symmetrization) -> Alignment {
    let inter: BTreeSet<(usize, usize)> = fwd.links.intersection(&rev.links).copied().collect();
    let union: BTreeSet<(usize, usize)> = fwd.links.union(&rev.links).copied().collect();
    match heuristic {
        Symmetrization::Intersection => Alignment { links: inter },
        Symmetrization::Union => Alignment { links: union },
        Symmetrization::GrowDiagFinalAnd => {
            let src_len = union.iter().map(|l| l.0 + 1).max().unwrap_or(0);
            let tgt_len = union.iter().map(|l| l.1 + 1).max().unwrap_or(0);
            let mut links = inter;
            let mut src_aligned = vec![false; src_len];
            let mut tgt_aligned = vec![false; tgt_len];
            for &(s, t) in &links {
                src_aligned[s] = true;
                tgt_aligned[t] = true;
            }
            // grow-diag
            loop {
                let mut added = false;
                for s in 0..src_len {
                    for t in 0..tgt_len {
                        if !links.contains(&(s, t)) {
                            continue;
                        }
                        for (ds, dt) in NEIGHBORS {
                            let (ns, nt) = (s as isize + ds, t as isize + dt);
                            if ns < 0 || nt < 0 {
                                continue;
                            }
                            let (ns, nt) = (ns as usize, nt as usize);
                            if ns >= src_len || nt >= tgt_len {
                                continue;
                            }
                            if (!src_aligned[ns] || !tgt_aligned[nt])
                                && union.contains(&(ns, nt))
                                && links.insert((ns, nt))
                            {
                                src_aligned[ns] = true;
                                tgt_aligned[nt] = true;
                                added = true;
                            }
                        }
                    }
                }
                if !added {
                    break;
                }
            }
            // final-and, forward then reverse
            for directed in [fwd, rev] {
                for &(s, t) in &directed.links {
                    if !src_aligned[s] && !tgt_aligned[t] {
                        links.insert((s, t));
                        src_aligned[s] = true;
                        tgt_aligned[t] = true;
                    }
                }
            }
            Alignment { links }
        }
    }
}

/// Alignment error rate `1 − (|A∩S| + |A∩P|) / (|A| + |S|)`; 0 when both
/// prediction and sure set are empty.
pub fn aer(pred: &Alignment, sure: &Alignment, possible: &Alignment) -> f64 {
    let denom = pred.len() + sure.len();
    if denom == 0 {
        return 0.0;
    }
    let a_s = pred.links.intersection(&sure.links).count();
    let a_p = pred.links.intersection(&possible.links).count();
    1.0 - (a_s + a_p) as f64 / denom as f64
}

/// Trains both directions and returns a symmetrizing aligner.
#[derive(Debug, Clone)]
pub struct BidirectionalAligner {
    pub forward: AlignModel,
    pub reverse: AlignModel,
}

impl BidirectionalAligner {
    pub fn train(bitext: &[(Sentence, Sentence)], params: AlignParams) -> Result<Self> {
        let swapped: Vec<(Sentence, Sentence)> =
            bitext.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
        Ok(BidirectionalAligner {
            forward: train_fastalign(bitext, params)?,
            reverse: train_fastalign(&swapped, params)?,
        })
    }

    pub fn align(&self, src: &Sentence, tgt: &Sentence, heuristic: Symmetrization) -> Alignment {
        let fwd = self.forward.align_sentence(&src.tokens, &tgt.tokens);
        let rev = self.reverse.align_sentence(&tgt.tokens, &src.tokens).inverted();
        symmetrize(&fwd, &rev, heuristic)
    }
}
