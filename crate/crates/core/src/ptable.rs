//! Phrase tables: unsupervised induction from cross-lingual embeddings and
//! supervised extraction from word-aligned bitext.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::aligner::Alignment;
use crate::linalg::{dot, Matrix};
use crate::phrasevec::{top_k, EmbeddingMatrix};
use crate::textproc::Sentence;
use crate::xmap::{mean_topk_similarity, Retrieval};
use crate::{Error, FxMap, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableProvenance {
    Unsupervised,
    Extracted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseCandidate {
    pub target: String,
    /// p(t | s)
    pub forward: f64,
    /// p(s | t)
    pub backward: f64,
    /// Lexical weights (forward, backward), extracted tables only.
    pub lexical: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTable {
    /// Candidates per source phrase, sorted by forward probability
    /// descending, then target lexicographically.
    pub entries: BTreeMap<String, Vec<PhraseCandidate>>,
    pub provenance: TableProvenance,
}

fn candidate_cmp(a: &PhraseCandidate, b: &PhraseCandidate) -> Ordering {
    b.forward
        .partial_cmp(&a.forward)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.target.cmp(&b.target))
}

impl PhraseTable {
    pub fn new(provenance: TableProvenance) -> Self {
        PhraseTable {
            entries: BTreeMap::new(),
            provenance,
        }
    }

    pub fn get(&self, src: &str) -> Option<&[PhraseCandidate]> {
        self.entries.get(src).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest source phrase, in tokens.
    pub fn max_source_len(&self) -> usize {
        self.entries
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(0)
    }

    pub fn insert(&mut self, src: String, cand: PhraseCandidate) {
        let list = self.entries.entry(src).or_default();
        list.push(cand);
        list.sort_by(candidate_cmp);
    }

    /// Keeps only the `limit` best candidates per source phrase.
    pub fn prune(&mut self, limit: usize) {
        for list in self.entries.values_mut() {
            list.truncate(limit);
        }
    }

    /// Swaps source and target, exchanging forward and backward scores.
    pub fn inverted(&self) -> PhraseTable {
        let mut out: BTreeMap<String, Vec<PhraseCandidate>> = BTreeMap::new();
        for (src, list) in &self.entries {
            for c in list {
                out.entry(c.target.clone()).or_default().push(PhraseCandidate {
                    target: src.clone(),
                    forward: c.backward,
                    backward: c.forward,
                    lexical: c.lexical.map(|(f, b)| (b, f)),
                });
            }
        }
        for list in out.values_mut() {
            list.sort_by(candidate_cmp);
        }
        PhraseTable {
            entries: out,
            provenance: self.provenance,
        }
    }
}

/// `exp(s_i / T)` normalized, computed stably.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn unit(m: &EmbeddingMatrix) -> Matrix {
    m.unit_rows()
}

/// Ranked candidate lists from every row of `a` into `b`: top `k` by the
/// retrieval score, each paired with its softmax(cos / T) probability.
fn retrieve(a: &Matrix, b: &Matrix, k: usize, temperature: f64, method: Retrieval) -> Vec<Vec<(usize, f64)>> {
    let (ra, rb) = match method {
        Retrieval::Nn => (vec![0.0; a.rows], vec![0.0; b.rows]),
        Retrieval::Csls { k: ck } => (
            mean_topk_similarity(a, b, ck.max(1)),
            mean_topk_similarity(b, a, ck.max(1)),
        ),
    };
    let scale = if matches!(method, Retrieval::Nn) { 1.0 } else { 2.0 };
    (0..a.rows)
        .map(|i| {
            let ai = a.row(i);
            let cos: Vec<f64> = (0..b.rows).map(|j| dot(ai, b.row(j))).collect();
            let scored: Vec<(usize, f64)> = cos
                .iter()
                .enumerate()
                .map(|(j, &c)| (j, scale * c - ra[i] - rb[j]))
                .collect();
            let best = top_k(scored, k);
            let sims: Vec<f64> = best.iter().map(|&(j, _)| cos[j]).collect();
            let probs = softmax(&sims, temperature);
            best.iter().map(|&(j, _)| j).zip(probs).collect()
        })
        .collect()
}

/// For each source phrase keeps its `k` nearest targets in the shared space.
/// Forward probabilities are a softmax over their cosines; backward ones
/// come from the target side's own top-`k` retrieval, with pairs missing
/// there getting the smallest value in that target's list.
pub fn induce_unsupervised(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    k: usize,
    temperature: f64,
    method: Retrieval,
) -> Result<PhraseTable> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid("temperature must be positive"));
    }
    if src.dim() != tgt.dim() {
        return Err(Error::LengthMismatch {
            what: "embedding dimension",
            left: src.dim(),
            right: tgt.dim(),
        });
    }
    if src.rows() == 0 || tgt.rows() == 0 {
        return Err(Error::Empty("embeddings"));
    }
    let (xs, zs) = (unit(src), unit(tgt));
    let fwd = retrieve(&xs, &zs, k, temperature, method);
    let bwd = retrieve(&zs, &xs, k, temperature, method);
    let bwd_maps: Vec<(FxMap<usize, f64>, f64)> = bwd
        .into_iter()
        .map(|list| {
            let min = list.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            (list.into_iter().collect(), min)
        })
        .collect();
    let mut table = PhraseTable::new(TableProvenance::Unsupervised);
    for (i, list) in fwd.into_iter().enumerate() {
        let mut cands: Vec<PhraseCandidate> = list
            .into_iter()
            .map(|(j, p)| {
                let (map, min) = &bwd_maps[j];
                PhraseCandidate {
                    target: tgt.labels[j].clone(),
                    forward: p,
                    backward: map.get(&i).copied().unwrap_or(*min),
                    lexical: None,
                }
            })
            .collect();
        cands.sort_by(candidate_cmp);
        table.entries.insert(src.labels[i].clone(), cands);
    }
    Ok(table)
}

/// A consistent phrase pair as half-open spans `(src_start, src_end,
/// tgt_start, tgt_end)`.
pub type SpanPair = (usize, usize, usize, usize);

/// Och/Ney phrase extraction: every box with at least one link and no link
/// crossing its border, extended over unaligned target words at the edges,
/// with both sides at most `max_len` tokens.
pub fn extract_phrases(src_len: usize, tgt_len: usize, a: &Alignment, max_len: usize) -> Vec<SpanPair> {
    let mut out = Vec::new();
    if max_len == 0 {
        return out;
    }
    let mut tgt_aligned = vec![false; tgt_len];
    for &(_, t) in &a.links {
        if t < tgt_len {
            tgt_aligned[t] = true;
        }
    }
    for ss in 0..src_len {
        for se in ss..src_len.min(ss + max_len) {
            let linked = a.targets_of(ss, se + 1);
            let (Some(&fmin), Some(&fmax)) = (linked.iter().min(), linked.iter().max()) else {
                continue;
            };
            if fmax - fmin + 1 > max_len {
                continue;
            }
            let consistent = a
                .links
                .iter()
                .all(|&(s, t)| !(fmin..=fmax).contains(&t) || (ss..=se).contains(&s));
            if !consistent {
                continue;
            }
            let mut fs = fmin;
            loop {
                let mut fe = fmax;
                loop {
                    if fe - fs + 1 > max_len {
                        break;
                    }
                    out.push((ss, se + 1, fs, fe + 1));
                    fe += 1;
                    if fe >= tgt_len || tgt_aligned[fe] {
                        break;
                    }
                }
                if fs == 0 || tgt_aligned[fs - 1] {
                    break;
                }
                fs -= 1;
            }
        }
    }
    out
}

/// One extracted phrase-pair occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseOccurrence {
    pub src: String,
    pub tgt: String,
    /// (forward, backward) lexical weights of this occurrence.
    pub lexical: (f64, f64),
}

/// Word translation probabilities w(t|s) and w(s|t) from aligned bitext,
/// with unaligned words counted against a null token.
#[derive(Debug, Clone, Default)]
pub struct LexicalTable {
    fwd: FxMap<(String, String), f64>,
    bwd: FxMap<(String, String), f64>,
}

const NULL: &str = "";

impl LexicalTable {
    pub fn build(bitext: &[(Sentence, Sentence)], alignments: &[Alignment]) -> Result<Self> {
        if bitext.len() != alignments.len() {
            return Err(Error::LengthMismatch {
                what: "bitext vs alignments",
                left: bitext.len(),
                right: alignments.len(),
            });
        }
        let mut joint: FxMap<(String, String), f64> = FxMap::default();
        let mut src_tot: FxMap<String, f64> = FxMap::default();
        let mut tgt_tot: FxMap<String, f64> = FxMap::default();
        let mut add = |s: &str, t: &str| {
            *joint.entry((s.into(), t.into())).or_insert(0.0) += 1.0;
            *src_tot.entry(s.into()).or_insert(0.0) += 1.0;
            *tgt_tot.entry(t.into()).or_insert(0.0) += 1.0;
        };
        for ((s, t), a) in bitext.iter().zip(alignments) {
            let mut s_seen = vec![false; s.len()];
            let mut t_seen = vec![false; t.len()];
            for &(i, j) in &a.links {
                add(&s.tokens[i], &t.tokens[j]);
                s_seen[i] = true;
                t_seen[j] = true;
            }
            for (i, _) in s_seen.iter().enumerate().filter(|p| !*p.1) {
                add(&s.tokens[i], NULL);
            }
            for (j, _) in t_seen.iter().enumerate().filter(|p| !*p.1) {
                add(NULL, &t.tokens[j]);
            }
        }
        let mut fwd = FxMap::default();
        let mut bwd = FxMap::default();
        for ((s, t), c) in joint {
            fwd.insert((s.clone(), t.clone()), c / src_tot[&s]);
            bwd.insert((s.clone(), t.clone()), c / tgt_tot[&t]);
        }
        Ok(LexicalTable { fwd, bwd })
    }

    /// w(t | s)
    pub fn forward(&self, s: &str, t: &str) -> f64 {
        self.fwd.get(&(s.into(), t.into())).copied().unwrap_or(0.0)
    }

    /// w(s | t)
    pub fn backward(&self, s: &str, t: &str) -> f64 {
        self.bwd.get(&(s.into(), t.into())).copied().unwrap_or(0.0)
    }

    /// `Π_j 1/|a_j| Σ_{i∈a_j} w(t_j|s_i)` and its mirror image, with
    /// unaligned words scored against null.
    fn phrase_weights(&self, src: &[String], tgt: &[String], links: &[(usize, usize)]) -> (f64, f64) {
        let side = |n: usize, other: &[String], mine: &[String], fwd: bool| {
            let mut prod = 1.0;
            for j in 0..n {
                let linked: Vec<usize> = links
                    .iter()
                    .filter(|l| if fwd { l.1 == j } else { l.0 == j })
                    .map(|l| if fwd { l.0 } else { l.1 })
                    .collect();
                let w = if linked.is_empty() {
                    if fwd {
                        self.forward(NULL, &mine[j])
                    } else {
                        self.backward(&mine[j], NULL)
                    }
                } else {
                    linked
                        .iter()
                        .map(|&i| {
                            if fwd {
                                self.forward(&other[i], &mine[j])
                            } else {
                                self.backward(&mine[j], &other[i])
                            }
                        })
                        .sum::<f64>()
                        / linked.len() as f64
                };
                prod *= w;
            }
            prod
        };
        (side(tgt.len(), src, tgt, true), side(src.len(), tgt, src, false))
    }
}

/// Extracts every consistent phrase pair from the corpus.
pub fn extract_corpus(
    bitext: &[(Sentence, Sentence)],
    alignments: &[Alignment],
    max_len: usize,
    lexicon: Option<&LexicalTable>,
) -> Result<Vec<PhraseOccurrence>> {
    if bitext.len() != alignments.len() {
        return Err(Error::LengthMismatch {
            what: "bitext vs alignments",
            left: bitext.len(),
            right: alignments.len(),
        });
    }
    let mut out = Vec::new();
    for ((s, t), a) in bitext.iter().zip(alignments) {
        if a.links.iter().any(|&(i, j)| i >= s.len() || j >= t.len()) {
            return Err(Error::invalid("alignment index out of range"));
        }
        for (ss, se, ts, te) in extract_phrases(s.len(), t.len(), a, max_len) {
            let lexical = match lexicon {
                Some(lex) => {
                    let links: Vec<(usize, usize)> = a
                        .links
                        .iter()
                        .filter(|&&(i, j)| (ss..se).contains(&i) && (ts..te).contains(&j))
                        .map(|&(i, j)| (i - ss, j - ts))
                        .collect();
                    lex.phrase_weights(&s.tokens[ss..se], &t.tokens[ts..te], &links)
                }
                None => (1.0, 1.0),
            };
            out.push(PhraseOccurrence {
                src: s.tokens[ss..se].join(" "),
                tgt: t.tokens[ts..te].join(" "),
                lexical,
            });
        }
    }
    Ok(out)
}

/// Relative-frequency scoring. Lexical weights are the mean over each
/// pair's occurrences.
pub fn score_extracted(pairs: &[PhraseOccurrence], with_lexical: bool) -> Result<PhraseTable> {
    if pairs.is_empty() {
        return Err(Error::Empty("extracted phrase pairs"));
    }
    let mut joint: BTreeMap<(&str, &str), (f64, f64, f64)> = BTreeMap::new();
    let mut src_tot: FxMap<&str, f64> = FxMap::default();
    let mut tgt_tot: FxMap<&str, f64> = FxMap::default();
    for p in pairs {
        let e = joint.entry((&p.src, &p.tgt)).or_insert((0.0, 0.0, 0.0));
        e.0 += 1.0;
        e.1 += p.lexical.0;
        e.2 += p.lexical.1;
        *src_tot.entry(&p.src).or_insert(0.0) += 1.0;
        *tgt_tot.entry(&p.tgt).or_insert(0.0) += 1.0;
    }
    let mut table = PhraseTable::new(TableProvenance::Extracted);
    for ((s, t), (c, lf, lb)) in joint {
        table.entries.entry(s.into()).or_default().push(PhraseCandidate {
            target: t.into(),
            forward: c / src_tot[s],
            backward: c / tgt_tot[t],
            lexical: with_lexical.then(|| (lf / c, lb / c)),
        });
    }
    for list in table.entries.values_mut() {
        list.sort_by(candidate_cmp);
    }
    Ok(table)
}
