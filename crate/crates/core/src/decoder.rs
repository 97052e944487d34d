//! Phrase-based stack decoding with a log-linear model, n-best extraction
//! and minimum error rate training.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;


#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::lm::ArpaLM;
use crate::ptable::PhraseTable;
use crate::vocab::WordId;
use crate::{Error, FxMap, Result};

pub mod mert;

pub const NUM_FEATURES: usize = 6;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "tm_fwd",
    "tm_bwd",
    "lm",
    "word_penalty",
    "phrase_penalty",
    "distortion",
];

pub type Features = [f64; NUM_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights(pub Features);

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights([0.2, 0.2, 0.5, 0.1, 0.2, 0.3])
    }
}

impl FeatureWeights {
    pub fn dot(&self, f: &Features) -> f64 {
        self.0.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != NUM_FEATURES {
            return Err(Error::LengthMismatch {
                what: "feature weights",
                left: v.len(),
                right: NUM_FEATURES,
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature weights"));
        }
        let mut w = [0.0; NUM_FEATURES];
        w.copy_from_slice(v);
        Ok(FeatureWeights(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderParams {
    pub beam_size: usize,
    /// `None` means unlimited reordering; `Some(0)` is monotone.
    pub distortion_limit: Option<usize>,
    pub nbest: usize,
    /// Candidates kept per source span.
    pub max_options: usize,
    /// Extra word-penalty units charged per copied unknown word.
    pub unk_cost: f64,
}

impl Default for DecoderParams {
    fn default() -> Self {
        DecoderParams {
            beam_size: 100,
            distortion_limit: Some(6),
            nbest: 1,
            max_options: 20,
            unk_cost: 10.0,
        }
    }
}

impl DecoderParams {
    pub fn monotone() -> Self {
        DecoderParams {
            distortion_limit: Some(0),
            ..Default::default()
        }
    }
}

/// Source span `[src.0, src.1)` translated as target span `[tgt.0, tgt.1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub src: (usize, usize),
    pub tgt: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub tokens: Vec<String>,
    pub features: Features,
    pub score: f64,
    /// Segments in target order.
    pub segments: Vec<Segment>,
}

impl NBestEntry {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Source-index → target-index links implied by the segmentation: each
    /// source word of a segment linked to every target word of it.
    pub fn phrase_links(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in &self.segments {
            for i in s.src.0..s.src.1 {
                for j in s.tgt.0..s.tgt.1 {
                    out.push((i, j));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Best-first list of distinct translations.
pub type NBestList = Vec<NBestEntry>;

#[derive(Debug, Clone)]
struct TransOption {
    start: usize,
    end: usize,
    target: Vec<String>,
    target_ids: Vec<WordId>,
    tm_fwd: f64,
    tm_bwd: f64,
    unk: bool,
    /// Weighted score of the option in isolation, used for future cost and
    /// option ranking.
    estimate: f64,
}

fn isolated_lm(lm: &ArpaLM, ids: &[WordId]) -> f64 {
    let mut total = 0.0;
    for k in 0..ids.len() {
        total += lm.log10_prob(&ids[..k], ids[k]);
    }
    total * core::f64::consts::LN_10
}

fn static_features(o: &TransOption, unk_cost: f64) -> Features {
    let n = o.target.len() as f64;
    [
        o.tm_fwd,
        o.tm_bwd,
        0.0,
        -(n + if o.unk { unk_cost } else { 0.0 }),
        -1.0,
        0.0,
    ]
}

/// Translation options for every source span. Single words without any
/// table entry get a verbatim copy option.
fn collect_options(
    src: &[String],
    table: &PhraseTable,
    lm: &ArpaLM,
    w: &FeatureWeights,
    params: &DecoderParams,
) -> Vec<TransOption> {
    let n = src.len();
    let max_len = table.max_source_len().max(1);
    let mut out = Vec::new();
    for start in 0..n {
        for end in start + 1..=n.min(start + max_len) {
            let key = src[start..end].join(" ");
            let mut opts: Vec<TransOption> = match table.get(&key) {
                Some(list) => list
                    .iter()
                    .map(|c| {
                        let target: Vec<String> = c.target.split(' ').map(String::from).collect();
                        TransOption {
                            start,
                            end,
                            target_ids: target.iter().map(|t| lm.word_id(t)).collect(),
                            target,
                            tm_fwd: c.forward.ln(),
                            tm_bwd: c.backward.ln(),
                            unk: false,
                            estimate: 0.0,
                        }
                    })
                    .collect(),
                None if end == start + 1 => {
                    let target = vec![src[start].clone()];
                    vec![TransOption {
                        start,
                        end,
                        target_ids: vec![lm.word_id(&target[0])],
                        target,
                        tm_fwd: 0.0,
                        tm_bwd: 0.0,
                        unk: true,
                        estimate: 0.0,
                    }]
                }
                None => continue,
            };
            for o in opts.iter_mut() {
                let mut f = static_features(o, params.unk_cost);
                f[2] = isolated_lm(lm, &o.target_ids);
                o.estimate = w.dot(&f);
            }
            opts.sort_by(|a, b| {
                b.estimate
                    .partial_cmp(&a.estimate)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.target.cmp(&b.target))
            });
            opts.truncate(params.max_options.max(1));
            out.extend(opts);
        }
    }
    out
}

/// `fc[i][j]`: best estimated score for covering `[i, j)` in isolation.
fn future_costs(n: usize, options: &[TransOption]) -> Vec<Vec<f64>> {
    let mut fc = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for o in options {
        if o.estimate > fc[o.start][o.end] {
            fc[o.start][o.end] = o.estimate;
        }
    }
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len;
            for k in i + 1..j {
                let c = fc[i][k] + fc[k][j];
                if c > fc[i][j] {
                    fc[i][j] = c;
                }
            }
        }
    }
    fc
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Coverage(Vec<u64>);

impl Coverage {
    fn new(n: usize) -> Self {
        Coverage(vec![0; n.div_ceil(64).max(1)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set_range(&mut self, s: usize, e: usize) {
        for i in s..e {
            self.0[i / 64] |= 1 << (i % 64);
        }
    }

    fn any_in(&self, s: usize, e: usize) -> bool {
        (s..e).any(|i| self.get(i))
    }
}

struct Arc {
    prev: usize,
    opt: usize,
    delta: Features,
}

struct Node {
    cov: Coverage,
    covered: usize,
    lm_state: Vec<WordId>,
    end: usize,
    score: f64,
    future: f64,
    /// `arcs[0]` is the best incoming arc.
    arcs: Vec<Arc>,
}

type StateKey = (Coverage, Vec<WordId>, usize);

struct PathLink {
    opt: usize,
    prev: Option<Rc<PathLink>>,
}

#[derive(Clone)]
struct Deriv {
    score: f64,
    feats: Features,
    path: Option<Rc<PathLink>>,
}

fn add(a: &Features, b: &Features) -> Features {
    core::array::from_fn(|i| a[i] + b[i])
}

struct Search<'a> {
    src_len: usize,
    lm: &'a ArpaLM,
    w: &'a FeatureWeights,
    options: Vec<TransOption>,
    fc: Vec<Vec<f64>>,
    nodes: Vec<Node>,
}

impl Search<'_> {
    fn future(&self, cov: &Coverage) -> f64 {
        let mut total = 0.0;
        let mut i = 0;
        while i < self.src_len {
            if cov.get(i) {
                i += 1;
                continue;
            }
            let s = i;
            while i < self.src_len && !cov.get(i) {
                i += 1;
            }
            total += self.fc[s][i];
        }
        total
    }

    fn best_tokens(&self, mut idx: usize) -> Vec<&str> {
        let mut opts = Vec::new();
        while let Some(a) = self.nodes[idx].arcs.first() {
            opts.push(a.opt);
            idx = a.prev;
        }
        opts.iter()
            .rev()
            .flat_map(|&o| self.options[o].target.iter().map(String::as_str))
            .collect()
    }

    fn rank(&self, a: usize, b: usize) -> Ordering {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        (nb.score + nb.future)
            .partial_cmp(&(na.score + na.future))
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.best_tokens(a).cmp(&self.best_tokens(b)))
    }

    fn lm_delta(&self, state: &[WordId], ids: &[WordId]) -> (f64, Vec<WordId>) {
        let keep = self.lm.order - 1;
        let mut ctx: Vec<WordId> = state.to_vec();
        let mut lp = 0.0;
        for &id in ids {
            lp += self.lm.log10_prob(&ctx, id);
            ctx.push(id);
            if ctx.len() > keep {
                ctx.remove(0);
            }
        }
        (lp * core::f64::consts::LN_10, ctx)
    }

    /// Runs the stacks; returns indices of complete hypotheses.
    fn run(&mut self, params: &DecoderParams, limit: Option<usize>) -> Vec<usize> {
        let n = self.src_len;
        let root = Node {
            cov: Coverage::new(n),
            covered: 0,
            lm_state: vec![self.lm.bos()],
            end: 0,
            score: 0.0,
            future: 0.0,
            arcs: Vec::new(),
        };
        self.nodes.clear();
        self.nodes.push(root);
        self.nodes[0].future = self.fc[0][n];
        let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        let mut keys: Vec<FxMap<StateKey, usize>> = (0..=n).map(|_| FxMap::default()).collect();
        stacks[0].push(0);
        for k in 0..n {
            let mut stack = core::mem::take(&mut stacks[k]);
            stack.sort_by(|&a, &b| self.rank(a, b));
            stack.truncate(params.beam_size.max(1));
            for &h in &stack {
                for oi in 0..self.options.len() {
                    let (s, e) = (self.options[oi].start, self.options[oi].end);
                    let node = &self.nodes[h];
                    if node.cov.any_in(s, e) {
                        continue;
                    }
                    let jump = s.abs_diff(node.end);
                    if limit.is_some_and(|d| jump > d) {
                        continue;
                    }
                    let (lp, state) = self.lm_delta(&node.lm_state, &self.options[oi].target_ids);
                    let mut delta = static_features(&self.options[oi], params.unk_cost);
                    delta[2] = lp;
                    delta[5] = -(jump as f64);
                    let score = node.score + self.w.dot(&delta);
                    let mut cov = node.cov.clone();
                    cov.set_range(s, e);
                    let covered = node.covered + (e - s);
                    let arc = Arc { prev: h, opt: oi, delta };
                    let key = (cov, state, e);
                    if let Some(&idx) = keys[covered].get(&key) {
                        let target = &mut self.nodes[idx];
                        target.arcs.push(arc);
                        if score > target.score {
                            target.score = score;
                            let last = target.arcs.len() - 1;
                            target.arcs.swap(0, last);
                        }
                        continue;
                    }
                    let future = self.future(&key.0);
                    let idx = self.nodes.len();
                    self.nodes.push(Node {
                        cov: key.0.clone(),
                        covered,
                        lm_state: key.1.clone(),
                        end: e,
                        score,
                        future,
                        arcs: vec![arc],
                    });
                    keys[covered].insert(key, idx);
                    stacks[covered].push(idx);
                }
            }
            stacks[k] = stack;
        }
        stacks[n].clone()
    }

    fn kbest(&self, idx: usize, k: usize, memo: &mut FxMap<usize, Rc<Vec<Deriv>>>) -> Rc<Vec<Deriv>> {
        if let Some(v) = memo.get(&idx) {
            return v.clone();
        }
        let node = &self.nodes[idx];
        let out = if node.arcs.is_empty() {
            vec![Deriv {
                score: 0.0,
                feats: [0.0; NUM_FEATURES],
                path: None,
            }]
        } else {
            let mut all = Vec::new();
            for arc in &node.arcs {
                let prev = self.kbest(arc.prev, k, memo);
                let ds = self.w.dot(&arc.delta);
                for d in prev.iter() {
                    all.push(Deriv {
                        score: d.score + ds,
                        feats: add(&d.feats, &arc.delta),
                        path: Some(Rc::new(PathLink {
                            opt: arc.opt,
                            prev: d.path.clone(),
                        })),
                    });
                }
            }
            all.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
            all.truncate(k);
            all
        };
        let out = Rc::new(out);
        memo.insert(idx, out.clone());
        out
    }

    fn entry(&self, feats: Features, path: &Option<Rc<PathLink>>) -> NBestEntry {
        let mut opts = Vec::new();
        let mut cur = path.clone();
        while let Some(link) = cur {
            opts.push(link.opt);
            cur = link.prev.clone();
        }
        opts.reverse();
        let mut tokens = Vec::new();
        let mut segments = Vec::new();
        for o in opts {
            let opt = &self.options[o];
            let t0 = tokens.len();
            tokens.extend(opt.target.iter().cloned());
            segments.push(Segment {
                src: (opt.start, opt.end),
                tgt: (t0, tokens.len()),
            });
        }
        NBestEntry {
            tokens,
            score: self.w.dot(&feats),
            features: feats,
            segments,
        }
    }
}

fn entry_cmp(a: &NBestEntry, b: &NBestEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Decodes one sentence into at most `params.nbest` distinct translations,
/// best first. If the distortion limit leaves no complete hypothesis the
/// sentence is re-decoded monotonically.
pub fn decode<S: AsRef<str>>(
    src: &[S],
    table: &PhraseTable,
    lm: &ArpaLM,
    w: &FeatureWeights,
    params: &DecoderParams,
) -> Result<NBestList> {
    if params.nbest == 0 {
        return Err(Error::invalid("nbest must be at least 1"));
    }
    if src.is_empty() {
        return Ok(vec![NBestEntry {
            tokens: Vec::new(),
            features: [0.0; NUM_FEATURES],
            score: 0.0,
            segments: Vec::new(),
        }]);
    }
    let src: Vec<String> = src.iter().map(|s| String::from(s.as_ref())).collect();
    let options = collect_options(&src, table, lm, w, params);
    let fc = future_costs(src.len(), &options);
    let mut search = Search {
        src_len: src.len(),
        lm,
        w,
        options,
        fc,
        nodes: Vec::new(),
    };
    let mut finals = search.run(params, params.distortion_limit);
    if finals.is_empty() {
        finals = search.run(params, Some(0));
    }
    let k = if params.nbest == 1 { 1 } else { params.nbest * 2 };
    let mut memo = FxMap::default();
    let mut entries = Vec::new();
    for &f in &finals {
        let node = &search.nodes[f];
        let eos = search.lm.log10_prob(&node.lm_state, lm.eos()) * core::f64::consts::LN_10;
        for d in search.kbest(f, k, &mut memo).iter() {
            let mut feats = d.feats;
            feats[2] += eos;
            entries.push(search.entry(feats, &d.path));
        }
    }
    entries.sort_by(entry_cmp);
    let mut seen: crate::FxSet<Vec<String>> = crate::FxSet::default();
    entries.retain(|e| seen.insert(e.tokens.clone()));
    entries.truncate(params.nbest);
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{count_ngrams, estimate_kn};
    use crate::ptable::{PhraseCandidate, TableProvenance};
    use crate::textproc::Sentence;
    use alloc::string::ToString;

    fn cand(t: &str, f: f64, b: f64) -> PhraseCandidate {
        PhraseCandidate {
            target: t.to_string(),
            forward: f,
            backward: b,
            lexical: None,
        }
    }

    fn lm() -> ArpaLM {
        let corpus: Vec<Sentence> = ["x y z", "x z y", "y x"].iter().map(|s| Sentence::from_spaced(s)).collect();
        estimate_kn(&count_ngrams(&corpus, 2).unwrap()).unwrap().0
    }

    #[test]
    fn single_phrase_table() {
        let mut t = PhraseTable::new(TableProvenance::Extracted);
        t.insert("a b c".into(), cand("x y z", 1.0, 1.0));
        let out = decode(&["a", "b", "c"], &t, &lm(), &FeatureWeights::default(), &DecoderParams::default())
            .unwrap();
        assert_eq!(out[0].text(), "x y z");
    }

    #[test]
    fn empty_source() {
        let t = PhraseTable::new(TableProvenance::Extracted);
        let empty: [&str; 0] = [];
        let out = decode(&empty, &t, &lm(), &FeatureWeights::default(), &DecoderParams::default()).unwrap();
        assert!(out[0].tokens.is_empty());
        assert_eq!(out[0].score, 0.0);
    }

    #[test]
    fn unknown_words_are_copied() {
        let mut t = PhraseTable::new(TableProvenance::Extracted);
        t.insert("a".into(), cand("x", 1.0, 1.0));
        let out = decode(&["a", "qq"], &t, &lm(), &FeatureWeights::default(), &DecoderParams::monotone())
            .unwrap();
        assert_eq!(out[0].text(), "x qq");
        assert_eq!(out[0].features[3], -(2.0 + 10.0));
    }

    #[test]
    fn nbest_is_distinct_sorted_and_consistent() {
        let mut t = PhraseTable::new(TableProvenance::Extracted);
        t.insert("a".into(), cand("x", 0.6, 0.5));
        t.insert("a".into(), cand("y", 0.4, 0.5));
        t.insert("b".into(), cand("z", 0.7, 0.9));
        t.insert("b".into(), cand("y", 0.3, 0.1));
        t.insert("a b".into(), cand("x z", 0.5, 0.5));
        let w = FeatureWeights::default();
        let p = DecoderParams {
            nbest: 10,
            distortion_limit: None,
            ..Default::default()
        };
        let out = decode(&["a", "b"], &t, &lm(), &w, &p).unwrap();
        let one = decode(&["a", "b"], &t, &lm(), &w, &DecoderParams { nbest: 1, ..p }).unwrap();
        assert_eq!(out[0].tokens, one[0].tokens);
        let mut texts: Vec<String> = out.iter().map(NBestEntry::text).collect();
        for pair in out.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        for e in &out {
            assert!((e.score - w.dot(&e.features)).abs() < 1e-9);
        }
        let n = texts.len();
        texts.sort();
        texts.dedup();
        assert_eq!(texts.len(), n);
        // 2x2 word choices in two orders, the phrase pair, and its swap
        // duplicates some strings
        assert!(n >= 4);
    }
}
