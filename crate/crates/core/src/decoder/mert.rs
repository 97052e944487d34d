//! Minimum error rate training: exact line search over the upper envelope of
//! an accumulated n-best pool, with seeded random restarts.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mteval::{pair_stats, BleuStats};
use crate::{Error, FxSet, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub features: Vec<f64>,
    pub stats: BleuStats,
}

/// Candidate translations per dev sentence.
pub type Pool = Vec<Vec<PoolEntry>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertConfig {
    pub rounds: usize,
    /// Random starting points besides the current weights.
    pub random_restarts: usize,
    /// Random search directions per sweep besides the coordinate axes.
    pub random_directions: usize,
    /// Stop once a round improves pool BLEU by less than this.
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for MertConfig {
    fn default() -> Self {
        MertConfig {
            rounds: 10,
            random_restarts: 20,
            random_directions: 3,
            min_gain: 0.01,
            seed: 0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(entries: &[PoolEntry], w: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, e) in entries.iter().enumerate() {
        let s = dot(w, &e.features);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Corpus BLEU of the pool's highest-scoring entries under `w`.
pub fn pool_bleu(pool: &Pool, w: &[f64]) -> f64 {
    let mut st = BleuStats::default();
    for entries in pool.iter().filter(|e| !e.is_empty()) {
        st += entries[argmax(entries, w)].stats;
    }
    st.bleu()
}

/// Upper envelope of lines `a + γ·b`: (start γ, entry index) pieces from
/// left to right. Identical lines keep the lowest index.
fn envelope(lines: &[(f64, f64)]) -> Vec<(f64, usize)> {
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (lines[i], lines[j]);
        a.1.partial_cmp(&b.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal))
            .then_with(|| i.cmp(&j))
    });
    let mut hull: Vec<(f64, usize)> = Vec::new();
    for idx in order {
        let (a, b) = lines[idx];
        if let Some(&(_, last)) = hull.last() {
            if lines[last].1 == b {
                continue;
            }
        }
        loop {
            let Some(&(start, last)) = hull.last() else {
                hull.push((f64::NEG_INFINITY, idx));
                break;
            };
            let (la, lb) = lines[last];
            let x = (la - a) / (b - lb);
            if x <= start {
                hull.pop();
                continue;
            }
            hull.push((x, idx));
            break;
        }
    }
    hull
}

/// Exact search for the step `γ` along `dir` maximizing pool BLEU. Keeps
/// `γ = 0` when no interval is strictly better.
pub fn line_search(pool: &Pool, w: &[f64], dir: &[f64]) -> (f64, f64) {
    let mut st = BleuStats::default();
    let mut events: Vec<(f64, BleuStats, BleuStats)> = Vec::new();
    for entries in pool.iter().filter(|e| !e.is_empty()) {
        let lines: Vec<(f64, f64)> = entries
            .iter()
            .map(|e| (dot(w, &e.features), dot(dir, &e.features)))
            .collect();
        let hull = envelope(&lines);
        st += entries[hull[0].1].stats;
        for pair in hull.windows(2) {
            events.push((pair[1].0, entries[pair[0].1].stats, entries[pair[1].1].stats));
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // (left, right, bleu) per interval
    let mut intervals = Vec::with_capacity(events.len() + 1);
    let mut left = f64::NEG_INFINITY;
    let mut i = 0;
    loop {
        let right = events.get(i).map_or(f64::INFINITY, |e| e.0);
        intervals.push((left, right, st.bleu()));
        if i >= events.len() {
            break;
        }
        let x = events[i].0;
        while i < events.len() && events[i].0 == x {
            st -= events[i].1;
            st += events[i].2;
            i += 1;
        }
        left = x;
    }
    let best = intervals.iter().map(|iv| iv.2).fold(f64::NEG_INFINITY, f64::max);
    if let Some(iv) = intervals.iter().find(|iv| iv.0 < 0.0 && 0.0 < iv.1) {
        if iv.2 >= best {
            return (0.0, iv.2);
        }
    }
    let iv = intervals.iter().find(|iv| iv.2 == best).expect("at least one interval");
    let gamma = match (iv.0.is_finite(), iv.1.is_finite()) {
        (true, true) => 0.5 * (iv.0 + iv.1),
        (false, true) => iv.1 - 1.0,
        (true, false) => iv.0 + 1.0,
        (false, false) => 0.0,
    };
    (gamma, best)
}

fn l1_normalized(w: &[f64]) -> Vec<f64> {
    let n: f64 = w.iter().map(|x| x.abs()).sum();
    if n > 0.0 {
        w.iter().map(|x| x / n).collect()
    } else {
        w.to_vec()
    }
}

fn coordinate_ascent(pool: &Pool, start: Vec<f64>, dirs: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut w = start;
    let mut cur = pool_bleu(pool, &w);
    for _ in 0..100 {
        let mut improved = false;
        for d in dirs {
            let (g, b) = line_search(pool, &w, d);
            if b > cur + 1e-9 {
                for (wi, di) in w.iter_mut().zip(d) {
                    *wi += g * di;
                }
                // the envelope is exact, but guard against float drift
                let actual = pool_bleu(pool, &w);
                if actual > cur {
                    cur = actual;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (w, cur)
}

/// Maximizes pool BLEU from `init` and from `random_restarts` random
/// points. Returns `init` unchanged when nothing beats it, otherwise the
/// best weights scaled to unit L1 norm.
pub fn optimize_weights(pool: &Pool, init: &[f64], cfg: &MertConfig) -> Result<(Vec<f64>, f64)> {
    let dim = init.len();
    if dim == 0 {
        return Err(Error::invalid("no features to tune"));
    }
    if pool.iter().flatten().any(|e| e.features.len() != dim) {
        return Err(Error::invalid("pool feature dimension differs from weights"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = pool_bleu(pool, init);
    let mut best = (init.to_vec(), base);
    let mut starts = vec![init.to_vec()];
    for _ in 0..cfg.random_restarts {
        starts.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    for start in starts {
        let mut dirs: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                let mut d = vec![0.0; dim];
                d[i] = 1.0;
                d
            })
            .collect();
        for _ in 0..cfg.random_directions {
            dirs.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let (w, b) = coordinate_ascent(pool, start, &dirs);
        if b > best.1 + 1e-9 {
            best = (w, b);
        }
    }
    if best.1 > base {
        let w = l1_normalized(&best.0);
        let b = pool_bleu(pool, &w);
        Ok((w, b))
    } else {
        Ok((init.to_vec(), base))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MertOutcome {
    pub weights: Vec<f64>,
    /// Accepted pool BLEU after each round.
    pub trace: Vec<f64>,
    /// Pool BLEU of the initial weights on the first pool.
    pub initial_bleu: f64,
    pub pool_size: usize,
}

/// One decoded candidate: tokens and feature vector.
pub type Candidate = (Vec<String>, Vec<f64>);

/// Alternates decoding the dev set with the current weights and
/// optimizing over the growing pool. `decode` returns an n-best list per
/// dev sentence. BLEU is computed on lowercased tokens.
pub fn mert_tune<F>(refs: &[Vec<String>], initial: &[f64], cfg: &MertConfig, mut decode: F) -> Result<MertOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<Vec<Candidate>>>,
{
    if refs.is_empty() {
        return Err(Error::Empty("dev set"));
    }
    if refs.iter().all(|r| r.is_empty()) {
        return Err(Error::Degenerate("every dev reference is empty".into()));
    }
    let mut pool: Pool = vec![Vec::new(); refs.len()];
    let mut seen: Vec<FxSet<Vec<String>>> = vec![FxSet::default(); refs.len()];
    let mut w = initial.to_vec();
    let mut trace: Vec<f64> = Vec::new();
    let mut initial_bleu = None;
    for round in 0..cfg.rounds {
        let nbest = decode(&w)?;
        if nbest.len() != refs.len() {
            return Err(Error::LengthMismatch {
                what: "n-best lists vs dev references",
                left: nbest.len(),
                right: refs.len(),
            });
        }
        let mut added = 0;
        for (i, list) in nbest.into_iter().enumerate() {
            for (tokens, features) in list {
                if seen[i].insert(tokens.clone()) {
                    pool[i].push(PoolEntry {
                        stats: pair_stats(&tokens, &refs[i], false),
                        features,
                    });
                    added += 1;
                }
            }
        }
        if initial_bleu.is_none() {
            initial_bleu = Some(pool_bleu(&pool, initial));
        }
        let round_cfg = MertConfig {
            seed: cfg.seed.wrapping_add(round as u64),
            ..*cfg
        };
        let (cand, bleu) = optimize_weights(&pool, &w, &round_cfg)?;
        let prev = trace.last().copied();
        if prev.is_some_and(|p| bleu < p) {
            break;
        }
        trace.push(bleu);
        w = cand;
        if added == 0 || prev.is_some_and(|p| bleu - p < cfg.min_gain) {
            break;
        }
    }
    Ok(MertOutcome {
        weights: w,
        trace,
        initial_bleu: initial_bleu.unwrap_or(0.0),
        pool_size: pool.iter().map(Vec::len).sum(),
    })
}
