use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umtx_core::decoder::mert::{mert_tune, optimize_weights, pool_bleu, Candidate, MertConfig, Pool, PoolEntry};
use umtx_core::mteval::{corpus_bleu, pair_stats, BleuStats};

/// Textbook BLEU written from scratch: clipped n-gram precision, geometric
/// mean, brevity penalty, zero when any order has no match.
fn naive_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut m = [0u64; 4];
    let mut t = [0u64; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let mut hc: BTreeMap<&[String], u64> = BTreeMap::new();
            let mut rc: BTreeMap<&[String], u64> = BTreeMap::new();
            if h.len() >= n {
                for i in 0..=h.len() - n {
                    *hc.entry(&h[i..i + n]).or_default() += 1;
                    t[n - 1] += 1;
                }
            }
            if rf.len() >= n {
                for i in 0..=rf.len() - n {
                    *rc.entry(&rf[i..i + n]).or_default() += 1;
                }
            }
            for (g, k) in hc {
                m[n - 1] += k.min(*rc.get(g).unwrap_or(&0));
            }
        }
    }
    if m.contains(&0) {
        return 0.0;
    }
    let lp: f64 = (0..4).map(|n| (m[n] as f64 / t[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * lp.exp()
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "A"]), 0..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn corpus_bleu_matches_naive(pairs in prop::collection::vec((sentence(), sentence()), 1..8)) {
        let hyps: Vec<Vec<String>> = pairs.iter().map(|p| p.0.clone()).collect();
        let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.1.clone()).collect();
        let got = corpus_bleu(&hyps, &refs, true).unwrap();
        let want = naive_bleu(&hyps, &refs);
        prop_assert!((got.bleu - want).abs() < 1e-9, "{} vs {}", got.bleu, want);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&got.bleu));
    }

    #[test]
    fn uncased_bleu_ignores_case(pairs in prop::collection::vec((sentence(), sentence()), 1..8)) {
        let hyps: Vec<Vec<String>> = pairs.iter().map(|p| p.0.clone()).collect();
        let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.1.clone()).collect();
        let lower: Vec<Vec<String>> = hyps.iter().map(|h| h.iter().map(|t| t.to_lowercase()).collect()).collect();
        let a = corpus_bleu(&hyps, &refs, false).unwrap().bleu;
        let b = corpus_bleu(&lower, &refs, false).unwrap().bleu;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stats_are_additive(pairs in prop::collection::vec((sentence(), sentence()), 1..8)) {
        let hyps: Vec<Vec<String>> = pairs.iter().map(|p| p.0.clone()).collect();
        let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.1.clone()).collect();
        let mut sum = BleuStats::default();
        for (h, r) in hyps.iter().zip(&refs) {
            sum += pair_stats(h, r, true);
        }
        prop_assert_eq!(corpus_bleu(&hyps, &refs, true).unwrap().stats, sum);
    }

    #[test]
    fn identity_is_perfect(s in prop::collection::vec(sentence(), 1..5)) {
        prop_assume!(s.iter().map(Vec::len).sum::<usize>() >= 4 && s.iter().any(|x| x.len() >= 4));
        prop_assert!((corpus_bleu(&s, &s, true).unwrap().bleu - 100.0).abs() < 1e-9);
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Random 2-feature pool over candidate translations of fixed references.
fn toy_pool(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, Vec<Vec<Candidate>>) {
    let refs = ["the cat sat on the mat", "a dog ran in the park today", "we like green tea a lot"];
    let mut refs_out = Vec::new();
    let mut cands = Vec::new();
    for r in refs {
        let rw = words(r);
        let mut list = Vec::new();
        for _ in 0..6 {
            // drop, duplicate or keep each word at random
            let mut h = Vec::new();
            for w in &rw {
                match rng.random_range(0..5) {
                    0 => {}
                    1 => {
                        h.push(w.clone());
                        h.push(w.clone());
                    }
                    2 => h.push("x".to_string()),
                    _ => h.push(w.clone()),
                }
            }
            let f = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            list.push((h, f));
        }
        refs_out.push(rw);
        cands.push(list);
    }
    (refs_out, cands)
}

fn to_pool(refs: &[Vec<String>], cands: &[Vec<Candidate>]) -> Pool {
    cands
        .iter()
        .zip(refs)
        .map(|(list, r)| {
            list.iter()
                .map(|(h, f)| PoolEntry {
                    features: f.clone(),
                    stats: pair_stats(h, r, false),
                })
                .collect()
        })
        .collect()
}

/// Exact maximum of pool BLEU over all 2-d weight directions: the argmax
/// can only change at angles where two candidates tie, so evaluating one
/// angle strictly inside each arc between critical angles is exhaustive.
fn exact_max_2d(pool: &Pool) -> f64 {
    let mut crit = vec![0.0, std::f64::consts::TAU];
    for entries in pool {
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let d = [
                    entries[i].features[0] - entries[j].features[0],
                    entries[i].features[1] - entries[j].features[1],
                ];
                if d[0] == 0.0 && d[1] == 0.0 {
                    continue;
                }
                // w ⟂ d at two opposite angles
                let a = d[1].atan2(d[0]) + std::f64::consts::FRAC_PI_2;
                for x in [a, a + std::f64::consts::PI] {
                    crit.push(x.rem_euclid(std::f64::consts::TAU));
                }
            }
        }
    }
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = f64::NEG_INFINITY;
    for p in crit.windows(2) {
        if p[1] - p[0] < 1e-12 {
            continue;
        }
        let m = 0.5 * (p[0] + p[1]);
        best = best.max(pool_bleu(pool, &[m.cos(), m.sin()]));
    }
    best
}

#[test]
fn optimizer_reaches_exact_two_feature_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nontrivial = 0;
    for trial in 0..40 {
        let (refs, cands) = toy_pool(&mut rng);
        let pool = to_pool(&refs, &cands);
        let init = [1.0, 0.0];
        let (w, bleu) = optimize_weights(&pool, &init, &MertConfig { seed: trial, ..Default::default() }).unwrap();
        let want = exact_max_2d(&pool);
        assert!((pool_bleu(&pool, &w) - bleu).abs() < 1e-9);
        assert!(bleu <= want + 1e-9, "trial {trial}: {bleu} exceeds exact {want}");
        assert!(bleu >= want - 1e-9, "trial {trial}: {bleu} below exact {want}");
        assert!(bleu >= pool_bleu(&pool, &init));
        if want > pool_bleu(&pool, &init) {
            nontrivial += 1;
        }
    }
    assert!(nontrivial >= 10, "only {nontrivial} trials left room to improve");
}

#[test]
fn accepted_pool_bleu_never_drops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (refs, cands) = toy_pool(&mut rng);
        // a "decoder" that returns the two best candidates under w
        let decode = |w: &[f64]| {
            Ok(cands
                .iter()
                .map(|list| {
                    let mut l = list.clone();
                    l.sort_by(|a, b| {
                        let sa: f64 = a.1.iter().zip(w).map(|(x, y)| x * y).sum();
                        let sb: f64 = b.1.iter().zip(w).map(|(x, y)| x * y).sum();
                        sb.partial_cmp(&sa).unwrap()
                    });
                    l.truncate(2);
                    l
                })
                .collect())
        };
        let cfg = MertConfig {
            rounds: 8,
            min_gain: 0.0,
            ..Default::default()
        };
        let out = mert_tune(&refs, &[1.0, -1.0], &cfg, decode).unwrap();
        assert!(!out.trace.is_empty());
        for p in out.trace.windows(2) {
            assert!(p[1] >= p[0], "trace {:?}", out.trace);
        }
        assert!(out.trace[0] >= out.initial_bleu);
    }
}
