//! One PASS/FAIL line per acceptance criterion, written straight to stderr
//! so the lines show up without `--nocapture`. The test fails if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umtx::config::PipelineConfig;
use umtx::parallel::ParallelDecoder;
use umtx::pipeline::*;
use umtx_core::aligner::{train_fastalign, AlignParams, Alignment, BidirectionalAligner, Symmetrization};
use umtx_core::backtrans::{select_best, translate_corpus, Direction};
use umtx_core::cipher::{decipherment_accuracy, generate, CipherConfig};
use umtx_core::decoder::mert::{mert_tune, optimize_weights, pool_bleu, Candidate, MertConfig, Pool, PoolEntry};
use umtx_core::decoder::{decode, DecoderParams, FeatureWeights, Features, NUM_FEATURES};
use umtx_core::linalg::Matrix;
use umtx_core::lm::{count_ngrams, estimate_kn, ArpaLM, BOS, EOS, UNK};
use umtx_core::mteval::pair_stats;
use umtx_core::phrasevec::{nearest_neighbors, EmbeddingMatrix};
use umtx_core::ptable::{induce_unsupervised, PhraseCandidate, PhraseTable, TableProvenance};
use umtx_core::synthfix::{
    ne_posttreat, ne_pretreat, reorder_augment, strip_untranslated, DiacriticProfile, NePolicy, NeSpan, NeType,
    PretreatConfig,
};
use umtx_core::textproc::Sentence;
use umtx_core::xmap::{normalize_embeddings, self_learning_map, solve_procrustes, MapConfig, Retrieval, SeedDictionary, SeedProvenance};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(t: Instant, limit: Duration) -> Result<(), String> {
    check(t.elapsed() < limit, format!("took {:.1?}, limit {limit:?}", t.elapsed()))
}

fn sent(s: &str) -> Sentence {
    Sentence::from_spaced(s)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_rows(rows, cols, (0..rows * cols).map(|_| gaussian(rng)).collect())
}

fn embeddings(prefix: &str, m: Matrix) -> EmbeddingMatrix {
    let labels = (0..m.rows).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingMatrix::new(labels, m)
}

fn identity_seed(n: usize, rows: usize) -> SeedDictionary {
    SeedDictionary::new((0..n).map(|i| (i, i)).collect(), SeedProvenance::UserSupplied, rows, rows).unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| {
            let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            m.row(r).iter().map(|v| v / n).collect()
        })
        .collect()
}

fn brute_topk(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (n, d) = (5000, 32);
    let mut out = Vec::new();
    for (seed, sigma, floor) in [(2u64, 0.0, 0.99), (3, 0.01, 0.80)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normalize_embeddings(&embeddings("x", random_matrix(&mut rng, n, d))).unwrap();
        let r = random_matrix(&mut rng, d, d).polar_orthogonal();
        let mut zm = x.vectors.matmul(&r);
        for v in zm.data.iter_mut() {
            *v += sigma * gaussian(&mut rng);
        }
        let z = normalize_embeddings(&embeddings("z", zm)).unwrap();
        let sol = self_learning_map(&x, &z, &identity_seed(25, n), &MapConfig::default()).map_err(|e| e.to_string())?;
        let p1 = sol.final_dictionary.iter().filter(|&&(s, t)| s == t).count() as f64 / n as f64;
        check(p1 >= floor, format!("sigma {sigma}: P@1 {p1:.4} < {floor}"))?;
        out.push(format!("P@1(sigma={sigma})={p1:.4}"));
        if sigma == 0.0 {
            // the 25-pair seed spans only 25 of 32 directions, so the
            // Procrustes-only check uses the full dictionary
            let (wx, _) = solve_procrustes(&x.vectors, &z.vectors, &identity_seed(n, n)).map_err(|e| e.to_string())?;
            let err = wx.frobenius_distance(&r);
            check(err < 1e-6, format!("procrustes ‖Wx-R‖ {err:e}"))?;
            let err_sl = sol.wx.frobenius_distance(&r);
            check(err_sl < 1e-6, format!("self-learning ‖Wx-R‖ {err_sl:e}"))?;
            out.push(format!("‖Wx-R‖={err:.1e}"));
        }
    }
    within(t, Duration::from_secs(60))?;
    Ok(out.join(" "))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let src = embeddings("s", random_matrix(&mut rng, 1000, 32));
    let tgt = embeddings("t", random_matrix(&mut rng, 1000, 32));
    let (ua, ub) = (unit_rows(&src.vectors), unit_rows(&tgt.vectors));
    let mut worst = 0.0f64;
    for (method, csls) in [(Retrieval::Nn, None), (Retrieval::Csls { k: 10 }, Some(10usize))] {
        let table = induce_unsupervised(&src, &tgt, 10, 0.1, method).map_err(|e| e.to_string())?;
        let rt: Vec<f64> = match csls {
            Some(ck) => ub
                .iter()
                .map(|v| {
                    let c: Vec<f64> = ua.iter().map(|u| cos(u, v)).collect();
                    brute_topk(&c, ck).iter().map(|&j| c[j]).sum::<f64>() / ck as f64
                })
                .collect(),
            None => vec![0.0; ub.len()],
        };
        for (i, u) in ua.iter().enumerate() {
            let c: Vec<f64> = ub.iter().map(|v| cos(u, v)).collect();
            let scores: Vec<f64> = match csls {
                Some(ck) => {
                    let rs = brute_topk(&c, ck).iter().map(|&j| c[j]).sum::<f64>() / ck as f64;
                    c.iter().zip(&rt).map(|(x, r)| 2.0 * x - rs - r).collect()
                }
                None => c.clone(),
            };
            let mut want: Vec<String> = brute_topk(&scores, 10).iter().map(|j| format!("t{j}")).collect();
            let cands = table.get(&format!("s{i}")).ok_or(format!("s{i} missing"))?;
            let mut got: Vec<String> = cands.iter().map(|c| c.target.clone()).collect();
            want.sort();
            got.sort();
            check(got == want, format!("{method:?}: retrieval for s{i} differs from brute force"))?;
            let total: f64 = cands.iter().map(|c| c.forward).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    check(worst < 1e-6, format!("softmax sums off by {worst:e}"))?;
    for q in 0..1000 {
        let mut c: Vec<f64> = ua.iter().map(|v| cos(&ua[q], v)).collect();
        c[q] = f64::NEG_INFINITY;
        let got: Vec<usize> = nearest_neighbors(q, &src, 5).unwrap().into_iter().map(|p| p.0).collect();
        check(got == brute_topk(&c, 5), format!("k-NN query {q}"))?;
    }
    within(t, Duration::from_secs(30))?;
    Ok(format!("max |Σp-1|={worst:.1e}"))
}

fn lm_p(lm: &ArpaLM, ctx: &[&str], w: &str) -> f64 {
    let ids: Vec<_> = ctx.iter().map(|c| lm.word_id(c)).collect();
    10f64.powf(lm.log10_prob(&ids, lm.word_id(w)))
}

fn criterion_3() -> Outcome {
    let (lm, _) = estimate_kn(&count_ngrams(&[sent("a a b")], 2).unwrap()).unwrap();
    for (ctx, w, want) in [
        (&[][..], "a", 15.0 / 32.0),
        (&[][..], "b", 7.0 / 32.0),
        (&[][..], EOS, 7.0 / 32.0),
        (&[][..], "zzz", 3.0 / 32.0),
        (&["a"][..], "a", 15.0 / 32.0),
        (&["a"][..], "b", 7.0 / 32.0),
    ] {
        let got = lm_p(&lm, ctx, w);
        check((got - want).abs() < 1e-9, format!("fixture P({w}|{ctx:?}) = {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut histories_checked = 0usize;
    for (order, vocab) in [(1, 50), (2, 50), (3, 12), (4, 6)] {
        let corpus: Vec<Sentence> = (0..60)
            .map(|_| {
                let toks: Vec<String> = (0..rng.random_range(0..8))
                    .map(|_| {
                        let r: f64 = rng.random();
                        format!("w{}", ((r * r) * vocab as f64) as usize)
                    })
                    .collect();
                sent(&toks.join(" "))
            })
            .collect();
        let (lm, _) = estimate_kn(&count_ngrams(&corpus, order).unwrap()).unwrap();
        let mut words: Vec<&str> = corpus.iter().flat_map(|s| s.tokens.iter().map(String::as_str)).collect();
        words.sort();
        words.dedup();
        let predictable: Vec<&str> = words.iter().copied().chain([EOS, UNK]).collect();
        let hist_words: Vec<&str> = words.iter().copied().chain([BOS]).collect();
        let mut histories: Vec<Vec<&str>> = vec![Vec::new()];
        for _ in 1..order {
            histories = histories
                .into_iter()
                .flat_map(|h| hist_words.iter().map(move |w| [h.clone(), vec![*w]].concat()))
                .collect();
        }
        for h in &histories {
            let total: f64 = predictable.iter().map(|w| lm_p(&lm, h, w)).sum();
            worst = worst.max((total - 1.0).abs());
        }
        histories_checked += histories.len();

        let text = {
            let mut v = Vec::new();
            umtx::formats::write_arpa(&mut v, &lm).unwrap();
            v
        };
        let back = umtx::formats::read_arpa(std::io::Cursor::new(&text), "mem").map_err(|e| e.to_string())?;
        let (mut a, mut b) = (lm.entries(), back.entries());
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        let exact = a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits() && x.2.to_bits() == y.2.to_bits());
        check(exact, format!("ARPA round trip inexact at order {order}"))?;
    }
    check(worst < 1e-6, format!("history sums off by {worst:e}"))?;
    Ok(format!("{histories_checked} histories, max |Σp-1|={worst:.1e}, ARPA exact"))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let c = generate(&CipherConfig {
        sentences: 10,
        dev_size: 10_000,
        seed: 1,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let bitext: Vec<(Sentence, Sentence)> = c.dev_a.into_iter().zip(c.dev_b).collect();
    let m = train_fastalign(&bitext, AlignParams::default()).map_err(|e| e.to_string())?;
    for w in m.log_likelihoods.windows(2) {
        check(w[1] >= w[0] - 1e-9, format!("log-likelihood dropped: {:?}", m.log_likelihoods))?;
    }
    let aligner = BidirectionalAligner::train(&bitext, AlignParams::default()).map_err(|e| e.to_string())?;
    let (mut hit, mut pred, mut sure) = (0usize, 0usize, 0usize);
    for (s, tg) in &bitext {
        let gold = Alignment::from_links((0..s.len()).map(|i| (i, i)));
        let a = aligner.align(s, tg, Symmetrization::GrowDiagFinalAnd);
        hit += a.links.intersection(&gold.links).count();
        pred += a.len();
        sure += gold.len();
    }
    let aer = 1.0 - 2.0 * hit as f64 / (pred + sure) as f64;
    check(aer <= 0.05, format!("AER {aer:.4}"))?;
    within(t, Duration::from_secs(120))?;
    Ok(format!("AER={aer:.4}, {} EM iterations", m.log_likelihoods.len() - 1))
}

const UNK_COST: f64 = 10.0;

struct DecInstance {
    src: Vec<String>,
    table: PhraseTable,
    lm: ArpaLM,
    w: FeatureWeights,
}

fn dec_instance(rng: &mut ChaCha8Rng) -> DecInstance {
    let tv = ["t0", "t1", "t2", "t3", "t4", "t5"];
    let corpus: Vec<Sentence> = (0..30)
        .map(|_| {
            let toks: Vec<&str> = (0..rng.random_range(1..=6)).map(|_| tv[rng.random_range(0..6)]).collect();
            sent(&toks.join(" "))
        })
        .collect();
    let lm = estimate_kn(&count_ngrams(&corpus, rng.random_range(2..=3)).unwrap()).unwrap().0;
    let n = rng.random_range(1..=5);
    let src: Vec<String> = (0..n).map(|_| format!("s{}", rng.random_range(0..6))).collect();
    let mut table = PhraseTable::new(TableProvenance::Extracted);
    for start in 0..n {
        for len in 1..=2 {
            let key = src[start..(start + len).min(n)].join(" ");
            if start + len > n || rng.random_range(0..4) == 0 || table.get(&key).is_some() {
                continue;
            }
            for _ in 0..rng.random_range(1..=3) {
                let tgt: Vec<&str> = (0..rng.random_range(1..=2))
                    .map(|_| if rng.random_range(0..10) == 0 { "t9" } else { tv[rng.random_range(0..6)] })
                    .collect();
                let tgt = tgt.join(" ");
                if table.get(&key).is_some_and(|c| c.iter().any(|c| c.target == tgt)) {
                    continue;
                }
                let (forward, backward) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
                table.insert(key.clone(), PhraseCandidate { target: tgt, forward, backward, lexical: None });
            }
        }
    }
    let w: Vec<f64> = (0..NUM_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
    DecInstance { src, table, lm, w: FeatureWeights::from_slice(&w).unwrap() }
}

/// Best model score over every segmentation and phrase order.
fn exhaustive_best(inst: &DecInstance, limit: Option<usize>) -> f64 {
    let n = inst.src.len();
    let mut opts: Vec<(usize, usize, Vec<String>, f64, f64, bool)> = Vec::new();
    for s in 0..n {
        for e in s + 1..=n {
            match inst.table.get(&inst.src[s..e].join(" ")) {
                Some(list) => {
                    for c in list {
                        let t = c.target.split(' ').map(String::from).collect();
                        opts.push((s, e, t, c.forward.ln(), c.backward.ln(), false));
                    }
                }
                None if e == s + 1 => opts.push((s, e, vec![inst.src[s].clone()], 0.0, 0.0, true)),
                None => {}
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut stack: Vec<(Vec<bool>, usize, Vec<String>, Features)> = vec![(vec![false; n], 0, Vec::new(), [0.0; NUM_FEATURES])];
    while let Some((cov, end, toks, f)) = stack.pop() {
        if cov.iter().all(|&c| c) {
            let mut f = f;
            let ids: Vec<_> = toks.iter().map(|t| inst.lm.word_id(t)).collect();
            f[2] = inst.lm.score_ids(&ids) * std::f64::consts::LN_10;
            best = best.max(inst.w.dot(&f));
            continue;
        }
        for (s, e, t, fw, bw, unk) in &opts {
            let jump = s.abs_diff(end);
            if cov[*s..*e].iter().any(|&c| c) || limit.is_some_and(|d| jump > d) {
                continue;
            }
            let mut c = cov.clone();
            c[*s..*e].iter_mut().for_each(|x| *x = true);
            let mut nf = f;
            nf[0] += fw;
            nf[1] += bw;
            nf[3] -= t.len() as f64 + if *unk { UNK_COST } else { 0.0 };
            nf[4] -= 1.0;
            nf[5] -= jump as f64;
            stack.push((c, *e, [toks.clone(), t.clone()].concat(), nf));
        }
    }
    best
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut instances, mut worst) = (0usize, 0.0f64);
    for _ in 0..250 {
        let inst = dec_instance(&mut rng);
        for limit in [None, Some(0), Some(1), Some(2)] {
            let params = DecoderParams { beam_size: 100_000, distortion_limit: limit, nbest: 10, max_options: 10, unk_cost: UNK_COST };
            let out = decode(&inst.src, &inst.table, &inst.lm, &inst.w, &params).map_err(|e| e.to_string())?;
            let want = exhaustive_best(&inst, limit);
            let gap = (out[0].score - want).abs();
            worst = worst.max(gap);
            check(gap < 1e-9, format!("{:?} limit {limit:?}: beam {} oracle {want}", inst.src, out[0].score))?;
            for e in &out {
                check((inst.w.dot(&e.features) - e.score).abs() < 1e-9, "score is not w·features")?;
                if limit == Some(0) {
                    let mut end = 0;
                    for seg in &e.segments {
                        check(seg.src.0 == end, format!("non-monotone output at limit 0 for {:?}", inst.src))?;
                        end = seg.src.1;
                    }
                }
            }
            instances += 1;
        }
    }
    check(instances >= 200, "too few instances")?;
    Ok(format!("{instances} instances, max gap {worst:.1e}"))
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn toy_pool(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, Vec<Vec<Candidate>>) {
    let mut refs = Vec::new();
    let mut cands = Vec::new();
    for r in ["the cat sat on the mat", "a dog ran in the park today", "we like green tea a lot"] {
        let rw = words(r);
        let list = (0..6)
            .map(|_| {
                let mut h = Vec::new();
                for w in &rw {
                    match rng.random_range(0..5) {
                        0 => {}
                        1 => h.extend([w.clone(), w.clone()]),
                        2 => h.push("x".into()),
                        _ => h.push(w.clone()),
                    }
                }
                (h, vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            })
            .collect();
        refs.push(rw);
        cands.push(list);
    }
    (refs, cands)
}

/// Pool BLEU at every direction on a fine angular grid; the best grid
/// point is the oracle optimum up to grid resolution, and at least one
/// grid point lies inside any arc wider than the step.
fn grid_max(pool: &Pool, steps: usize) -> f64 {
    (0..steps)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / steps as f64;
            pool_bleu(pool, &[a.cos(), a.sin()])
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut matched = 0;
    for trial in 0..40u64 {
        let (refs, cands) = toy_pool(&mut rng);
        let pool: Pool = cands
            .iter()
            .zip(&refs)
            .map(|(l, r)| l.iter().map(|(h, f)| PoolEntry { features: f.clone(), stats: pair_stats(h, r, false) }).collect())
            .collect();
        let (_, bleu) = optimize_weights(&pool, &[1.0, 0.0], &MertConfig { seed: trial, ..Default::default() }).map_err(|e| e.to_string())?;
        let grid = grid_max(&pool, 200_000);
        check(bleu >= grid - 1e-9, format!("trial {trial}: MERT {bleu:.4} below grid optimum {grid:.4}"))?;
        matched += 1;

        let decode = |w: &[f64]| {
            Ok(cands
                .iter()
                .map(|list| {
                    let mut l = list.clone();
                    let s = |c: &Candidate| c.1.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
                    l.sort_by(|a, b| s(b).partial_cmp(&s(a)).unwrap());
                    l.truncate(2);
                    l
                })
                .collect())
        };
        let out = mert_tune(&refs, &[1.0, -1.0], &MertConfig { rounds: 8, min_gain: 0.0, seed: trial, ..Default::default() }, decode)
            .map_err(|e| e.to_string())?;
        check(out.trace.windows(2).all(|p| p[1] >= p[0]), format!("trial {trial}: trace {:?}", out.trace))?;
        check(out.trace.first().is_some_and(|&b| b >= out.initial_bleu), "first round below initial")?;
    }
    Ok(format!("{matched}/40 toy pools at the grid optimum, traces non-decreasing"))
}

/// Runs the cipher experiment through model selection and measures the
/// selected B→A system on the dev set.
fn criterion_7() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut cfg = PipelineConfig::cipher_desk();
    cfg.seed = 1;
    let err = |e: umtx::error::Error| e.to_string();
    let mut r = Runner::open(root, cfg.to_toml(), false).map_err(err)?;
    let dec = ParallelDecoder::new(1).map_err(|e| e.to_string())?;
    stage_data(&mut r, &cfg).map_err(err)?;
    stage_preprocess(&mut r, &cfg).map_err(err)?;
    stage_embed(&mut r, &cfg, LANG_A).map_err(err)?;
    stage_embed(&mut r, &cfg, LANG_B).map_err(err)?;
    stage_map(&mut r, &cfg).map_err(err)?;
    stage_table(&mut r, &cfg).map_err(err)?;
    stage_lm(&mut r, &cfg, LANG_A).map_err(err)?;
    stage_lm(&mut r, &cfg, LANG_B).map_err(err)?;
    stage_initial(&mut r, &cfg, &dec).map_err(err)?;
    stage_backtranslate(&mut r, &cfg, &dec).map_err(err)?;
    stage_select(&mut r, &cfg).map_err(err)?;

    let records = load_records(root, &cfg).map_err(err)?;
    let bleu = |it: usize, d: Direction| records.iter().find(|x| x.iteration == it && x.direction == d).map(|x| x.dev_bleu);
    let mut trend = Vec::new();
    for d in [Direction::AtoB, Direction::BtoA] {
        let (b0, b1) = (bleu(0, d).ok_or("no initial record")?, bleu(1, d).ok_or("no iteration-1 record")?);
        check(b1 > b0, format!("{}: dev BLEU {b0:.2} -> {b1:.2}", d.name()))?;
        trend.push(format!("{} {b0:.1}->{b1:.1}", d.name()));
    }
    let mine: Vec<_> = records.iter().filter(|x| x.direction == Direction::BtoA).cloned().collect();
    let best = select_best(&mine).map_err(|e| e.to_string())?;
    let lm = load_lm(root, "lm/a.arpa").map_err(err)?;
    let read = |rel: &str| umtx::formats::read_corpus_file(&root.join(rel)).map_err(err);
    let (src, refs) = (read("prep/dev.b.txt")?, read("prep/dev.a.txt")?);
    let (hyps, _) = translate_corpus(&dec, &best.system, &lm, &src);
    let acc = decipherment_accuracy(&hyps, &refs).map_err(|e| e.to_string())?;
    check(acc >= 0.90, format!("decipherment accuracy {acc:.3} of iteration {}", best.iteration))?;
    within(t, Duration::from_secs(15 * 60))?;
    Ok(format!(
        "dev BLEU {}, selected b2a iteration {} accuracy {acc:.3}, {:.0?}",
        trend.join(", "),
        best.iteration,
        t.elapsed()
    ))
}

fn criterion_8() -> Outcome {
    let (out, _) = strip_untranslated(&[sent("na písčitém pobřeží")], &[sent("auf písčitém Küste")], &DiacriticProfile::czech(), "unk")
        .map_err(|e| e.to_string())?;
    check(out[0].join() == "auf unk Küste", format!("strip gave {:?}", out[0].join()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let corpus: Vec<Sentence> = (0..10_000)
        .map(|_| {
            let mut toks: Vec<String> = (0..rng.random_range(1..40)).map(|i| format!("w{i}")).collect();
            toks.shuffle(&mut rng);
            Sentence::new(toks, 0)
        })
        .collect();
    let aug = reorder_augment(&corpus, 5, 17).map_err(|e| e.to_string())?;
    check(aug.len() == 2 * corpus.len(), "reordered corpus is not doubled")?;
    for (k, s) in aug.iter().enumerate() {
        let orig = &corpus[k % corpus.len()];
        let (mut a, mut b) = (s.tokens.clone(), orig.tokens.clone());
        a.sort();
        b.sort();
        check(a == b, format!("multiset changed in sentence {k}"))?;
        for (j, tok) in s.tokens.iter().enumerate() {
            let i = orig.tokens.iter().position(|x| x == tok).unwrap();
            check(i.abs_diff(j) < 5, format!("token moved {} places", i.abs_diff(j)))?;
        }
    }

    let span = |sentence, start, end, kind, surface: &str| NeSpan { sentence, start, end, kind, surface: surface.into() };
    let src = vec![sent("král Ludvík přijel do Brno")];
    let tgt = vec![sent("König Harold kam nach Kraluv Dvur")];
    let al = vec![Alignment::from_links([(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (4, 5)])];
    let spans = vec![span(0, 1, 2, NeType::Personal, "Ludvík"), span(0, 4, 5, NeType::Geographical, "Brno")];
    let pre = ne_pretreat(&src, &tgt, &spans, &al, &NePolicy::default(), &PretreatConfig::default()).map_err(|e| e.to_string())?;
    check(pre.sentences[0].join() == "König Ludvík kam nach unk", format!("pretreat gave {:?}", pre.sentences[0].join()))?;

    let post = ne_posttreat(
        &sent("Prozaik Werner Söllner ist tot"),
        &sent("Prozaik Filip Söllner zemřel"),
        &Alignment::from_links([(0, 0), (1, 1), (2, 2), (3, 3), (4, 3)]),
        &[span(0, 1, 3, NeType::Personal, "Filip Söllner")],
        &NePolicy::default(),
    )
    .map_err(|e| e.to_string())?;
    check(post.sentences[0].join() == "Prozaik Werner Söllner zemřel", format!("posttreat gave {:?}", post.sentences[0].join()))?;
    Ok("strip, reorder (10k), pretreat, posttreat".into())
}

fn criterion_9() -> Outcome {
    let cfg = common::tiny();
    let snaps: Vec<BTreeMap<String, Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_pipeline(&cfg, dir.path(), RunOptions { workers: 1, resume: false }).unwrap();
            common::snapshot(dir.path())
        })
        .collect();
    let differing: Vec<&String> = snaps[0]
        .keys()
        .chain(snaps[1].keys())
        .filter(|k| snaps[0].get(*k) != snaps[1].get(*k))
        .collect();
    check(differing.is_empty(), format!("files differ: {differing:?}"))?;
    check(snaps[0].contains_key(umtx::manifest::MANIFEST_FILE), "no manifest")?;
    Ok(format!("{} files byte-identical, manifest included", snaps[0].len()))
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let line = match res {
            Ok(detail) => format!("criterion {n}: PASS ({detail}) [{:.1?}]", t.elapsed()),
            Err(why) => {
                failed.push(n);
                format!("criterion {n}: FAIL ({why}) [{:.1?}]", t.elapsed())
            }
        };
        // bypasses the test harness's output capture
        writeln!(std::io::stderr(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
