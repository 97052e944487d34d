use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use umtx_core::linalg::Matrix;
use umtx_core::phrasevec::{nearest_neighbors, EmbeddingMatrix};
use umtx_core::ptable::{induce_unsupervised, softmax};
use umtx_core::xmap::{
    normalize_embeddings, self_learning_map, solve_procrustes, MapConfig, Retrieval, SeedDictionary,
    SeedProvenance,
};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_rows(rows, cols, (0..rows * cols).map(|_| gaussian(rng)).collect())
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let q = g.qr().q();
    Matrix::from_rows(d, d, (0..d * d).map(|i| q[(i / d, i % d)]).collect())
}

fn embeddings(prefix: &str, m: Matrix) -> EmbeddingMatrix {
    let labels = (0..m.rows).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingMatrix::new(labels, m)
}

fn identity_seed(n: usize, rows: usize) -> SeedDictionary {
    SeedDictionary::new((0..n).map(|i| (i, i)).collect(), SeedProvenance::UserSupplied, rows, rows).unwrap()
}

fn precision_at_1(pairs: &[(usize, usize)], rows: usize) -> f64 {
    pairs.iter().filter(|&&(s, t)| s == t).count() as f64 / rows as f64
}

struct Setup {
    x: EmbeddingMatrix,
    z: EmbeddingMatrix,
    r: Matrix,
}

fn setup(seed: u64, sigma: f64) -> Setup {
    let (n, d) = (5000, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normalize_embeddings(&embeddings("x", random_matrix(&mut rng, n, d))).unwrap();
    let r = random_orthogonal(&mut rng, d);
    let mut zm = x.vectors.matmul(&r);
    for v in zm.data.iter_mut() {
        *v += sigma * gaussian(&mut rng);
    }
    let z = normalize_embeddings(&embeddings("z", zm)).unwrap();
    Setup { x, z, r }
}

#[test]
fn procrustes_recovers_the_rotation_exactly() {
    let s = setup(1, 0.0);
    let n = s.x.rows();
    // the full dictionary pins down every direction
    let (wx, wz) = solve_procrustes(&s.x.vectors, &s.z.vectors, &identity_seed(n, n)).unwrap();
    assert_eq!(wz, Matrix::identity(32));
    let err = wx.frobenius_distance(&s.r);
    assert!(err < 1e-6, "‖Wx − R‖ = {err}");
    assert!(wx.orthogonality_error() < 1e-9);
}

#[test]
fn self_learning_from_small_seed_noiseless() {
    let s = setup(2, 0.0);
    let n = s.x.rows();
    let sol = self_learning_map(&s.x, &s.z, &identity_seed(25, n), &MapConfig::default()).unwrap();
    let p1 = precision_at_1(&sol.final_dictionary, n);
    assert!(p1 >= 0.99, "P@1 {p1}");
    let err = sol.wx.frobenius_distance(&s.r);
    assert!(err < 1e-6, "‖Wx − R‖ = {err}");
}

#[test]
fn self_learning_from_small_seed_with_noise() {
    let s = setup(3, 0.01);
    let n = s.x.rows();
    let sol = self_learning_map(&s.x, &s.z, &identity_seed(25, n), &MapConfig::default()).unwrap();
    let p1 = precision_at_1(&sol.final_dictionary, n);
    assert!(p1 >= 0.80, "P@1 {p1}");
}

/// Exhaustive top-k by sorting every candidate; ties to the lower index.
fn brute_topk(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn unit_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| {
            let row = m.row(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter().map(|v| v / n).collect()
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn brute_table(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    k: usize,
    t: f64,
    csls: Option<usize>,
) -> Vec<BTreeMap<usize, f64>> {
    let r = |p: &[Vec<f64>], q: &[Vec<f64>], ck: usize| -> Vec<f64> {
        p.iter()
            .map(|u| {
                let c: Vec<f64> = q.iter().map(|v| cos(u, v)).collect();
                brute_topk(&c, ck).iter().map(|&j| c[j]).sum::<f64>() / ck as f64
            })
            .collect()
    };
    let (ra, rb) = match csls {
        Some(ck) => (r(a, b, ck), r(b, a, ck)),
        None => (vec![0.0; a.len()], vec![0.0; b.len()]),
    };
    a.iter()
        .enumerate()
        .map(|(i, u)| {
            let c: Vec<f64> = b.iter().map(|v| cos(u, v)).collect();
            let scores: Vec<f64> = match csls {
                Some(_) => c.iter().enumerate().map(|(j, x)| 2.0 * x - ra[i] - rb[j]).collect(),
                None => c.clone(),
            };
            let top = brute_topk(&scores, k);
            let sims: Vec<f64> = top.iter().map(|&j| c[j] / t).collect();
            let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = sims.iter().map(|s| (s - m).exp()).sum();
            top.iter().zip(&sims).map(|(&j, s)| (j, (s - m).exp() / z)).collect()
        })
        .collect()
}

#[test]
fn induced_table_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let src = embeddings("s", random_matrix(&mut rng, 1000, 32));
    let tgt = embeddings("t", random_matrix(&mut rng, 1000, 32));
    let (ua, ub) = (unit_rows(&src.vectors), unit_rows(&tgt.vectors));
    for (method, csls) in [(Retrieval::Nn, None), (Retrieval::Csls { k: 10 }, Some(10))] {
        let table = induce_unsupervised(&src, &tgt, 10, 0.1, method).unwrap();
        let fwd = brute_table(&ua, &ub, 10, 0.1, csls);
        let bwd = brute_table(&ub, &ua, 10, 0.1, csls);
        for (i, want) in fwd.iter().enumerate() {
            let cands = table.get(&format!("s{i}")).unwrap();
            assert_eq!(cands.len(), 10);
            let total: f64 = cands.iter().map(|c| c.forward).sum();
            assert!((total - 1.0).abs() < 1e-6);
            for c in cands {
                let j: usize = c.target[1..].parse().unwrap();
                let p = want.get(&j).unwrap_or_else(|| panic!("s{i}: {} not in brute-force top-k", c.target));
                assert!((c.forward - p).abs() < 1e-9);
                let b = bwd[j].get(&i).copied().unwrap_or_else(|| bwd[j].values().copied().fold(f64::INFINITY, f64::min));
                assert!((c.backward - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn softmax_is_normalized_and_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.random_range(1..30);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rng.random_range(0.01..2.0);
        let p = softmax(&s, t);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..n {
            for j in 0..n {
                if s[i] > s[j] {
                    assert!(p[i] >= p[j]);
                }
            }
        }
    }
}

#[test]
fn nearest_neighbors_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = embeddings("w", random_matrix(&mut rng, 1000, 32));
    let u = unit_rows(&m.vectors);
    for q in 0..m.rows() {
        let mut c: Vec<f64> = u.iter().map(|v| cos(&u[q], v)).collect();
        c[q] = f64::NEG_INFINITY;
        let want = brute_topk(&c, 5);
        let got: Vec<usize> = nearest_neighbors(q, &m, 5).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(got, want, "query {q}");
    }
}
