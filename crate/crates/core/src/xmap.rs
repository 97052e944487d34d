//! Self-learning orthogonal mapping of two embedding spaces into a shared
//! space: alternate Procrustes solutions and dictionary induction.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;

use crate::linalg::{dot, Matrix};
use crate::phrasevec::{top_k, EmbeddingMatrix, NormState};
use crate::{Error, FxMap, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedProvenance {
    IdenticalTokens,
    Numerals,
    Frequency,
    /// Similarity-distribution signatures (fully unsupervised).
    Structural,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedDictionary {
    /// (source row, target row).
    pub pairs: Vec<(usize, usize)>,
    pub provenance: SeedProvenance,
}

impl SeedDictionary {
    /// Validates indices and drops repeated source entries (first one wins).
    pub fn new(
        pairs: Vec<(usize, usize)>,
        provenance: SeedProvenance,
        src_rows: usize,
        tgt_rows: usize,
    ) -> Result<Self> {
        let mut seen = vec![false; src_rows];
        let mut out = Vec::with_capacity(pairs.len());
        for (s, t) in pairs {
            if s >= src_rows || t >= tgt_rows {
                return Err(Error::invalid(alloc::format!(
                    "dictionary pair ({s}, {t}) out of range"
                )));
            }
            if !seen[s] {
                seen[s] = true;
                out.push((s, t));
            }
        }
        Ok(SeedDictionary {
            pairs: out,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingSolution {
    pub wx: Matrix,
    pub wz: Matrix,
    pub final_dictionary: Vec<(usize, usize)>,
    /// Mean cosine of the induced pairs, one entry per iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retrieval {
    Nn,
    Csls { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Retrieval used inside the self-learning loop.
    pub inner: Retrieval,
    /// Retrieval used for the returned dictionary.
    pub final_retrieval: Retrieval,
    /// Only the first `cutoff` rows of each side take part in dictionary
    /// induction (rows are frequency-sorted).
    pub cutoff: Option<usize>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            max_iters: 50,
            tol: 1e-6,
            inner: Retrieval::Nn,
            final_retrieval: Retrieval::Csls { k: 10 },
            cutoff: None,
        }
    }
}

/// Unit-normalize rows, mean-center columns, unit-normalize again. Already
/// normalized input is returned unchanged.
pub fn normalize_embeddings(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if m.norm_state == NormState::CenteredUnit {
        return Ok(m.clone());
    }
    let mut out = m.clone();
    unit_normalize(&mut out)?;
    let (rows, dim) = (out.rows(), out.dim());
    if rows > 0 {
        let mut mean = vec![0.0; dim];
        for r in 0..rows {
            for (acc, v) in mean.iter_mut().zip(out.vectors.row(r)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= rows as f64);
        for r in 0..rows {
            for (v, mu) in out.vectors.row_mut(r).iter_mut().zip(&mean) {
                *v -= mu;
            }
        }
    }
    unit_normalize(&mut out)?;
    out.norm_state = NormState::CenteredUnit;
    Ok(out)
}

fn unit_normalize(m: &mut EmbeddingMatrix) -> Result<()> {
    for r in 0..m.rows() {
        let row = m.vectors.row_mut(r);
        let n = dot(row, row).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroRow {
                index: r,
                label: m.labels[r].clone(),
            });
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

/// Orthogonal Procrustes on the dictionary rows: `Wx = U·Vᵀ` from the SVD
/// of `X_dᵀ·Z_d`, `Wz = I`.
pub fn solve_procrustes(
    x: &Matrix,
    z: &Matrix,
    dict: &SeedDictionary,
) -> Result<(Matrix, Matrix)> {
    if dict.is_empty() {
        return Err(Error::Empty("Procrustes dictionary"));
    }
    if x.cols != z.cols {
        return Err(Error::LengthMismatch {
            what: "embedding dimensions",
            left: x.cols,
            right: z.cols,
        });
    }
    let d = x.cols;
    let mut m = Matrix::zeros(d, d);
    for &(s, t) in &dict.pairs {
        let (xr, zr) = (x.row(s), z.row(t));
        for a in 0..d {
            let xa = xr[a];
            if xa == 0.0 {
                continue;
            }
            for (dst, zb) in m.row_mut(a).iter_mut().zip(zr) {
                *dst += xa * zb;
            }
        }
    }
    Ok((m.polar_orthogonal(), Matrix::identity(d)))
}

fn unit_copy(m: &Matrix, limit: usize) -> Matrix {
    let rows = m.rows.min(limit);
    let mut out = Matrix::from_rows(rows, m.cols, m.data[..rows * m.cols].to_vec());
    for r in 0..rows {
        let row = out.row_mut(r);
        let n = dot(row, row).sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Mean cosine of each row of `a` with its `k` nearest rows of `b`.
pub(crate) fn mean_topk_similarity(a: &Matrix, b: &Matrix, k: usize) -> Vec<f64> {
    let k = k.min(b.rows);
    (0..a.rows)
        .map(|i| {
            let scored: Vec<(usize, f64)> =
                (0..b.rows).map(|j| (j, dot(a.row(i), b.row(j)))).collect();
            let top = top_k(scored, k);
            top.iter().map(|p| p.1).sum::<f64>() / k.max(1) as f64
        })
        .collect()
}

/// Best target per source row under cosine (`Nn`) or CSLS,
/// `2·cos(x,z) − r_T(x) − r_S(z)`. Ties go to the lower target index.
pub fn induce_dictionary(
    xm: &Matrix,
    zm: &Matrix,
    method: Retrieval,
    cutoff: Option<usize>,
) -> Result<SeedDictionary> {
    let limit = cutoff.unwrap_or(usize::MAX);
    let (xs, zs) = (unit_copy(xm, limit), unit_copy(zm, limit));
    if zs.rows == 0 {
        return Err(Error::Empty("target embeddings"));
    }
    let (rt, rs) = match method {
        Retrieval::Nn => (vec![0.0; xs.rows], vec![0.0; zs.rows]),
        Retrieval::Csls { k } => {
            if k < 1 {
                return Err(Error::invalid("csls_k must be at least 1"));
            }
            (
                mean_topk_similarity(&xs, &zs, k),
                mean_topk_similarity(&zs, &xs, k),
            )
        }
    };
    let scale = if matches!(method, Retrieval::Nn) { 1.0 } else { 2.0 };
    let pairs = (0..xs.rows)
        .map(|i| {
            let xi = xs.row(i);
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..zs.rows {
                let s = scale * dot(xi, zs.row(j)) - rt[i] - rs[j];
                if s > best.1 {
                    best = (j, s);
                }
            }
            (i, best.0)
        })
        .collect();
    Ok(SeedDictionary {
        pairs,
        provenance: SeedProvenance::UserSupplied,
    })
}

fn mean_pair_cosine(xm: &Matrix, zm: &Matrix, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(s, t)| {
            let (a, b) = (xm.row(s), zm.row(t));
            let n = (dot(a, a) * dot(b, b)).sqrt();
            if n > 0.0 {
                dot(a, b) / n
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / pairs.len() as f64
}

/// Alternates Procrustes and dictionary induction until the mean cosine of
/// the induced pairs improves by less than `tol`, returning the best iterate.
pub fn self_learning_map(
    x: &EmbeddingMatrix,
    z: &EmbeddingMatrix,
    seed: &SeedDictionary,
    cfg: &MapConfig,
) -> Result<MappingSolution> {
    let (mut wx, mut wz) = solve_procrustes(&x.vectors, &z.vectors, seed)?;
    if cfg.max_iters == 0 {
        return Ok(MappingSolution {
            wx,
            wz,
            final_dictionary: seed.pairs.clone(),
            objective_trace: Vec::new(),
        });
    }
    let mut trace = Vec::new();
    let mut best: Option<(f64, Matrix, Matrix)> = None;
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iters {
        let xm = x.vectors.matmul(&wx);
        let zm = z.vectors.matmul(&wz);
        let dict = induce_dictionary(&xm, &zm, cfg.inner, cfg.cutoff)?;
        let objective = mean_pair_cosine(&xm, &zm, &dict.pairs);
        trace.push(objective);
        if best.as_ref().map_or(true, |b| objective > b.0) {
            best = Some((objective, wx.clone(), wz.clone()));
        }
        if objective - previous < cfg.tol {
            break;
        }
        previous = objective;
        (wx, wz) = solve_procrustes(&x.vectors, &z.vectors, &dict)?;
    }
    let (_, wx, wz) = best.expect("at least one iteration");
    let xm = x.vectors.matmul(&wx);
    let zm = z.vectors.matmul(&wz);
    let final_dictionary = induce_dictionary(&xm, &zm, cfg.final_retrieval, cfg.cutoff)?.pairs;
    Ok(MappingSolution {
        wx,
        wz,
        final_dictionary,
        objective_trace: trace,
    })
}

/// Pairs identically spelled entries.
pub fn identical_seed(src: &[alloc::string::String], tgt: &[alloc::string::String]) -> SeedDictionary {
    let mut index: FxMap<&str, usize> = FxMap::default();
    for (j, t) in tgt.iter().enumerate() {
        index.entry(t.as_str()).or_insert(j);
    }
    let pairs = src
        .iter()
        .enumerate()
        .filter_map(|(i, s)| index.get(s.as_str()).map(|&j| (i, j)))
        .collect();
    SeedDictionary {
        pairs,
        provenance: SeedProvenance::IdenticalTokens,
    }
}

fn is_numeral(s: &str) -> bool {
    s.chars().any(|c| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | ' '))
}

/// Identically spelled numerals only.
pub fn numeral_seed(src: &[alloc::string::String], tgt: &[alloc::string::String]) -> SeedDictionary {
    let mut d = identical_seed(src, tgt);
    d.pairs.retain(|&(i, _)| is_numeral(&src[i]));
    d.provenance = SeedProvenance::Numerals;
    d
}

/// Pairs the `n` most frequent rows by rank (rows are frequency-sorted).
pub fn frequency_seed(src_rows: usize, tgt_rows: usize, n: usize) -> SeedDictionary {
    SeedDictionary {
        pairs: (0..n.min(src_rows).min(tgt_rows)).map(|i| (i, i)).collect(),
        provenance: SeedProvenance::Frequency,
    }
}

/// Sorted, normalized rows of `(X·Xᵀ)^½` restricted to the first `n` rows.
fn similarity_signature(m: &Matrix, n: usize) -> Result<EmbeddingMatrix> {
    let n = n.min(m.rows);
    let xn = DMatrix::from_row_slice(n, m.cols, &m.data[..n * m.cols]);
    let svd = xn.svd(true, false);
    let u = svd.u.expect("svd u");
    let us = &u * DMatrix::from_diagonal(&svd.singular_values);
    let sim = us * u.transpose();
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        let mut row: Vec<f64> = (0..n).map(|c| sim[(r, c)]).collect();
        row.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        data.extend(row);
    }
    let labels = (0..n).map(|i| alloc::format!("{i}")).collect();
    normalize_embeddings(&EmbeddingMatrix::new(labels, Matrix::from_rows(n, n, data)))
}

/// Fully unsupervised seed: match the first `n` rows of each side by the
/// shape of their similarity distributions (CSLS retrieval).
pub fn structural_seed(
    x: &EmbeddingMatrix,
    z: &EmbeddingMatrix,
    n: usize,
    csls_k: usize,
) -> Result<SeedDictionary> {
    let sx = similarity_signature(&x.vectors, n)?;
    let sz = similarity_signature(&z.vectors, n)?;
    let mut d = induce_dictionary(&sx.vectors, &sz.vectors, Retrieval::Csls { k: csls_k }, None)?;
    d.provenance = SeedProvenance::Structural;
    Ok(d)
}
