//! Dense symmetric linear algebra on top of `faer`.

use faer::prelude::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Relative diagonal jitter added before factorizing Gram-type matrices.
pub const JITTER: f64 = 1e-10;

/// Relative cutoff below which eigenvalues of a PSD matrix are treated as zero
/// when forming pseudo-inverse square roots.
pub const RANGE_TOL: f64 = 1e-12;

/// Eigen-decomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn sym_eig(m: &Mat<f64>) -> Result<SymEig> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::num(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(SymEig { values, vectors })
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn jitter_for(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let tr: f64 = (0..n).map(|i| m[(i, i)]).sum();
    JITTER * tr.abs().max(f64::MIN_POSITIVE) / n as f64
}

fn condition_estimate(m: &Mat<f64>) -> f64 {
    match sym_eig(m) {
        Ok(e) => {
            let hi = e.values.first().copied().unwrap_or(0.0).abs();
            let lo = e.values.last().copied().unwrap_or(0.0);
            if lo <= 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        }
        Err(_) => f64::NAN,
    }
}

/// Solves `(G + diag(d)) x = rhs` by Cholesky, retrying once with a small
/// diagonal jitter if the plain factorization fails.
pub fn solve_shifted(g: &Mat<f64>, d: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = g.nrows();
    debug_assert_eq!(d.len(), n);
    debug_assert_eq!(rhs.len(), n);
    let mut a = g.clone();
    for i in 0..n {
        a[(i, i)] += d[i];
    }
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let solved = |a: &Mat<f64>| -> Option<Vec<f64>> {
        let llt = a.llt(Side::Lower).ok()?;
        let x = llt.solve(&b);
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    };
    if let Some(x) = solved(&a) {
        return Ok(x);
    }
    let j = jitter_for(g);
    for i in 0..n {
        a[(i, i)] += j;
    }
    solved(&a).ok_or_else(|| {
        Error::num(format!(
            "Cholesky solve of {n}x{n} system failed after jitter (condition estimate {:e})",
            condition_estimate(&a)
        ))
    })
}

/// Factorization of `G + lambda D` that can be re-solved for many `lambda`.
///
/// With `M = D^{-1/2} (G + jitter I) D^{-1/2} = V E V^T`,
/// `(G + lambda D)^{-1} c = D^{-1/2} V (E + lambda)^{-1} V^T D^{-1/2} c`.
pub struct ShiftedEig {
    inv_sqrt_d: Vec<f64>,
    eig: SymEig,
}

impl ShiftedEig {
    pub fn new(g: &Mat<f64>, d: &[f64]) -> Result<Self> {
        let n = g.nrows();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::arg("shift weights must be positive"));
        }
        let j = jitter_for(g);
        let inv_sqrt_d: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let m = Mat::from_fn(n, n, |r, c| {
            let gv = g[(r, c)] + if r == c { j } else { 0.0 };
            inv_sqrt_d[r] * gv * inv_sqrt_d[c]
        });
        let eig = sym_eig(&m)?;
        Ok(ShiftedEig { inv_sqrt_d, eig })
    }

    /// Projects `rhs` once so that [`ShiftedEig::solve_projected`] is cheap per `lambda`.
    pub fn project(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let scaled: Vec<f64> = rhs.iter().zip(&self.inv_sqrt_d).map(|(a, b)| a * b).collect();
        let v = &self.eig.vectors;
        (0..n)
            .map(|k| (0..n).map(|i| v[(i, k)] * scaled[i]).sum())
            .collect()
    }

    pub fn solve_projected(&self, projected: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let n = projected.len();
        let mut coef = vec![0.0; n];
        for k in 0..n {
            let den = self.eig.values[k] + lambda;
            if !(den > 0.0) {
                return Err(Error::num(format!(
                    "shifted system singular at lambda = {lambda:e}"
                )));
            }
            coef[k] = projected[k] / den;
        }
        let v = &self.eig.vectors;
        Ok((0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|k| v[(i, k)] * coef[k]).sum();
                s * self.inv_sqrt_d[i]
            })
            .collect())
    }
}

/// Orthonormal basis of the numerical range of a PSD matrix with the
/// retained eigenvalues: `P ~= U diag(e) U^T`.
#[derive(Debug, Clone)]
pub struct RangeFactor {
    pub basis: Mat<f64>,
    pub values: Vec<f64>,
}

impl RangeFactor {
    pub fn new(p: &Mat<f64>) -> Result<Self> {
        let eig = sym_eig(p)?;
        let top = eig.values.first().copied().unwrap_or(0.0);
        if !(top > 0.0) {
            return Err(Error::num("integral matrix has no positive eigenvalues"));
        }
        let cut = RANGE_TOL * top;
        let r = eig.values.iter().take_while(|&&v| v > cut).count();
        let n = p.nrows();
        let basis = Mat::from_fn(n, r, |i, j| eig.vectors[(i, j)]);
        Ok(RangeFactor {
            basis,
            values: eig.values[..r].to_vec(),
        })
    }

    /// Factor of `P = B^T B` from the thin SVD of `B`, keeping every direction
    /// above the numerical rank cutoff of `B`. Small directions are far more
    /// accurate than those of an eigendecomposition of `P`.
    pub fn from_root(b: &Mat<f64>) -> Result<Self> {
        let svd = b
            .thin_svd()
            .map_err(|e| Error::num(format!("SVD failed to converge: {e:?}")))?;
        let s = svd.S().column_vector();
        let k = s.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let top = order.first().map(|&i| s[i]).unwrap_or(0.0);
        if !(top > 0.0) {
            return Err(Error::num("integral matrix has no positive eigenvalues"));
        }
        let cut = b.nrows().max(b.ncols()) as f64 * f64::EPSILON * top;
        let kept: Vec<usize> = order.into_iter().take_while(|&i| s[i] > cut).collect();
        let v = svd.V();
        let basis = Mat::from_fn(v.nrows(), kept.len(), |i, j| v[(i, kept[j])]);
        Ok(RangeFactor {
            basis,
            values: kept.iter().map(|&i| s[i] * s[i]).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `diag(sqrt e) U^T` (r x n): maps coefficient space into reduced coordinates.
    pub fn half_t(&self) -> Mat<f64> {
        let (n, r) = (self.basis.nrows(), self.rank());
        Mat::from_fn(r, n, |i, j| self.values[i].sqrt() * self.basis[(j, i)])
    }

    /// `U diag(1/sqrt e)` (n x r): pseudo-inverse square root restricted to the range.
    pub fn inv_half(&self) -> Mat<f64> {
        let (n, r) = (self.basis.nrows(), self.rank());
        Mat::from_fn(n, r, |i, j| self.basis[(i, j)] / self.values[j].sqrt())
    }
}

/// Singular triplets of a dense matrix, sorted by decreasing singular value.
pub struct Svd {
    pub values: Vec<f64>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

pub fn thin_svd(m: &Mat<f64>) -> Result<Svd> {
    let svd = m
        .thin_svd()
        .map_err(|e| Error::num(format!("SVD failed to converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    Ok(Svd {
        values: order.iter().map(|&i| s[i]).collect(),
        left: order.iter().map(|&i| (0..u.nrows()).map(|r| u[(r, i)]).collect()).collect(),
        right: order.iter().map(|&i| (0..v.nrows()).map(|r| v[(r, i)]).collect()).collect(),
    })
}

pub fn mat_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn mat_t_vec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * v[i]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
