//! Kernel-expansion surfaces built from per-subject coefficient blocks.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::Surface;
use crate::gram::kernel_matrix;
use crate::kernel::{Domain, KernelSpec};

/// Coefficients of one subject: a row-major `s_len x t_len` block whose rows
/// index `s_anchors[s_start..]` and columns `t_anchors[t_start..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefBlock {
    pub s_start: usize,
    pub s_len: usize,
    pub t_start: usize,
    pub t_len: usize,
    pub coeffs: Vec<f64>,
}

impl CoefBlock {
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.coeffs[j * self.t_len + k]
    }
}

/// `C(s, t) = sum_blocks sum_{j,k} a_jk K_s(s, s_j) K_t(t, t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSurface {
    pub s_anchors: Vec<f64>,
    pub t_anchors: Vec<f64>,
    pub blocks: Vec<CoefBlock>,
    pub spec_s: KernelSpec,
    pub spec_t: KernelSpec,
}

impl BlockSurface {
    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            if b.s_start + b.s_len > self.s_anchors.len()
                || b.t_start + b.t_len > self.t_anchors.len()
                || b.coeffs.len() != b.s_len * b.t_len
            {
                return Err(Error::input("coefficient block does not fit its anchors"));
            }
            if b.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::input("non-finite surface coefficient"));
            }
        }
        for &s in &self.s_anchors {
            self.spec_s.check_time(s)?;
        }
        for &t in &self.t_anchors {
            self.spec_t.check_time(t)?;
        }
        Ok(())
    }

    pub fn evaluate(&self, s: f64, t: f64) -> Result<f64> {
        self.spec_s.check_time(s)?;
        self.spec_t.check_time(t)?;
        Ok(self.value(s, t))
    }

    /// All coefficients, block by block in row-major order.
    pub fn coefficients(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.coeffs.iter().copied()).collect()
    }

    /// Dense `N_s x N_t` coefficient matrix.
    pub fn dense(&self) -> Mat<f64> {
        let mut a = Mat::zeros(self.s_anchors.len(), self.t_anchors.len());
        for b in &self.blocks {
            for j in 0..b.s_len {
                for k in 0..b.t_len {
                    a[(b.s_start + j, b.t_start + k)] += b.get(j, k);
                }
            }
        }
        a
    }

    /// The same surface with arguments swapped.
    pub fn transposed(&self) -> BlockSurface {
        BlockSurface {
            s_anchors: self.t_anchors.clone(),
            t_anchors: self.s_anchors.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| CoefBlock {
                    s_start: b.t_start,
                    s_len: b.t_len,
                    t_start: b.s_start,
                    t_len: b.s_len,
                    coeffs: (0..b.t_len)
                        .flat_map(|k| (0..b.s_len).map(move |j| b.get(j, k)))
                        .collect(),
                })
                .collect(),
            spec_s: self.spec_t,
            spec_t: self.spec_s,
        }
    }
}

impl Surface for BlockSurface {
    fn value(&self, s: f64, t: f64) -> f64 {
        let ks: Vec<f64> = self.s_anchors.iter().map(|&a| self.spec_s.eval_unchecked(s, a)).collect();
        let kt: Vec<f64> = self.t_anchors.iter().map(|&a| self.spec_t.eval_unchecked(t, a)).collect();
        let mut total = 0.0;
        for b in &self.blocks {
            for j in 0..b.s_len {
                let row = &b.coeffs[j * b.t_len..(j + 1) * b.t_len];
                let inner: f64 = row.iter().zip(&kt[b.t_start..b.t_start + b.t_len]).map(|(a, k)| a * k).sum();
                total += ks[b.s_start + j] * inner;
            }
        }
        total
    }

    fn domains(&self) -> (Domain, Domain) {
        (self.spec_s.domain, self.spec_t.domain)
    }

    fn grid(&self, s: &[f64], t: &[f64]) -> Mat<f64> {
        let ks = kernel_matrix(&self.spec_s, s, &self.s_anchors);
        let kt = kernel_matrix(&self.spec_t, t, &self.t_anchors);
        let left = &ks * &self.dense();
        &left * kt.transpose()
    }
}

/// `C(s, t) = k_s(s)^T M k_t(t)` with a dense coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSurface {
    pub s_anchors: Vec<f64>,
    pub t_anchors: Vec<f64>,
    pub coeffs: Mat<f64>,
    pub spec_s: KernelSpec,
    pub spec_t: KernelSpec,
}

impl Surface for BilinearSurface {
    fn value(&self, s: f64, t: f64) -> f64 {
        let ks: Vec<f64> = self.s_anchors.iter().map(|&a| self.spec_s.eval_unchecked(s, a)).collect();
        let kt: Vec<f64> = self.t_anchors.iter().map(|&a| self.spec_t.eval_unchecked(t, a)).collect();
        let mt = crate::linalg::mat_vec(&self.coeffs, &kt);
        crate::linalg::dot(&ks, &mt)
    }

    fn domains(&self) -> (Domain, Domain) {
        (self.spec_s.domain, self.spec_t.domain)
    }

    fn grid(&self, s: &[f64], t: &[f64]) -> Mat<f64> {
        let ks = kernel_matrix(&self.spec_s, s, &self.s_anchors);
        let kt = kernel_matrix(&self.spec_t, t, &self.t_anchors);
        let left = &ks * &self.coeffs;
        &left * kt.transpose()
    }
}
