//! Shared linear algebra for penalized covariance surfaces.
//!
//! Each observed pair `p = (i, j, k)` carries a centered product `c_p` and a
//! subject weight `w_i / n`. The representer solution solves
//! `(G + lambda diag(n / w_i)) a = c` with `G_pq = K_s(s_p, s_q) K_t(t_p, t_q)`.
//! In the symmetric case only pairs `j < k` are kept and the kernel is
//! symmetrized, `G_pq = K(s_p, s_q) K(t_p, t_q) + K(s_p, t_q) K(t_p, s_q)`,
//! which is the same system restricted to coefficients with `a_jk = a_kj`.

use std::ops::Range;

use faer::Mat;

use crate::error::Result;
use crate::linalg::{mat_vec, solve_shifted, ShiftedEig};
use crate::tuning::CvObjective;

pub(crate) struct PairDesign {
    /// Kernel over pooled first-argument points.
    pub ks: Mat<f64>,
    /// Kernel over pooled second-argument points; `None` in the symmetric case.
    pub kt: Option<Mat<f64>>,
    pub pairs: Vec<(usize, usize)>,
    /// Pair ranges per subject, possibly empty.
    pub subject_pairs: Vec<Range<usize>>,
    pub products: Vec<f64>,
    /// Per-subject weight before division by the number of subjects.
    pub base_weight: Vec<f64>,
}

impl PairDesign {
    pub fn symmetric(&self) -> bool {
        self.kt.is_none()
    }

    /// Ordered pairs represented by each stored pair.
    pub fn multiplicity(&self) -> f64 {
        if self.symmetric() {
            2.0
        } else {
            1.0
        }
    }

    /// Subjects that contribute at least one pair.
    pub fn active_subjects(&self) -> Vec<usize> {
        (0..self.subject_pairs.len())
            .filter(|&i| !self.subject_pairs[i].is_empty())
            .collect()
    }

    pub fn kernel(&self, p: usize, q: usize) -> f64 {
        let (ps, pt) = self.pairs[p];
        let (qs, qt) = self.pairs[q];
        match &self.kt {
            Some(kt) => self.ks[(ps, qs)] * kt[(pt, qt)],
            None => self.ks[(ps, qs)] * self.ks[(pt, qt)] + self.ks[(ps, qt)] * self.ks[(pt, qs)],
        }
    }

    pub fn gram(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self.kernel(rows[i], cols[j]))
    }

    pub fn pairs_of(&self, subjects: &[usize]) -> Vec<usize> {
        subjects
            .iter()
            .flat_map(|&i| self.subject_pairs[i].clone())
            .collect()
    }

    /// Per-pair shift `n / w_i` for the given subjects.
    fn shifts(&self, subjects: &[usize]) -> Vec<f64> {
        let n = subjects.len() as f64;
        subjects
            .iter()
            .flat_map(|&i| {
                let len = self.subject_pairs[i].len();
                std::iter::repeat(n / self.base_weight[i]).take(len)
            })
            .collect()
    }

    /// Coefficients over all pairs of `subjects`, in subject order.
    pub fn fit(&self, subjects: &[usize], lambda: f64) -> Result<Vec<f64>> {
        let idx = self.pairs_of(subjects);
        let g = self.gram(&idx, &idx);
        let d: Vec<f64> = self.shifts(subjects).into_iter().map(|v| v * lambda).collect();
        let rhs: Vec<f64> = idx.iter().map(|&p| self.products[p]).collect();
        solve_shifted(&g, &d, &rhs)
    }

    /// Weighted loss over `subjects` of predictions aligned with their pairs.
    pub fn loss(&self, subjects: &[usize], fitted: &[f64]) -> f64 {
        let n = subjects.len() as f64;
        let mut off = 0;
        let mut total = 0.0;
        for &i in subjects {
            let r = self.subject_pairs[i].clone();
            let len = r.len();
            let sse: f64 = r
                .zip(&fitted[off..off + len])
                .map(|(p, f)| (self.products[p] - f).powi(2))
                .sum();
            total += self.base_weight[i] / n * sse;
            off += len;
        }
        self.multiplicity() * total
    }

    /// Loss plus `lambda ||C||^2` for coefficients over all active subjects.
    pub fn objective(&self, coeffs: &[f64], lambda: f64) -> f64 {
        let subjects = self.active_subjects();
        let idx = self.pairs_of(&subjects);
        let fitted = mat_vec(&self.gram(&idx, &idx), coeffs);
        let penalty = crate::linalg::dot(coeffs, &fitted);
        self.loss(&subjects, &fitted) + self.multiplicity() * lambda * penalty
    }
}

impl CvObjective for PairDesign {
    fn n_subjects(&self) -> usize {
        self.subject_pairs.len()
    }

    fn heldout_losses(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Result<Vec<f64>> {
        let train: Vec<usize> = train.iter().copied().filter(|&i| !self.subject_pairs[i].is_empty()).collect();
        let test: Vec<usize> = test.iter().copied().filter(|&i| !self.subject_pairs[i].is_empty()).collect();
        if train.is_empty() || test.is_empty() {
            return Ok(vec![f64::INFINITY; grid.len()]);
        }
        let tr = self.pairs_of(&train);
        let te = self.pairs_of(&test);
        let solver = ShiftedEig::new(&self.gram(&tr, &tr), &self.shifts(&train))?;
        let cross = self.gram(&te, &tr);
        let rhs: Vec<f64> = tr.iter().map(|&p| self.products[p]).collect();
        let proj = solver.project(&rhs);
        grid.iter()
            .map(|&lam| {
                let a = solver.solve_projected(&proj, lam)?;
                Ok(self.loss(&test, &mat_vec(&cross, &a)))
            })
            .collect()
    }
}
