//! Kernel Gram matrices and their integral counterparts.

use faer::Mat;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::symmetrize;
use crate::quadrature::QuadratureRule;

/// Kernel evaluations and cross-integral matrices over pooled anchor points.
///
/// `p[(a, b)] = int K(s, S_a) K(s, S_b) ds` and likewise `q` on the response
/// side; both are computed by quadrature on the kernel's domain.
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub k_s: Mat<f64>,
    pub k_t: Mat<f64>,
    pub p: Mat<f64>,
    pub q: Mat<f64>,
}

pub fn gram_bundle(
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    s_points: &[f64],
    t_points: &[f64],
    rule: &QuadratureRule,
) -> Result<GramBundle> {
    if s_points.is_empty() || t_points.is_empty() {
        return Err(Error::arg("Gram bundle needs at least one point on each side"));
    }
    for &s in s_points {
        spec_x.check_time(s)?;
    }
    for &t in t_points {
        spec_y.check_time(t)?;
    }
    Ok(GramBundle {
        k_s: kernel_matrix(spec_x, s_points, s_points),
        k_t: kernel_matrix(spec_y, t_points, t_points),
        p: integral_matrix(spec_x, s_points, rule),
        q: integral_matrix(spec_y, t_points, rule),
    })
}

/// `K(a_i, b_j)`; callers guarantee the points lie in the domain.
pub fn kernel_matrix(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Mat<f64> {
    let au: Vec<f64> = a.iter().map(|&v| spec.domain.to_unit_unchecked(v)).collect();
    let bu: Vec<f64> = b.iter().map(|&v| spec.domain.to_unit_unchecked(v)).collect();
    Mat::from_fn(a.len(), b.len(), |i, j| spec.eval_unit(au[i], bu[j]))
}

/// Kernel sections at the quadrature nodes (`nodes x points`) plus the
/// domain-scaled weights.
pub fn node_matrix(spec: &KernelSpec, rule: &QuadratureRule, points: &[f64]) -> (Mat<f64>, Vec<f64>) {
    let (nodes, weights) = rule.on_domain(&spec.domain);
    (kernel_matrix(spec, &nodes, points), weights)
}

/// `diag(sqrt w) E` with `E` from [`node_matrix`], so that the integral
/// matrix equals `B^T B`.
pub fn root_matrix(spec: &KernelSpec, rule: &QuadratureRule, points: &[f64]) -> Mat<f64> {
    let (e, w) = node_matrix(spec, rule, points);
    Mat::from_fn(e.nrows(), e.ncols(), |q, j| w[q].sqrt() * e[(q, j)])
}

/// Symmetric `int K(s, a_i) K(s, a_j) ds` over the domain.
pub fn integral_matrix(spec: &KernelSpec, points: &[f64], rule: &QuadratureRule) -> Mat<f64> {
    let (e, w) = node_matrix(spec, rule, points);
    let ew = Mat::from_fn(e.nrows(), e.ncols(), |q, j| w[q] * e[(q, j)]);
    let mut p = e.transpose() * &ew;
    symmetrize(&mut p);
    p
}

/// `int K(s, a_i) K(s, b_j) ds` for two different anchor sets.
pub fn cross_integral_matrix(
    spec: &KernelSpec,
    a: &[f64],
    b: &[f64],
    rule: &QuadratureRule,
) -> Mat<f64> {
    let (ea, w) = node_matrix(spec, rule, a);
    let (eb, _) = node_matrix(spec, rule, b);
    let ebw = Mat::from_fn(eb.nrows(), eb.ncols(), |q, j| w[q] * eb[(q, j)]);
    ea.transpose() * &ebw
}
