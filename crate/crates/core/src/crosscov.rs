//! Regularized cross-covariance between predictor and response processes and
//! its functional singular components.
//!
//! The estimate `C(s, t) = sum_i sum_{j1, j2} a_ij1j2 K(s, S_ij1) K(t, T_ij2)`
//! minimizes `sum_i 1/(n m1_i m2_i) sum_{j1, j2} (C_i - C(S_ij1, T_ij2))^2 +
//! lambda ||C||^2` where `C_i` are centered products. Stacking the
//! coefficients into the block-diagonal `A` (`N_S x N_T`) and writing
//! `P = int k_S k_S^T`, `Q = int k_T k_T^T`, the singular components come from
//! the eigenproblems of `P^{1/2} A Q A^T P^{1/2}` and `Q^{1/2} A^T P A Q^{1/2}`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::autocov::section_integrals;
use crate::data::{pair_by_id, pool_times, validate_samples, LongitudinalSample};
use crate::error::{Error, Result};
use crate::func::{Curve, Surface};
use crate::gram::{integral_matrix, kernel_matrix, root_matrix};
use crate::kernel::KernelSpec;
use crate::linalg::{dot, mat_vec, sym_eig, thin_svd, RangeFactor};
use crate::mean::FittedFunction;
use crate::pairs::PairDesign;
use crate::quadrature::QuadratureRule;
use crate::surface::{BilinearSurface, BlockSurface, CoefBlock};
use crate::tuning::{crossval_lambda, CvOutcome, CvPlan};

/// A fitted cross-covariance; first argument on the predictor domain.
pub type FittedSurface = BlockSurface;

/// Paired predictor/response data prepared for cross-covariance fitting.
pub struct CrossCovProblem {
    design: PairDesign,
    s_anchors: Vec<f64>,
    t_anchors: Vec<f64>,
    s_ranges: Vec<std::ops::Range<usize>>,
    t_ranges: Vec<std::ops::Range<usize>>,
    spec_x: KernelSpec,
    spec_y: KernelSpec,
}

impl CrossCovProblem {
    /// Subjects are matched by id; the predictor order is kept.
    pub fn new(
        x: &[LongitudinalSample],
        y: &[LongitudinalSample],
        mu_x: &impl Curve,
        mu_y: &impl Curve,
        spec_x: &KernelSpec,
        spec_y: &KernelSpec,
    ) -> Result<Self> {
        validate_samples(x, spec_x)?;
        validate_samples(y, spec_y)?;
        let paired = pair_by_id(x, y)?;
        let xs: Vec<LongitudinalSample> = paired.iter().map(|(a, _)| (*a).clone()).collect();
        let ys: Vec<LongitudinalSample> = paired.iter().map(|(_, b)| (*b).clone()).collect();
        let (s_anchors, s_ranges) = pool_times(&xs);
        let (t_anchors, t_ranges) = pool_times(&ys);
        let cx = centered(&xs, mu_x);
        let cy = centered(&ys, mu_y);
        let mut pairs = Vec::new();
        let mut products = Vec::new();
        let mut subject_pairs = Vec::with_capacity(xs.len());
        let mut base_weight = Vec::with_capacity(xs.len());
        for (rs, rt) in s_ranges.iter().zip(&t_ranges) {
            let start = pairs.len();
            for j in rs.clone() {
                for k in rt.clone() {
                    pairs.push((j, k));
                    products.push(cx[j] * cy[k]);
                }
            }
            subject_pairs.push(start..pairs.len());
            base_weight.push(1.0 / (rs.len() * rt.len()) as f64);
        }
        Ok(CrossCovProblem {
            design: PairDesign {
                ks: kernel_matrix(spec_x, &s_anchors, &s_anchors),
                kt: Some(kernel_matrix(spec_y, &t_anchors, &t_anchors)),
                pairs,
                subject_pairs,
                products,
                base_weight,
            },
            s_anchors,
            t_anchors,
            s_ranges,
            t_ranges,
            spec_x: *spec_x,
            spec_y: *spec_y,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.s_ranges.len()
    }

    /// Centered products, subject by subject, row-major within a subject.
    pub fn products(&self) -> &[f64] {
        &self.design.products
    }

    /// Observation times `(S, T)` of every product.
    pub fn product_points(&self) -> Vec<(f64, f64)> {
        self.design
            .pairs
            .iter()
            .map(|&(j, k)| (self.s_anchors[j], self.t_anchors[k]))
            .collect()
    }

    /// Weight `1/(n m1_i m2_i)` of every product.
    pub fn product_weights(&self) -> Vec<f64> {
        let n = self.n_subjects() as f64;
        let mut w = Vec::with_capacity(self.design.pairs.len());
        for (i, r) in self.design.subject_pairs.iter().enumerate() {
            w.extend(std::iter::repeat(self.design.base_weight[i] / n).take(r.len()));
        }
        w
    }

    pub fn fit(&self, lambda: f64) -> Result<FittedSurface> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let all: Vec<usize> = (0..self.n_subjects()).collect();
        let coeffs = self.design.fit(&all, lambda)?;
        Ok(self.surface_from(&coeffs))
    }

    pub fn surface_from(&self, coeffs: &[f64]) -> FittedSurface {
        let blocks = self
            .s_ranges
            .iter()
            .zip(&self.t_ranges)
            .zip(&self.design.subject_pairs)
            .map(|((rs, rt), p)| CoefBlock {
                s_start: rs.start,
                s_len: rs.len(),
                t_start: rt.start,
                t_len: rt.len(),
                coeffs: coeffs[p.clone()].to_vec(),
            })
            .collect();
        BlockSurface {
            s_anchors: self.s_anchors.clone(),
            t_anchors: self.t_anchors.clone(),
            blocks,
            spec_s: self.spec_x,
            spec_t: self.spec_y,
        }
    }

    /// `E(C)`: weighted loss plus `lambda ||C||^2`, from the coefficient vector.
    pub fn objective(&self, surface: &FittedSurface, lambda: f64) -> f64 {
        self.design.objective(&surface.coefficients(), lambda)
    }

    /// Weighted loss with the surface evaluated pointwise.
    pub fn training_loss(&self, surface: &impl Surface) -> f64 {
        let w = self.product_weights();
        self.product_points()
            .iter()
            .zip(self.products())
            .zip(&w)
            .map(|(((s, t), c), w)| w * (c - surface.value(*s, *t)).powi(2))
            .sum()
    }

    pub fn crossval(&self, plan: &CvPlan) -> Result<CvOutcome> {
        crossval_lambda(&self.design, plan)
    }
}

fn centered(samples: &[LongitudinalSample], mu: &impl Curve) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|s| {
            let m = mu.values(&s.times);
            s.values.iter().zip(m).map(|(u, v)| u - v).collect::<Vec<_>>()
        })
        .collect()
}

pub fn fit_crosscov(
    x: &[LongitudinalSample],
    y: &[LongitudinalSample],
    mu_x: &impl Curve,
    mu_y: &impl Curve,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    lambda: f64,
) -> Result<FittedSurface> {
    CrossCovProblem::new(x, y, mu_x, mu_y, spec_x, spec_y)?.fit(lambda)
}

/// `max_r |w_r (C_r - C(S_r, T_r)) - lambda a_r|` over all products, with the
/// surface evaluated pointwise. Zero at an exact minimizer.
pub fn stationarity_residual(surface: &FittedSurface, data: &CrossCovProblem, lambda: f64) -> f64 {
    let a = surface.coefficients();
    assert_eq!(a.len(), data.products().len(), "surface was not fitted to these data");
    let w = data.product_weights();
    data.product_points()
        .iter()
        .zip(data.products())
        .zip(&w)
        .zip(&a)
        .map(|((((s, t), c), w), a)| (w * (c - surface.value(*s, *t)) - lambda * a).abs())
        .fold(0.0, f64::max)
}

/// `A_XY(s, t) = int C(s, u) C(t, u) du` and `A_YX(s, t) = int C(u, s) C(u, t) du`.
pub fn a_hat_surfaces(surface: &FittedSurface, rule: &QuadratureRule) -> (BilinearSurface, BilinearSurface) {
    let a = surface.dense();
    let p = integral_matrix(&surface.spec_s, &surface.s_anchors, rule);
    let q = integral_matrix(&surface.spec_t, &surface.t_anchors, rule);
    let axy = &(&a * &q) * a.transpose();
    let ayx = &(a.transpose() * &p) * &a;
    (
        BilinearSurface {
            s_anchors: surface.s_anchors.clone(),
            t_anchors: surface.s_anchors.clone(),
            coeffs: axy,
            spec_s: surface.spec_s,
            spec_t: surface.spec_s,
        },
        BilinearSurface {
            s_anchors: surface.t_anchors.clone(),
            t_anchors: surface.t_anchors.clone(),
            coeffs: ayx,
            spec_s: surface.spec_t,
            spec_t: surface.spec_t,
        },
    )
}

/// Singular values `sigma_k^2` with predictor-side `psi_k` and response-side
/// `phi_k`, so that `C(s, t) ~ sum_k sigma_k psi_k(s) phi_k(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSystem {
    pub sigma_sq: Vec<f64>,
    pub psi: Vec<FittedFunction>,
    pub phi: Vec<FittedFunction>,
    /// Every eigenvalue of the reduced `A_XY` operator, clamped at zero.
    pub spectrum: Vec<f64>,
}

impl SingularSystem {
    pub fn len(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_sq.is_empty()
    }

    /// Smallest count whose share of the spectrum reaches `level`.
    pub fn count_for_fve(&self, level: f64) -> usize {
        let total: f64 = self.spectrum.iter().sum();
        if total <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (k, v) in self.spectrum.iter().enumerate() {
            acc += v;
            if acc >= level * total {
                return k + 1;
            }
        }
        self.spectrum.len()
    }
}

/// Relative cutoff below which singular values are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Closed-form singular components of a fitted cross-covariance.
///
/// With `X = P^{1/2} A Q^{1/2}` in the reduced coordinates of `P` and `Q` and
/// the thin SVD `X = W1 diag(sigma) W2^T`, `psi_k = k_S^T P^{+1/2} w1_k` and
/// `phi_k = k_T^T Q^{+1/2} w2_k`. `psi_k` is signed to have a non-negative integral.
/// Without `k_max` every component above the relative cutoff is returned.
pub fn singular_system(
    surface: &FittedSurface,
    rule: &QuadratureRule,
    k_max: Option<usize>,
) -> Result<SingularSystem> {
    let a = surface.dense();
    let fp = RangeFactor::from_root(&root_matrix(&surface.spec_s, rule, &surface.s_anchors))?;
    let fq = RangeFactor::from_root(&root_matrix(&surface.spec_t, rule, &surface.t_anchors))?;
    let x = &(&fp.half_t() * &a) * fq.half_t().transpose();
    let svd = thin_svd(&x)?;
    let spectrum: Vec<f64> = svd.values.iter().map(|v| v * v).collect();
    let top = spectrum.first().copied().unwrap_or(0.0);
    let mut k = spectrum.iter().take_while(|&&v| v > SINGULAR_TOL * top && v > 0.0).count();
    if let Some(cap) = k_max {
        k = k.min(cap);
    }
    let (pinv, qinv) = (fp.inv_half(), fq.inv_half());
    let sections = section_integrals(&surface.spec_s, &surface.s_anchors, rule);
    let mut psi = Vec::with_capacity(k);
    let mut phi = Vec::with_capacity(k);
    for c in 0..k {
        let mut alpha = mat_vec(&pinv, &svd.left[c]);
        let mut beta = mat_vec(&qinv, &svd.right[c]);
        if dot(&alpha, &sections) < 0.0 {
            alpha.iter_mut().for_each(|v| *v = -*v);
            beta.iter_mut().for_each(|v| *v = -*v);
        }
        psi.push(FittedFunction {
            anchors: surface.s_anchors.clone(),
            coeffs: alpha,
            spec: surface.spec_s,
        });
        phi.push(FittedFunction {
            anchors: surface.t_anchors.clone(),
            coeffs: beta,
            spec: surface.spec_t,
        });
    }
    Ok(SingularSystem {
        sigma_sq: spectrum[..k].to_vec(),
        psi,
        phi,
        spectrum,
    })
}

/// Eigenvalues (descending) of `P^{1/2} A Q A^T P^{1/2}` and of
/// `Q^{1/2} A^T P A Q^{1/2}`, each formed with full symmetric square roots.
pub fn singular_spectra(surface: &FittedSurface, rule: &QuadratureRule) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = surface.dense();
    let p = integral_matrix(&surface.spec_s, &surface.s_anchors, rule);
    let q = integral_matrix(&surface.spec_t, &surface.t_anchors, rule);
    let ph = sym_sqrt(&p)?;
    let qh = sym_sqrt(&q)?;
    let left = &(&(&(&ph * &a) * &q) * a.transpose()) * &ph;
    let right = &(&(&(&qh * a.transpose()) * &p) * &a) * &qh;
    Ok((sym_eig(&left)?.values, sym_eig(&right)?.values))
}

fn sym_sqrt(m: &Mat<f64>) -> Result<Mat<f64>> {
    let e = sym_eig(m)?;
    let n = m.nrows();
    let r = Mat::from_fn(n, n, |i, j| e.vectors[(i, j)] * e.values[j].max(0.0).sqrt());
    Ok(&r * e.vectors.transpose())
}
