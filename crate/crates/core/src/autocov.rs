//! Regularized auto-covariance surfaces and their eigen-decomposition.
//!
//! Products `(U_ij - mu(S_ij)) (U_ik - mu(S_ik))` with `j != k` are fitted with
//! subject weights `1/(n m_i (m_i - 1))`; diagonal products carry measurement
//! noise and are left out.

use serde::{Deserialize, Serialize};

use crate::data::{pool_times, validate_samples, LongitudinalSample};
use crate::error::{Error, Result};
use crate::func::{Curve, Surface};
use crate::gram::{kernel_matrix, node_matrix, root_matrix};
use crate::kernel::{Domain, KernelSpec};
use crate::linalg::{dot, mat_vec, sym_eig, RangeFactor};
use crate::mean::FittedFunction;
use crate::pairs::PairDesign;
use crate::quadrature::QuadratureRule;
use crate::surface::{BlockSurface, CoefBlock};
use crate::tuning::{crossval_lambda, CvOutcome, CvPlan};

/// A symmetric covariance surface with per-subject symmetric blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSymSurface {
    pub surface: BlockSurface,
}

impl FittedSymSurface {
    pub fn evaluate(&self, s: f64, t: f64) -> Result<f64> {
        self.surface.evaluate(s, t)
    }

    /// Upper-triangular coefficients, in fitting order.
    pub fn pair_coefficients(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in &self.surface.blocks {
            for j in 0..b.s_len {
                for k in j + 1..b.s_len {
                    out.push(b.get(j, k));
                }
            }
        }
        out
    }

    pub fn spec(&self) -> KernelSpec {
        self.surface.spec_s
    }

    pub fn anchors(&self) -> &[f64] {
        &self.surface.s_anchors
    }
}

impl Surface for FittedSymSurface {
    fn value(&self, s: f64, t: f64) -> f64 {
        self.surface.value(s, t)
    }
    fn domains(&self) -> (Domain, Domain) {
        self.surface.domains()
    }
    fn grid(&self, s: &[f64], t: &[f64]) -> faer::Mat<f64> {
        self.surface.grid(s, t)
    }
}

/// Centered within-subject products and their Gram structure.
pub struct AutoCovProblem {
    design: PairDesign,
    anchors: Vec<f64>,
    ranges: Vec<std::ops::Range<usize>>,
    spec: KernelSpec,
}

impl AutoCovProblem {
    pub fn new(samples: &[LongitudinalSample], mu: &impl Curve, spec: &KernelSpec) -> Result<Self> {
        validate_samples(samples, spec)?;
        let (anchors, ranges) = pool_times(samples);
        let centered: Vec<f64> = samples
            .iter()
            .flat_map(|s| {
                let m = mu.values(&s.times);
                s.values.iter().zip(m).map(|(u, v)| u - v).collect::<Vec<_>>()
            })
            .collect();
        let mut pairs = Vec::new();
        let mut products = Vec::new();
        let mut subject_pairs = Vec::with_capacity(samples.len());
        let mut base_weight = Vec::with_capacity(samples.len());
        for r in &ranges {
            let start = pairs.len();
            for j in r.clone() {
                for k in j + 1..r.end {
                    pairs.push((j, k));
                    products.push(centered[j] * centered[k]);
                }
            }
            subject_pairs.push(start..pairs.len());
            let m = r.len() as f64;
            base_weight.push(if r.len() > 1 { 1.0 / (m * (m - 1.0)) } else { 0.0 });
        }
        if pairs.is_empty() {
            return Err(Error::arg("auto-covariance needs a subject with at least two observations"));
        }
        let ks = kernel_matrix(spec, &anchors, &anchors);
        Ok(AutoCovProblem {
            design: PairDesign {
                ks,
                kt: None,
                pairs,
                subject_pairs,
                products,
                base_weight,
            },
            anchors,
            ranges,
            spec: *spec,
        })
    }

    pub fn products(&self) -> &[f64] {
        &self.design.products
    }

    pub fn fit(&self, lambda: f64) -> Result<FittedSymSurface> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let coeffs = self.design.fit(&self.design.active_subjects(), lambda)?;
        Ok(self.surface_from(&coeffs))
    }

    fn surface_from(&self, coeffs: &[f64]) -> FittedSymSurface {
        let blocks = self
            .ranges
            .iter()
            .zip(&self.design.subject_pairs)
            .filter(|(_, p)| !p.is_empty())
            .map(|(r, p)| {
                let m = r.len();
                let mut c = vec![0.0; m * m];
                let mut it = coeffs[p.clone()].iter();
                for j in 0..m {
                    for k in j + 1..m {
                        let v = *it.next().expect("pair count matches block");
                        c[j * m + k] = v;
                        c[k * m + j] = v;
                    }
                }
                CoefBlock {
                    s_start: r.start,
                    s_len: m,
                    t_start: r.start,
                    t_len: m,
                    coeffs: c,
                }
            })
            .collect();
        FittedSymSurface {
            surface: BlockSurface {
                s_anchors: self.anchors.clone(),
                t_anchors: self.anchors.clone(),
                blocks,
                spec_s: self.spec,
                spec_t: self.spec,
            },
        }
    }

    /// Weighted loss plus `lambda ||C||^2` over ordered off-diagonal pairs.
    pub fn objective(&self, surface: &FittedSymSurface, lambda: f64) -> f64 {
        self.design.objective(&surface.pair_coefficients(), lambda)
    }

    pub fn crossval(&self, plan: &CvPlan) -> Result<CvOutcome> {
        crossval_lambda(&self.design, plan)
    }

    pub fn n_subjects(&self) -> usize {
        self.ranges.len()
    }
}

pub fn fit_autocov(
    samples: &[LongitudinalSample],
    mu: &impl Curve,
    spec: &KernelSpec,
    lambda: f64,
) -> Result<FittedSymSurface> {
    AutoCovProblem::new(samples, mu, spec)?.fit(lambda)
}

/// Leading eigenvalues and L2-orthonormal eigenfunctions of a covariance
/// operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem<F = FittedFunction> {
    pub values: Vec<f64>,
    pub functions: Vec<F>,
    /// Every eigenvalue of the discretized operator, clamped at zero.
    pub spectrum: Vec<f64>,
}

impl<F> EigenSystem<F> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<F: Clone> EigenSystem<F> {
    /// Share of the spectrum carried by the first `k` values.
    pub fn fve(&self, k: usize) -> f64 {
        let total: f64 = self.spectrum.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.spectrum.iter().take(k).sum::<f64>() / total
    }

    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        EigenSystem {
            values: self.values[..k].to_vec(),
            functions: self.functions[..k].to_vec(),
            spectrum: self.spectrum.clone(),
        }
    }
}

pub const EIGEN_FVE: f64 = 0.999;
pub const EIGEN_CAP: usize = 20;

/// Eigen-decomposition of the covariance operator of `surface`.
///
/// With `C(s, t) = k(s)^T B k(t)` and `P = int k k^T`, the eigenproblem reduces
/// to `P^{1/2} B P^{1/2} w = lambda w` and `Psi = k^T P^{+1/2} w`, where
/// `P^{+1/2}` drops the numerical null space of `P`. Without `k_max`, the
/// count is the smallest reaching 99.9% of the spectrum, at most 20.
/// Each eigenfunction is signed so that its integral is non-negative.
pub fn eigensystem(
    surface: &FittedSymSurface,
    rule: &QuadratureRule,
    k_max: Option<usize>,
) -> Result<EigenSystem> {
    let spec = surface.spec();
    let anchors = surface.anchors();
    let factor = RangeFactor::from_root(&root_matrix(&spec, rule, anchors))?;
    let half = factor.half_t();
    let b = surface.surface.dense();
    let m = &(&half * &b) * half.transpose();
    let eig = sym_eig(&m)?;
    let spectrum: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let positive = spectrum.iter().take_while(|&&v| v > 0.0).count();
    let k = match k_max {
        Some(k) => k.min(positive),
        None => {
            let total: f64 = spectrum.iter().sum();
            let mut acc = 0.0;
            let mut k = 0;
            while k < positive && k < EIGEN_CAP {
                acc += spectrum[k];
                k += 1;
                if acc >= EIGEN_FVE * total {
                    break;
                }
            }
            k
        }
    };
    let inv_half = factor.inv_half();
    let sections = section_integrals(&spec, anchors, rule);
    let mut functions = Vec::with_capacity(k);
    for c in 0..k {
        let w: Vec<f64> = (0..eig.vectors.nrows()).map(|i| eig.vectors[(i, c)]).collect();
        let mut alpha = mat_vec(&inv_half, &w);
        if dot(&alpha, &sections) < 0.0 {
            alpha.iter_mut().for_each(|a| *a = -*a);
        }
        functions.push(FittedFunction {
            anchors: anchors.to_vec(),
            coeffs: alpha,
            spec,
        });
    }
    Ok(EigenSystem {
        values: spectrum[..k].to_vec(),
        functions,
        spectrum,
    })
}

/// `int K(s, a_j) ds` for each anchor.
pub(crate) fn section_integrals(spec: &KernelSpec, anchors: &[f64], rule: &QuadratureRule) -> Vec<f64> {
    let (e, w) = node_matrix(spec, rule, anchors);
    (0..anchors.len())
        .map(|j| (0..w.len()).map(|q| w[q] * e[(q, j)]).sum())
        .collect()
}
