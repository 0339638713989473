//! Coefficient surface `beta(s, t) = sum_k sum_l (sigma_kl / lambda_l) Psi_l(s) Phi_k(t)`,
//! truncation selection and response prediction.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::autocov::EigenSystem;
use crate::crosscov::SingularSystem;
use crate::data::{pair_by_id, LongitudinalSample};
use crate::error::{Error, Result};
use crate::func::{Curve, Surface};
use crate::kernel::Domain;
use crate::mean::{FittedFunction, MeanProblem};
use crate::quadrature::QuadratureRule;

/// Eigenvalues below this fraction of the leading one are not divided by.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// `int int Psi_l(s) C(s, t) Phi_k(t) ds dt` by tensor quadrature.
pub fn sigma_kl(crosscov: &impl Surface, psi_l: &impl Curve, phi_k: &impl Curve, rule: &QuadratureRule) -> f64 {
    sigma_matrix(crosscov, std::slice::from_ref(psi_l), std::slice::from_ref(phi_k), rule)[0][0]
}

/// `out[k][l] = sigma_kl` for every response function `phis[k]` and
/// predictor function `psis[l]`.
pub fn sigma_matrix<F: Curve, G: Curve>(
    crosscov: &impl Surface,
    psis: &[F],
    phis: &[G],
    rule: &QuadratureRule,
) -> Vec<Vec<f64>> {
    let (ds, dt) = crosscov.domains();
    let (sn, sw) = rule.on_domain(&ds);
    let (tn, tw) = rule.on_domain(&dt);
    let c = crosscov.grid(&sn, &tn);
    let psi_w: Vec<Vec<f64>> = psis
        .iter()
        .map(|f| f.values(&sn).iter().zip(&sw).map(|(v, w)| v * w).collect())
        .collect();
    phis.iter()
        .map(|phi| {
            let phi_w: Vec<f64> = phi.values(&tn).iter().zip(&tw).map(|(v, w)| v * w).collect();
            let ct: Vec<f64> = (0..sn.len())
                .map(|i| (0..tn.len()).map(|j| c[(i, j)] * phi_w[j]).sum())
                .collect();
            psi_w.iter().map(|p| crate::linalg::dot(p, &ct)).collect()
        })
        .collect()
}

/// A finite separable expansion `sum_k sum_l weights[k][l] x_l(s) y_k(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSurface<F = FittedFunction> {
    /// `J1 x J2`, row `k` for the response function, column `l` for the predictor one.
    pub weights: Vec<Vec<f64>>,
    pub x_functions: Vec<F>,
    pub y_functions: Vec<F>,
    pub domain_s: Domain,
    pub domain_t: Domain,
}

impl<F: Curve + Clone> CoefficientSurface<F> {
    pub fn j1(&self) -> usize {
        self.y_functions.len()
    }

    pub fn j2(&self) -> usize {
        self.x_functions.len()
    }

    pub fn evaluate(&self, s: f64, t: f64) -> Result<f64> {
        if !self.domain_s.contains(s) || !self.domain_t.contains(t) {
            return Err(Error::arg(format!("({s}, {t}) lies outside the surface domain")));
        }
        Ok(self.value(s, t))
    }

    pub fn truncated(&self, j1: usize, j2: usize) -> Self {
        let (j1, j2) = (j1.min(self.j1()), j2.min(self.j2()));
        CoefficientSurface {
            weights: self.weights[..j1].iter().map(|r| r[..j2].to_vec()).collect(),
            x_functions: self.x_functions[..j2].to_vec(),
            y_functions: self.y_functions[..j1].to_vec(),
            domain_s: self.domain_s,
            domain_t: self.domain_t,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().flatten().for_each(|w| *w *= c);
        out
    }

    /// `sum_k y_k(t) sum_l weights[k][l] z_l` for predictor scores `z`.
    pub fn apply_scores(&self, scores: &[f64], t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; t.len()];
        for (k, y) in self.y_functions.iter().enumerate() {
            let g: f64 = self.weights[k].iter().zip(scores).map(|(w, z)| w * z).sum();
            if g != 0.0 {
                for (o, v) in out.iter_mut().zip(y.values(t)) {
                    *o += g * v;
                }
            }
        }
        out
    }
}

impl<F: Curve + Clone> Surface for CoefficientSurface<F> {
    fn value(&self, s: f64, t: f64) -> f64 {
        let xs: Vec<f64> = self.x_functions.iter().map(|f| f.value(s)).collect();
        self.y_functions
            .iter()
            .zip(&self.weights)
            .map(|(y, row)| y.value(t) * row.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>())
            .sum()
    }

    fn domains(&self) -> (Domain, Domain) {
        (self.domain_s, self.domain_t)
    }

    fn grid(&self, s: &[f64], t: &[f64]) -> Mat<f64> {
        let xv: Vec<Vec<f64>> = self.x_functions.iter().map(|f| f.values(s)).collect();
        let yv: Vec<Vec<f64>> = self.y_functions.iter().map(|f| f.values(t)).collect();
        let mut out = Mat::zeros(s.len(), t.len());
        for (k, row) in self.weights.iter().enumerate() {
            let g: Vec<f64> = (0..s.len())
                .map(|i| row.iter().zip(&xv).map(|(w, x)| w * x[i]).sum())
                .collect();
            for i in 0..s.len() {
                for j in 0..t.len() {
                    out[(i, j)] += g[i] * yv[k][j];
                }
            }
        }
        out
    }
}

fn check_floor<F>(eigen_x: &EigenSystem<F>, j2: usize) -> Result<()> {
    let top = eigen_x.values.first().copied().unwrap_or(0.0);
    let floor = EIGEN_FLOOR * top;
    for l in 0..j2 {
        let v = eigen_x.values[l];
        if !(v > floor) || !(top > 0.0) {
            return Err(Error::Truncation {
                index: l + 1,
                value: v,
                floor,
            });
        }
    }
    Ok(())
}

/// Divides precomputed `sigma[k][l]` by the predictor eigenvalues.
pub fn assemble_from_sigma<F: Curve + Clone>(
    eigen_x: &EigenSystem<F>,
    eigen_y: &EigenSystem<F>,
    sigma: &[Vec<f64>],
    j1: usize,
    j2: usize,
) -> Result<CoefficientSurface<F>> {
    if j1 > eigen_y.len() || j2 > eigen_x.len() {
        return Err(Error::arg(format!(
            "truncation ({j1}, {j2}) exceeds available eigenfunctions ({}, {})",
            eigen_y.len(),
            eigen_x.len()
        )));
    }
    if sigma.len() < j1 || sigma.iter().take(j1).any(|r| r.len() < j2) {
        return Err(Error::arg("sigma table smaller than the truncation"));
    }
    check_floor(eigen_x, j2)?;
    let domain_s = eigen_x.functions.first().map_or(Domain::UNIT, |f| f.domain());
    let domain_t = eigen_y.functions.first().map_or(Domain::UNIT, |f| f.domain());
    Ok(CoefficientSurface {
        weights: (0..j1)
            .map(|k| (0..j2).map(|l| sigma[k][l] / eigen_x.values[l]).collect())
            .collect(),
        x_functions: eigen_x.functions[..j2].to_vec(),
        y_functions: eigen_y.functions[..j1].to_vec(),
        domain_s,
        domain_t,
    })
}

pub fn assemble_beta<F: Curve + Clone>(
    eigen_x: &EigenSystem<F>,
    eigen_y: &EigenSystem<F>,
    crosscov: &impl Surface,
    j1: usize,
    j2: usize,
    rule: &QuadratureRule,
) -> Result<CoefficientSurface<F>> {
    if j1 > eigen_y.len() || j2 > eigen_x.len() {
        return assemble_from_sigma(eigen_x, eigen_y, &[], j1, j2);
    }
    let sigma = sigma_matrix(crosscov, &eigen_x.functions[..j2], &eigen_y.functions[..j1], rule);
    assemble_from_sigma(eigen_x, eigen_y, &sigma, j1, j2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Fve,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "fve" => Ok(Criterion::Fve),
            _ => Err(Error::arg(format!("unknown criterion {s:?}"))),
        }
    }
}

/// Cumulative singular-value share used by [`Criterion::Fve`].
pub const FVE_LEVEL: f64 = 0.99;

/// Everything the truncation criteria need from a fitted model.
pub struct TruncationInputs<'a> {
    pub x: &'a [LongitudinalSample],
    pub y: &'a [LongitudinalSample],
    pub mu_x: &'a FittedFunction,
    pub mu_y: &'a FittedFunction,
    pub eigen_x: &'a EigenSystem,
    pub eigen_y: &'a EigenSystem,
    /// `sigma[k][l]` covering at least the candidate grid.
    pub sigma: &'a [Vec<f64>],
    pub singular: &'a SingularSystem,
    /// Penalty of the per-subject predictor smoother.
    pub smoother_lambda: f64,
    pub rule: &'a QuadratureRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationChoice {
    pub j1: usize,
    pub j2: usize,
    pub criterion: Criterion,
    /// Criterion value per `(J1, J2)`, row `J1 - 1`; empty for FVE.
    pub table: Vec<Vec<f64>>,
}

/// Largest usable `(J1, J2)` under `j_max`, the available eigenfunctions and
/// the eigenvalue floor.
pub fn truncation_limits<F>(eigen_x: &EigenSystem<F>, eigen_y: &EigenSystem<F>, j_max: usize) -> (usize, usize) {
    let top = eigen_x.values.first().copied().unwrap_or(0.0);
    let usable_x = eigen_x.values.iter().take_while(|&&v| v > EIGEN_FLOOR * top).count();
    (j_max.min(eigen_y.len()), j_max.min(usable_x))
}

/// Picks `(J1, J2)` on `1..=J_max` squared.
///
/// AIC and BIC use the pseudo-likelihood `N log(RSS / N)` plus `2 J1 J2` or
/// `log(N) J1 J2`, where RSS is the in-sample prediction error of the
/// response observations. FVE takes the smallest count whose singular values
/// reach 99% of their total, capped per side. Ties go to the smaller pair.
pub fn select_truncation(inputs: &TruncationInputs, j_max: usize, criterion: Criterion) -> Result<TruncationChoice> {
    if j_max == 0 {
        return Err(Error::arg("J_max must be at least 1"));
    }
    let (l1, l2) = truncation_limits(inputs.eigen_x, inputs.eigen_y, j_max);
    if l1 == 0 || l2 == 0 {
        return Err(Error::num(format!(
            "no usable eigenfunctions for truncation (response {l1}, predictor {l2})"
        )));
    }
    if criterion == Criterion::Fve {
        let j = inputs.singular.count_for_fve(FVE_LEVEL).max(1);
        return Ok(TruncationChoice {
            j1: j.min(l1),
            j2: j.min(l2),
            criterion,
            table: Vec::new(),
        });
    }
    let rss = rss_table(inputs, l1, l2)?;
    let n_obs: usize = inputs.y.iter().map(|s| s.len()).sum();
    let n = n_obs as f64;
    let pen = if criterion == Criterion::Aic { 2.0 } else { n.ln() };
    let table: Vec<Vec<f64>> = rss
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(b, r)| n * (r.max(f64::MIN_POSITIVE) / n).ln() + pen * ((a + 1) * (b + 1)) as f64)
                .collect()
        })
        .collect();
    let (mut j1, mut j2) = (1, 1);
    for a in 0..l1 {
        for b in 0..l2 {
            if table[a][b] < table[j1 - 1][j2 - 1] {
                j1 = a + 1;
                j2 = b + 1;
            }
        }
    }
    Ok(TruncationChoice { j1, j2, criterion, table })
}

/// `rss[J1 - 1][J2 - 1]` of the response observations.
pub fn rss_table(inputs: &TruncationInputs, l1: usize, l2: usize) -> Result<Vec<Vec<f64>>> {
    let paired = pair_by_id(inputs.x, inputs.y)?;
    let psis = &inputs.eigen_x.functions[..l2];
    let phis = &inputs.eigen_y.functions[..l1];
    let mut rss = vec![vec![0.0; l2]; l1];
    for (xs, ys) in paired {
        let dev = smooth_deviation(xs, inputs.mu_x, inputs.smoother_lambda)?;
        let z = predictor_scores(&dev, psis, inputs.rule);
        let resid: Vec<f64> = ys
            .values
            .iter()
            .zip(inputs.mu_y.values(&ys.times))
            .map(|(v, m)| v - m)
            .collect();
        let phi_t: Vec<Vec<f64>> = phis.iter().map(|f| f.values(&ys.times)).collect();
        for b in 0..l2 {
            // g_k = sum_{l <= b} (sigma_kl / lambda_l) z_l
            let g: Vec<f64> = (0..l1)
                .map(|k| (0..=b).map(|l| inputs.sigma[k][l] / inputs.eigen_x.values[l] * z[l]).sum())
                .collect();
            let mut pred = vec![0.0; resid.len()];
            for a in 0..l1 {
                for (p, v) in pred.iter_mut().zip(&phi_t[a]) {
                    *p += g[a] * v;
                }
                rss[a][b] += resid.iter().zip(&pred).map(|(r, p)| (r - p).powi(2)).sum::<f64>();
            }
        }
    }
    Ok(rss)
}

/// Smooth of `U - mu_X(S)` for one subject using the mean-fit representer.
pub fn smooth_deviation(sample: &LongitudinalSample, mu_x: &FittedFunction, lambda: f64) -> Result<FittedFunction> {
    if sample.is_empty() {
        return Err(Error::arg(format!("subject {} has no predictor observations", sample.subject_id)));
    }
    let dev = LongitudinalSample::new(
        sample.subject_id.clone(),
        sample.times.clone(),
        sample
            .values
            .iter()
            .zip(mu_x.values(&sample.times))
            .map(|(u, m)| u - m)
            .collect(),
    )?;
    MeanProblem::new(std::slice::from_ref(&dev), &mu_x.spec)?.fit(lambda)
}

/// `int dev(s) psi_l(s) ds` for each predictor function.
pub fn predictor_scores<F: Curve>(dev: &impl Curve, psis: &[F], rule: &QuadratureRule) -> Vec<f64> {
    let (nodes, w) = rule.on_domain(&dev.domain());
    let d: Vec<f64> = dev.values(&nodes).iter().zip(&w).map(|(a, b)| a * b).collect();
    psis.iter().map(|p| crate::linalg::dot(&d, &p.values(&nodes))).collect()
}

/// `mu_Y(t) + int dev(s) beta(s, t) ds` on `t_grid`, for a predictor deviation
/// already smoothed.
pub fn predict_from_deviation<F: Curve + Clone>(
    beta: &CoefficientSurface<F>,
    mu_y: &impl Curve,
    dev: &impl Curve,
    t_grid: &[f64],
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::arg("empty prediction grid"));
    }
    let domain = mu_y.domain();
    if let Some(t) = t_grid.iter().find(|t| !domain.contains(**t)) {
        return Err(Error::arg(format!(
            "prediction time {t} outside the response domain [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    let z = predictor_scores(dev, &beta.x_functions, rule);
    let mut out = mu_y.values(t_grid);
    for (o, v) in out.iter_mut().zip(beta.apply_scores(&z, t_grid)) {
        *o += v;
    }
    Ok(out)
}
