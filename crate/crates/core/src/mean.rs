//! Regularized mean estimation from pooled sparse observations.
//!
//! The estimate minimizes
//! `sum_i 1/(n m_i) sum_j (U_ij - g(S_ij))^2 + lambda ||g||^2_H`
//! over the span of kernel sections at the pooled observation times, which
//! gives `(G + lambda diag(n m_i)) b = u`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{pool_times, validate_samples, LongitudinalSample};
use crate::error::{Error, Result};
use crate::func::Curve;
use crate::gram::kernel_matrix;
use crate::kernel::{Domain, KernelSpec};
use crate::linalg::{mat_vec, solve_shifted, ShiftedEig};
use crate::tuning::CvObjective;

/// `g(t) = sum_j coeffs[j] K(t, anchors[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFunction {
    pub anchors: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub spec: KernelSpec,
}

impl FittedFunction {
    pub fn new(anchors: Vec<f64>, coeffs: Vec<f64>, spec: KernelSpec) -> Result<Self> {
        if anchors.len() != coeffs.len() {
            return Err(Error::arg("anchors and coefficients differ in length"));
        }
        for &a in &anchors {
            spec.check_time(a)?;
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("non-finite coefficient"));
        }
        Ok(FittedFunction {
            anchors,
            coeffs,
            spec,
        })
    }

    pub fn zero(spec: KernelSpec) -> Self {
        FittedFunction {
            anchors: Vec::new(),
            coeffs: Vec::new(),
            spec,
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.spec.check_time(t)?;
        Ok(self.value(t))
    }

    /// Squared RKHS norm `c^T K c`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let k = kernel_matrix(&self.spec, &self.anchors, &self.anchors);
        let kc = mat_vec(&k, &self.coeffs);
        crate::linalg::dot(&self.coeffs, &kc)
    }

    pub fn scaled(&self, c: f64) -> Self {
        FittedFunction {
            anchors: self.anchors.clone(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
            spec: self.spec,
        }
    }
}

impl Curve for FittedFunction {
    fn value(&self, t: f64) -> f64 {
        self.anchors
            .iter()
            .zip(&self.coeffs)
            .map(|(&a, &c)| c * self.spec.eval_unchecked(t, a))
            .sum()
    }

    fn domain(&self) -> Domain {
        self.spec.domain
    }

    fn values(&self, ts: &[f64]) -> Vec<f64> {
        if self.anchors.is_empty() {
            return vec![0.0; ts.len()];
        }
        let k = kernel_matrix(&self.spec, ts, &self.anchors);
        mat_vec(&k, &self.coeffs)
    }
}

/// Checked evaluation of a fitted function.
pub fn evaluate_function(f: &FittedFunction, t: f64) -> Result<f64> {
    f.evaluate(t)
}

/// Pooled design for mean fitting; also drives cross-validation of `lambda`.
pub struct MeanProblem {
    spec: KernelSpec,
    times: Vec<f64>,
    values: Vec<f64>,
    ranges: Vec<std::ops::Range<usize>>,
    gram: Mat<f64>,
}

impl MeanProblem {
    pub fn new(samples: &[LongitudinalSample], spec: &KernelSpec) -> Result<Self> {
        validate_samples(samples, spec)?;
        let (times, ranges) = pool_times(samples);
        let values = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
        let gram = kernel_matrix(spec, &times, &times);
        Ok(MeanProblem {
            spec: *spec,
            times,
            values,
            ranges,
            gram,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.ranges.len()
    }

    fn indices(&self, subjects: &[usize]) -> Vec<usize> {
        subjects
            .iter()
            .flat_map(|&i| self.ranges[i].clone())
            .collect()
    }

    /// Per-point shift `n m_i` for a subset of subjects.
    fn shifts(&self, subjects: &[usize]) -> Vec<f64> {
        let n = subjects.len() as f64;
        subjects
            .iter()
            .flat_map(|&i| {
                let m = self.ranges[i].len();
                std::iter::repeat(n * m as f64).take(m)
            })
            .collect()
    }

    pub fn fit(&self, lambda: f64) -> Result<FittedFunction> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let all: Vec<usize> = (0..self.n_subjects()).collect();
        let d: Vec<f64> = self.shifts(&all).into_iter().map(|v| v * lambda).collect();
        let coeffs = solve_shifted(&self.gram, &d, &self.values)?;
        Ok(FittedFunction {
            anchors: self.times.clone(),
            coeffs,
            spec: self.spec,
        })
    }

    /// Weighted squared loss plus `lambda ||g||^2` for coefficients over the pooled anchors.
    pub fn objective(&self, coeffs: &[f64], lambda: f64) -> f64 {
        let fitted = mat_vec(&self.gram, coeffs);
        self.weighted_loss(&fitted) + lambda * crate::linalg::dot(coeffs, &fitted)
    }

    /// `sum_i 1/(n m_i) sum_j (U_ij - fitted_ij)^2`.
    pub fn weighted_loss(&self, fitted: &[f64]) -> f64 {
        let n = self.n_subjects() as f64;
        self.ranges
            .iter()
            .map(|r| {
                let m = r.len() as f64;
                r.clone()
                    .map(|k| (self.values[k] - fitted[k]).powi(2))
                    .sum::<f64>()
                    / (n * m)
            })
            .sum()
    }

    pub fn training_loss(&self, f: &FittedFunction) -> f64 {
        self.weighted_loss(&f.values(&self.times))
    }
}

/// Fits `mu` by penalized least squares with per-subject weights `1/(n m_i)`.
pub fn fit_mean(samples: &[LongitudinalSample], spec: &KernelSpec, lambda: f64) -> Result<FittedFunction> {
    MeanProblem::new(samples, spec)?.fit(lambda)
}

impl CvObjective for MeanProblem {
    fn n_subjects(&self) -> usize {
        self.ranges.len()
    }

    fn heldout_losses(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Result<Vec<f64>> {
        let tr = self.indices(train);
        let te = self.indices(test);
        let g = Mat::from_fn(tr.len(), tr.len(), |i, j| self.gram[(tr[i], tr[j])]);
        let cross = Mat::from_fn(te.len(), tr.len(), |i, j| self.gram[(te[i], tr[j])]);
        let rhs: Vec<f64> = tr.iter().map(|&k| self.values[k]).collect();
        let solver = ShiftedEig::new(&g, &self.shifts(train))?;
        let proj = solver.project(&rhs);
        let n_test = test.len() as f64;
        grid.iter()
            .map(|&lam| {
                let b = solver.solve_projected(&proj, lam)?;
                let pred = mat_vec(&cross, &b);
                let mut loss = 0.0;
                let mut off = 0;
                for &i in test {
                    let m = self.ranges[i].len();
                    let sse: f64 = self.ranges[i]
                        .clone()
                        .zip(&pred[off..off + m])
                        .map(|(k, p)| (self.values[k] - p).powi(2))
                        .sum();
                    loss += sse / (m as f64 * n_test);
                    off += m;
                }
                Ok(loss)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    fn sample(id: &str, t: &[f64], v: &[f64]) -> LongitudinalSample {
        LongitudinalSample::new(id, t.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_function() {
        let s = vec![sample("a", &[0.1, 0.5], &[0.0, 0.0]), sample("b", &[0.3], &[0.0])];
        let f = fit_mean(&s, &KernelSpec::unit(), 0.01).unwrap();
        assert!(f.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(f.evaluate(0.77).unwrap(), 0.0);
    }

    #[test]
    fn heavy_penalty_shrinks_to_zero() {
        let s = vec![
            sample("a", &[0.1, 0.5, 0.9], &[3.0, -1.0, 2.0]),
            sample("b", &[0.3, 0.6], &[5.0, 4.0]),
        ];
        let f = fit_mean(&s, &KernelSpec::unit(), 1e6).unwrap();
        let rule = gauss_legendre(21);
        let sup = rule.nodes.iter().map(|&t| f.value(t).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-5, "{sup}");
    }

    #[test]
    fn evaluation_basics() {
        let spec = KernelSpec::unit();
        let z = FittedFunction::new(vec![0.2, 0.4], vec![0.0, 0.0], spec).unwrap();
        assert_eq!(z.evaluate(0.9).unwrap(), 0.0);
        let one = FittedFunction::new(vec![0.3], vec![1.0], spec).unwrap();
        assert_eq!(one.evaluate(0.6).unwrap(), spec.eval(0.6, 0.3).unwrap());
        assert!(one.evaluate(1.2).is_err());
    }

    #[test]
    fn quadrature_of_function_matches_row_sums() {
        let spec = KernelSpec::unit();
        let rule = gauss_legendre(41);
        let anchors = vec![0.1, 0.45, 0.8];
        let coeffs = vec![1.5, -0.5, 2.0];
        let f = FittedFunction::new(anchors.clone(), coeffs.clone(), spec).unwrap();
        let integral = rule.integrate(|t| f.value(t));
        let (e, w) = crate::gram::node_matrix(&spec, &rule, &anchors);
        let sums: Vec<f64> = (0..3)
            .map(|j| (0..rule.len()).map(|q| w[q] * e[(q, j)]).sum())
            .collect();
        let expect = crate::linalg::dot(&coeffs, &sums);
        assert!((integral - expect).abs() < 1e-13);
    }

    #[test]
    fn residual_nondecreasing_in_lambda() {
        let s = vec![
            sample("a", &[0.1, 0.5, 0.9], &[1.0, -1.0, 2.0]),
            sample("b", &[0.3, 0.6], &[0.5, 0.2]),
            sample("c", &[0.2, 0.75, 0.95], &[1.2, 0.1, 0.3]),
        ];
        let p = MeanProblem::new(&s, &KernelSpec::unit()).unwrap();
        let mut last = -1.0;
        for k in 0..10 {
            let lam = 10f64.powf(-8.0 + k as f64);
            let l = p.training_loss(&p.fit(lam).unwrap());
            assert!(l >= last - 1e-12, "lambda {lam}: {l} < {last}");
            last = l;
        }
    }

    #[test]
    fn noiseless_dense_recovery() {
        let spec = KernelSpec::unit();
        let truth = |t: f64| spec.eval(t, 0.3).unwrap();
        let times: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| truth(t)).collect();
        let s = vec![sample("a", &times, &values)];
        let f = fit_mean(&s, &spec, 1e-8).unwrap();
        let err = (0..=100)
            .map(|i| i as f64 / 100.0)
            .map(|t| (f.value(t) - truth(t)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn solution_beats_perturbations() {
        use rand::{RngExt, SeedableRng};
        let s = vec![
            sample("a", &[0.1, 0.5, 0.9], &[1.0, -1.0, 2.0]),
            sample("b", &[0.3, 0.6, 0.65], &[0.5, 0.2, 0.1]),
        ];
        let p = MeanProblem::new(&s, &KernelSpec::unit()).unwrap();
        let lam = 0.01;
        let f = p.fit(lam).unwrap();
        let best = p.objective(&f.coeffs, lam);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut d: Vec<f64> = (0..f.coeffs.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.iter_mut().for_each(|v| *v *= 1e-3 / norm);
            let c: Vec<f64> = f.coeffs.iter().zip(&d).map(|(a, b)| a + b).collect();
            assert!(p.objective(&c, lam) >= best - 1e-14);
        }
    }
}
