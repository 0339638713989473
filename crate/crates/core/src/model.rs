//! End-to-end fitting: means, auto-covariances, eigensystems, cross-covariance,
//! singular components, truncation and the coefficient surface.

use serde::{Deserialize, Serialize};

use crate::autocov::{eigensystem, AutoCovProblem, EigenSystem};
use crate::crosscov::{singular_system, CrossCovProblem, FittedSurface, SingularSystem};
use crate::data::{pair_by_id, LongitudinalSample};
use crate::error::{Error, Result};
use crate::kernel::{Domain, KernelForm, KernelSpec};
use crate::mean::{FittedFunction, MeanProblem};
use crate::quadrature::{gauss_legendre, QuadratureRule, DEFAULT_NODES};
use crate::regression::{
    assemble_from_sigma, predict_from_deviation, select_truncation, sigma_matrix, smooth_deviation,
    truncation_limits, CoefficientSurface, Criterion, TruncationInputs,
};
use crate::tuning::{crossval_lambda, log_grid, CvOutcome, CvPlan, DEFAULT_FOLDS, DEFAULT_GRID};

/// Smoothing parameters of the five penalized fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub mean_x: f64,
    pub mean_y: f64,
    pub cov_x: f64,
    pub cov_y: f64,
    pub cross: f64,
}

/// Per-stage override of the cross-validated value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedLambdas {
    pub mean_x: Option<f64>,
    pub mean_y: Option<f64>,
    pub cov_x: Option<f64>,
    pub cov_y: Option<f64>,
    pub cross: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub order_x: u32,
    pub order_y: u32,
    pub kernel_form: KernelForm,
    /// Inferred from the data when absent.
    pub domain_x: Option<Domain>,
    pub domain_y: Option<Domain>,
    pub quadrature_nodes: usize,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub fixed: FixedLambdas,
    pub j_max: usize,
    pub criterion: Criterion,
    /// Eigenfunctions kept per process; chosen by explained variance when absent.
    pub eigen_k_max: Option<usize>,
    pub singular_k_max: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let (lo, hi, c) = DEFAULT_GRID;
        FitConfig {
            order_x: 2,
            order_y: 2,
            kernel_form: KernelForm::Full,
            domain_x: None,
            domain_y: None,
            quadrature_nodes: DEFAULT_NODES,
            lambda_grid: log_grid(lo, hi, c).expect("default grid is valid"),
            folds: DEFAULT_FOLDS,
            seed: 0,
            fixed: FixedLambdas::default(),
            j_max: 10,
            criterion: Criterion::Aic,
            eigen_k_max: None,
            singular_k_max: Some(20),
        }
    }
}

/// All fitted components; evaluations depend only on this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub spec_x: KernelSpec,
    pub spec_y: KernelSpec,
    pub quadrature_nodes: usize,
    pub mu_x: FittedFunction,
    pub mu_y: FittedFunction,
    pub eigen_x: EigenSystem,
    pub eigen_y: EigenSystem,
    pub crosscov: FittedSurface,
    pub singular: SingularSystem,
    pub beta: CoefficientSurface,
    pub lambdas: Lambdas,
    pub criterion: Criterion,
}

impl ModelBundle {
    pub fn rule(&self) -> QuadratureRule {
        gauss_legendre(self.quadrature_nodes)
    }

    /// Predicted response trajectory of a new predictor sample on `t_grid`.
    pub fn predict(&self, new_x: &LongitudinalSample, t_grid: &[f64]) -> Result<Vec<f64>> {
        predict_response(self, new_x, t_grid)
    }

    /// `alpha(t) = mu_Y(t) - int mu_X(s) beta(s, t) ds`.
    pub fn intercept(&self, t_grid: &[f64]) -> Result<Vec<f64>> {
        let neg = self.mu_x.scaled(-1.0);
        predict_from_deviation(&self.beta, &self.mu_y, &neg, t_grid, &self.rule())
    }

    pub fn validate(&self) -> Result<()> {
        for spec in [&self.spec_x, &self.spec_y, &self.crosscov.spec_s, &self.crosscov.spec_t] {
            KernelSpec::with_form(spec.order, spec.domain, spec.form)
                .map_err(|e| Error::input(format!("bad kernel in model: {e}")))?;
        }
        self.crosscov.validate()?;
        if self.quadrature_nodes == 0 {
            return Err(Error::input("model has zero quadrature nodes"));
        }
        let fns = [&self.mu_x, &self.mu_y]
            .into_iter()
            .chain(&self.eigen_x.functions)
            .chain(&self.eigen_y.functions)
            .chain(&self.singular.psi)
            .chain(&self.singular.phi)
            .chain(&self.beta.x_functions)
            .chain(&self.beta.y_functions);
        for f in fns {
            KernelSpec::with_form(f.spec.order, f.spec.domain, f.spec.form)
                .map_err(|e| Error::input(format!("bad kernel in model: {e}")))?;
            if f.anchors.len() != f.coeffs.len() {
                return Err(Error::input("function with mismatched anchors and coefficients"));
            }
        }
        if self.beta.weights.len() != self.beta.y_functions.len()
            || self.beta.weights.iter().any(|r| r.len() != self.beta.x_functions.len())
        {
            return Err(Error::input("coefficient surface weights do not match its functions"));
        }
        Ok(())
    }
}

/// `mu_Y(t) + int (X~(s) - mu_X(s)) beta(s, t) ds` where `X~` smooths the new
/// observations with the model's predictor kernel and mean penalty.
pub fn predict_response(model: &ModelBundle, new_x: &LongitudinalSample, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::arg("empty prediction grid"));
    }
    let dev = smooth_deviation(new_x, &model.mu_x, model.lambdas.mean_x)?;
    predict_from_deviation(&model.beta, &model.mu_y, &dev, t_grid, &model.rule())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambdas: Lambdas,
    /// Cross-validation curves for stages that were not fixed.
    pub cv: Vec<(String, CvOutcome)>,
    pub j1: usize,
    pub j2: usize,
    pub criterion: Criterion,
    pub criterion_table: Vec<Vec<f64>>,
    pub sigma_sq: Vec<f64>,
    pub eigenvalues_x: Vec<f64>,
    pub eigenvalues_y: Vec<f64>,
    pub fve_x: f64,
    pub fve_y: f64,
    pub domain_x: Domain,
    pub domain_y: Domain,
    pub n_subjects: usize,
}

/// `[min, max]` of the times widened by 1% of the range on each side.
pub fn infer_domain(samples: &[LongitudinalSample]) -> Result<Domain> {
    let (lo, hi) = samples
        .iter()
        .flat_map(|s| s.times.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input("no observation times"));
    }
    let pad = if hi > lo { 0.01 * (hi - lo) } else { 0.01 * lo.abs().max(1.0) };
    Domain::new(lo - pad, hi + pad)
}

/// Pairs subjects by id, orders them by id and each subject's observations by
/// time, so the fit does not depend on input order.
fn canonical(x: &[LongitudinalSample], y: &[LongitudinalSample]) -> Result<(Vec<LongitudinalSample>, Vec<LongitudinalSample>)> {
    let mut pairs: Vec<(LongitudinalSample, LongitudinalSample)> = pair_by_id(x, y)?
        .into_iter()
        .map(|(a, b)| (sorted(a), sorted(b)))
        .collect();
    pairs.sort_by(|a, b| a.0.subject_id.cmp(&b.0.subject_id));
    Ok(pairs.into_iter().unzip())
}

fn sorted(s: &LongitudinalSample) -> LongitudinalSample {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.times[a].total_cmp(&s.times[b]).then(s.values[a].total_cmp(&s.values[b])));
    LongitudinalSample {
        subject_id: s.subject_id.clone(),
        times: idx.iter().map(|&i| s.times[i]).collect(),
        values: idx.iter().map(|&i| s.values[i]).collect(),
    }
}

pub fn fit_model(x: &[LongitudinalSample], y: &[LongitudinalSample], cfg: &FitConfig) -> Result<(ModelBundle, FitReport)> {
    let (x, y) = canonical(x, y)?;
    let n = x.len();
    let domain_x = match cfg.domain_x {
        Some(d) => d,
        None => infer_domain(&x)?,
    };
    let domain_y = match cfg.domain_y {
        Some(d) => d,
        None => infer_domain(&y)?,
    };
    let spec_x = KernelSpec::with_form(cfg.order_x, domain_x, cfg.kernel_form)?;
    let spec_y = KernelSpec::with_form(cfg.order_y, domain_y, cfg.kernel_form)?;
    let rule = gauss_legendre(cfg.quadrature_nodes);
    let needs_cv = [cfg.fixed.mean_x, cfg.fixed.mean_y, cfg.fixed.cov_x, cfg.fixed.cov_y, cfg.fixed.cross]
        .iter()
        .any(Option::is_none);
    let plan = if needs_cv {
        Some(CvPlan::new(n, cfg.folds.min(n), cfg.lambda_grid.clone(), cfg.seed)?)
    } else {
        None
    };
    let mut cv = Vec::new();
    let mut choose = |name: &str, fixed: Option<f64>, run: &dyn Fn(&CvPlan) -> Result<CvOutcome>| -> Result<f64> {
        if let Some(l) = fixed {
            return Ok(l);
        }
        let out = run(plan.as_ref().expect("plan exists when a stage is tuned"))
            .map_err(|e| Error::num(format!("{name}: {e}")))?;
        let l = out.lambda;
        cv.push((name.to_string(), out));
        Ok(l)
    };

    let mx = MeanProblem::new(&x, &spec_x)?;
    let my = MeanProblem::new(&y, &spec_y)?;
    let mean_x = choose("mean_x", cfg.fixed.mean_x, &|p| crossval_lambda(&mx, p))?;
    let mean_y = choose("mean_y", cfg.fixed.mean_y, &|p| crossval_lambda(&my, p))?;
    let mu_x = mx.fit(mean_x)?;
    let mu_y = my.fit(mean_y)?;

    let ax = AutoCovProblem::new(&x, &mu_x, &spec_x)?;
    let ay = AutoCovProblem::new(&y, &mu_y, &spec_y)?;
    let cov_x = choose("cov_x", cfg.fixed.cov_x, &|p| ax.crossval(p))?;
    let cov_y = choose("cov_y", cfg.fixed.cov_y, &|p| ay.crossval(p))?;
    let eigen_x = eigensystem(&ax.fit(cov_x)?, &rule, cfg.eigen_k_max)?;
    let eigen_y = eigensystem(&ay.fit(cov_y)?, &rule, cfg.eigen_k_max)?;

    let cp = CrossCovProblem::new(&x, &y, &mu_x, &mu_y, &spec_x, &spec_y)?;
    let cross = choose("cross", cfg.fixed.cross, &|p| cp.crossval(p))?;
    let crosscov = cp.fit(cross)?;
    let singular = singular_system(&crosscov, &rule, cfg.singular_k_max)?;

    let (l1, l2) = truncation_limits(&eigen_x, &eigen_y, cfg.j_max);
    let sigma = sigma_matrix(&crosscov, &eigen_x.functions[..l2], &eigen_y.functions[..l1], &rule);
    let choice = select_truncation(
        &TruncationInputs {
            x: &x,
            y: &y,
            mu_x: &mu_x,
            mu_y: &mu_y,
            eigen_x: &eigen_x,
            eigen_y: &eigen_y,
            sigma: &sigma,
            singular: &singular,
            smoother_lambda: mean_x,
            rule: &rule,
        },
        cfg.j_max,
        cfg.criterion,
    )?;
    let beta = assemble_from_sigma(&eigen_x, &eigen_y, &sigma, choice.j1, choice.j2)?;
    let lambdas = Lambdas {
        mean_x,
        mean_y,
        cov_x,
        cov_y,
        cross,
    };
    let report = FitReport {
        lambdas,
        cv,
        j1: choice.j1,
        j2: choice.j2,
        criterion: cfg.criterion,
        criterion_table: choice.table,
        sigma_sq: singular.sigma_sq.clone(),
        eigenvalues_x: eigen_x.values.clone(),
        eigenvalues_y: eigen_y.values.clone(),
        fve_x: eigen_x.fve(eigen_x.len()),
        fve_y: eigen_y.fve(eigen_y.len()),
        domain_x,
        domain_y,
        n_subjects: n,
    };
    Ok((
        ModelBundle {
            spec_x,
            spec_y,
            quadrature_nodes: cfg.quadrature_nodes,
            mu_x,
            mu_y,
            eigen_x,
            eigen_y,
            crosscov,
            singular,
            beta,
            lambdas,
            criterion: cfg.criterion,
        },
        report,
    ))
}
