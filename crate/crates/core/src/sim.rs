//! Generative model for the two simulation cases and the replicate runner.
//!
//! Predictors are `X(s) = sum_{j<=10} (m_j + x_j) Psi_j(s)` with mean scores
//! `m_j = 4 (-1)^j j^-2`, random scores `x_j = (-1)^j j^-1/2 zeta_j` and
//! `zeta_j ~ U[-sqrt 3, sqrt 3]`, so `Var x_j = 1/j`. `Psi_1 = 1` and
//! `Psi_j = sqrt 2 cos(j pi s)` for `j >= 2`; `Phi_j = sqrt 2 sin(j pi t)`.

use std::f64::consts::{E, PI, SQRT_2};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocov::EigenSystem;
use crate::data::LongitudinalSample;
use crate::error::{Error, Result};
use crate::func::{Curve, Surface};
use crate::kernel::Domain;
use crate::model::{fit_model, FitConfig};
use crate::quadrature::{gauss_legendre, QuadratureRule, DEFAULT_NODES};
use crate::tuning::{surface_error, trimmed_mean, ErrorReport};

pub const COMPONENTS: usize = 10;
pub const SIGNAL_X: f64 = 1.8031;
pub const SIGNAL_Y_CASE1: f64 = 2.5096;
pub const SIGNAL_Y_CASE2: f64 = 1.1721;
pub const TRIM_FRACTION: f64 = 0.05;
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha); seed_from_u64(seed), stream = replicate index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimCase {
    /// `beta = sum b_ij Psi_i Phi_j` with `b_ij = 3 i^-1/2 2^-i (-1)^j j^-2`.
    One,
    /// `beta(s, t) = 4 t exp(s - 2t)`.
    Two,
}

impl SimCase {
    pub fn number(self) -> u8 {
        match self {
            SimCase::One => 1,
            SimCase::Two => 2,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(SimCase::One),
            2 => Ok(SimCase::Two),
            _ => Err(Error::arg(format!("case must be 1 or 2, got {k}"))),
        }
    }
}

/// Closed-form basis functions on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrigBasis {
    /// Predictor basis `Psi_j`, 1-based.
    Psi(u32),
    /// Response basis `Phi_j`, 1-based.
    Phi(u32),
}

impl Curve for TrigBasis {
    fn value(&self, t: f64) -> f64 {
        match *self {
            TrigBasis::Psi(1) => 1.0,
            TrigBasis::Psi(j) => SQRT_2 * (j as f64 * PI * t).cos(),
            TrigBasis::Phi(j) => SQRT_2 * (j as f64 * PI * t).sin(),
        }
    }
    fn domain(&self) -> Domain {
        Domain::UNIT
    }
}

fn sign(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Predictor eigenvalue `1/j`.
pub fn x_eigenvalue(j: usize) -> f64 {
    1.0 / j as f64
}

/// Mean score `4 (-1)^j j^-2`.
pub fn mean_score(j: usize) -> f64 {
    4.0 * sign(j) / (j * j) as f64
}

/// `b_ij = 3 i^-1/2 2^-i (-1)^j j^-2`.
pub fn b_coeff(i: usize, j: usize) -> f64 {
    3.0 / (i as f64).sqrt() * 0.5f64.powi(i as i32) * sign(j) / (j * j) as f64
}

/// `c_i = int_0^1 e^s Psi_i(s) ds`.
pub fn exp_moment(i: usize) -> f64 {
    if i == 1 {
        E - 1.0
    } else {
        let w = i as f64 * PI;
        SQRT_2 * (E * sign(i) - 1.0) / (1.0 + w * w)
    }
}

/// Population quantities of a simulation case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthBundle {
    pub case: SimCase,
}

/// The true coefficient surface.
#[derive(Debug, Clone, Copy)]
pub struct BetaTruth(pub SimCase);

impl Surface for BetaTruth {
    fn value(&self, s: f64, t: f64) -> f64 {
        match self.0 {
            SimCase::One => {
                let psi: Vec<f64> = (1..=COMPONENTS).map(|i| TrigBasis::Psi(i as u32).value(s)).collect();
                (1..=COMPONENTS)
                    .map(|j| {
                        let phi = TrigBasis::Phi(j as u32).value(t);
                        phi * (1..=COMPONENTS).map(|i| b_coeff(i, j) * psi[i - 1]).sum::<f64>()
                    })
                    .sum()
            }
            SimCase::Two => 4.0 * t * (s - 2.0 * t).exp(),
        }
    }
    fn domains(&self) -> (Domain, Domain) {
        (Domain::UNIT, Domain::UNIT)
    }
}

/// The true cross-covariance `Cov(X(s), Y(t))`.
#[derive(Debug, Clone, Copy)]
pub struct CrossCovTruth(pub SimCase);

impl Surface for CrossCovTruth {
    fn value(&self, s: f64, t: f64) -> f64 {
        let psi: Vec<f64> = (1..=COMPONENTS).map(|i| TrigBasis::Psi(i as u32).value(s)).collect();
        match self.0 {
            SimCase::One => (1..=COMPONENTS)
                .map(|j| {
                    let phi = TrigBasis::Phi(j as u32).value(t);
                    phi * (1..=COMPONENTS)
                        .map(|i| x_eigenvalue(i) * b_coeff(i, j) * psi[i - 1])
                        .sum::<f64>()
                })
                .sum(),
            SimCase::Two => {
                let g = 4.0 * t * (-2.0 * t).exp();
                g * (1..=COMPONENTS)
                    .map(|i| x_eigenvalue(i) * exp_moment(i) * psi[i - 1])
                    .sum::<f64>()
            }
        }
    }
    fn domains(&self) -> (Domain, Domain) {
        (Domain::UNIT, Domain::UNIT)
    }
}

/// The true predictor mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanTruth;

impl Curve for MeanTruth {
    fn value(&self, s: f64) -> f64 {
        (1..=COMPONENTS)
            .map(|j| mean_score(j) * TrigBasis::Psi(j as u32).value(s))
            .sum()
    }
    fn domain(&self) -> Domain {
        Domain::UNIT
    }
}

impl TruthBundle {
    pub fn new(case: SimCase) -> Self {
        TruthBundle { case }
    }

    pub fn beta(&self) -> BetaTruth {
        BetaTruth(self.case)
    }

    pub fn crosscov(&self) -> CrossCovTruth {
        CrossCovTruth(self.case)
    }

    pub fn mu_x(&self) -> MeanTruth {
        MeanTruth
    }

    /// `lambda_j = 1/j` with `Psi_j`, `j = 1..=10`.
    pub fn eigen_x(&self) -> EigenSystem<TrigBasis> {
        let values: Vec<f64> = (1..=COMPONENTS).map(x_eigenvalue).collect();
        EigenSystem {
            spectrum: values.clone(),
            values,
            functions: (1..=COMPONENTS as u32).map(TrigBasis::Psi).collect(),
        }
    }

    /// The response basis `Phi_k` with unit weights; a convenient orthonormal
    /// system for assembling the case-1 surface.
    pub fn y_basis(&self) -> EigenSystem<TrigBasis> {
        EigenSystem {
            values: vec![1.0; COMPONENTS],
            spectrum: vec![1.0; COMPONENTS],
            functions: (1..=COMPONENTS as u32).map(TrigBasis::Phi).collect(),
        }
    }

    pub fn sigma_x(&self, stn: f64) -> f64 {
        SIGNAL_X / stn
    }

    pub fn sigma_y(&self, stn: f64) -> f64 {
        match self.case {
            SimCase::One => SIGNAL_Y_CASE1 / stn,
            SimCase::Two => SIGNAL_Y_CASE2 / stn,
        }
    }

    /// `X(s)` for random scores `x`.
    pub fn predictor(&self, scores: &[f64], s: f64) -> f64 {
        (1..=COMPONENTS)
            .map(|j| (mean_score(j) + scores[j - 1]) * TrigBasis::Psi(j as u32).value(s))
            .sum()
    }

    /// `E[Y | X](t)` in closed form from the predictor scores.
    pub fn conditional_mean(&self, scores: &[f64], t: f64) -> f64 {
        let total = |j: usize| mean_score(j) + scores[j - 1];
        match self.case {
            SimCase::One => (1..=COMPONENTS)
                .map(|k| {
                    let phi = TrigBasis::Phi(k as u32).value(t);
                    phi * (1..=COMPONENTS).map(|l| b_coeff(l, k) * total(l)).sum::<f64>()
                })
                .sum(),
            SimCase::Two => {
                4.0 * t * (-2.0 * t).exp() * (1..=COMPONENTS).map(|l| exp_moment(l) * total(l)).sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub case: SimCase,
    pub n: usize,
    /// Signal-to-noise ratio; `f64::INFINITY` gives noiseless observations.
    pub stn: f64,
    pub m_set: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(case: SimCase, n: usize, stn: f64, replicates: usize, seed: u64) -> Self {
        SimConfig {
            case,
            n,
            stn,
            m_set: vec![2, 3, 4, 5],
            replicates,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::arg("n must be at least 2"));
        }
        if self.replicates == 0 {
            return Err(Error::arg("replicates must be at least 1"));
        }
        if self.m_set.is_empty() || self.m_set.contains(&0) {
            return Err(Error::arg("sampling frequencies must be a non-empty set of positive integers"));
        }
        if !(self.stn > 0.0) {
            return Err(Error::arg(format!("stn must be positive, got {}", self.stn)));
        }
        Ok(())
    }
}

/// Latent quantities of one simulated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSubject {
    /// Random predictor scores `x_j`.
    pub scores: Vec<f64>,
    pub noise_x: Vec<f64>,
    pub noise_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub x: Vec<LongitudinalSample>,
    pub y: Vec<LongitudinalSample>,
    pub subjects: Vec<SimSubject>,
    pub truth: TruthBundle,
}

/// Draws one replicate from its own stream of the configured seed.
pub fn generate_dataset(cfg: &SimConfig, replicate: u64) -> Result<SimDataset> {
    cfg.validate()?;
    let truth = TruthBundle::new(cfg.case);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replicate);
    let (sx, sy) = (truth.sigma_x(cfg.stn), truth.sigma_y(cfg.stn));
    let root3 = 3f64.sqrt();
    let noise = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
        if sd == 0.0 {
            0.0
        } else {
            sd * rng.sample::<f64, _>(StandardNormal)
        }
    };
    let (mut x, mut y, mut subjects) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..cfg.n {
        let scores: Vec<f64> = (1..=COMPONENTS)
            .map(|j| sign(j) / (j as f64).sqrt() * rng.random_range(-root3..root3))
            .collect();
        let m1 = cfg.m_set[rng.random_range(0..cfg.m_set.len())];
        let m2 = cfg.m_set[rng.random_range(0..cfg.m_set.len())];
        let s: Vec<f64> = (0..m1).map(|_| rng.random::<f64>()).collect();
        let noise_x: Vec<f64> = (0..m1).map(|_| noise(&mut rng, sx)).collect();
        let t: Vec<f64> = (0..m2).map(|_| rng.random::<f64>()).collect();
        let noise_y: Vec<f64> = (0..m2).map(|_| noise(&mut rng, sy)).collect();
        let u = s.iter().zip(&noise_x).map(|(&s, e)| truth.predictor(&scores, s) + e).collect();
        let v = t
            .iter()
            .zip(&noise_y)
            .map(|(&t, e)| truth.conditional_mean(&scores, t) + e)
            .collect();
        let id = format!("{:04}", i + 1);
        x.push(LongitudinalSample::new(id.clone(), s, u)?);
        y.push(LongitudinalSample::new(id, t, v)?);
        subjects.push(SimSubject { scores, noise_x, noise_y });
    }
    Ok(SimDataset { x, y, subjects, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub case: u8,
    pub n: usize,
    pub stn: f64,
    pub mise: f64,
    pub miae: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub case: u8,
    pub n: usize,
    /// `"inf"` for noiseless runs.
    pub stn: String,
    pub seed: u64,
    pub rng: String,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub mean_mise: Option<f64>,
    pub mean_miae: Option<f64>,
    pub trimmed_mise: Option<f64>,
    pub trimmed_miae: Option<f64>,
    pub trim_fraction: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReplicateRow>,
    pub summary: ExperimentSummary,
}

/// Generates and fits one replicate, returning the error of the fitted surface.
pub fn run_replicate(cfg: &SimConfig, fit: &FitConfig, replicate: u64, rule: &QuadratureRule) -> Result<ErrorReport> {
    let data = generate_dataset(cfg, replicate)?;
    let mut fc = fit.clone();
    fc.seed = fit.seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    fc.domain_x = Some(Domain::UNIT);
    fc.domain_y = Some(Domain::UNIT);
    let (model, _) = fit_model(&data.x, &data.y, &fc)?;
    Ok(surface_error(&model.beta, &data.truth.beta(), rule))
}

/// Runs every replicate; failures become rows with status `failed: ...` and
/// are left out of the summaries.
pub fn run_experiment(cfg: &SimConfig, fit: &FitConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rule = gauss_legendre(DEFAULT_NODES);
    let rows: Vec<ReplicateRow> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (mise, miae, status) = match run_replicate(cfg, fit, r, &rule) {
                Ok(e) => (e.mise, e.miae, "ok".to_string()),
                Err(e) => (f64::NAN, f64::NAN, format!("failed: {e}")),
            };
            ReplicateRow {
                replicate: r,
                case: cfg.case.number(),
                n: cfg.n,
                stn: cfg.stn,
                mise,
                miae,
                status,
            }
        })
        .collect();
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let mise: Vec<f64> = ok.iter().map(|r| r.mise).collect();
    let miae: Vec<f64> = ok.iter().map(|r| r.miae).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let summary = ExperimentSummary {
        case: cfg.case.number(),
        n: cfg.n,
        stn: format_stn(cfg.stn),
        seed: cfg.seed,
        rng: RNG_NAME.to_string(),
        attempted: rows.len(),
        succeeded: ok.len(),
        failed: rows.len() - ok.len(),
        mean_mise: mean(&mise),
        mean_miae: mean(&miae),
        trimmed_mise: trimmed_mean(&mise, TRIM_FRACTION).ok(),
        trimmed_miae: trimmed_mean(&miae, TRIM_FRACTION).ok(),
        trim_fraction: TRIM_FRACTION,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(ExperimentReport { rows, summary })
}

pub fn format_stn(stn: f64) -> String {
    if stn.is_infinite() {
        "inf".to_string()
    } else {
        stn.to_string()
    }
}
