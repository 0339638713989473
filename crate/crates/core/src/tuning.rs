//! Cross-validated choice of smoothing parameters and error metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::Surface;
use crate::quadrature::QuadratureRule;

/// A fitting problem whose held-out loss can be evaluated for a grid of
/// smoothing parameters on a train/test split of subjects.
pub trait CvObjective: Sync {
    fn n_subjects(&self) -> usize;

    /// Held-out loss for each grid value, in grid order.
    fn heldout_losses(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Result<Vec<f64>>;
}

/// `count` log-spaced values between `lo` and `hi`, ascending.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(Error::arg(format!("invalid grid [{lo}, {hi}] with {count} values")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[count - 1] = hi;
    Ok(g)
}

pub const DEFAULT_GRID: (f64, f64, usize) = (1e-8, 1.0, 20);
pub const DEFAULT_FOLDS: usize = 5;

/// Subject folds and the candidate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: Vec<Vec<usize>>,
    pub grid: Vec<f64>,
}

impl CvPlan {
    /// Random partition of `0..n_subjects` into `k` folds of near-equal size.
    pub fn new(n_subjects: usize, k: usize, grid: Vec<f64>, seed: u64) -> Result<Self> {
        if k < 2 || k > n_subjects {
            return Err(Error::arg(format!(
                "need 2 <= folds <= subjects, got {k} folds for {n_subjects} subjects"
            )));
        }
        check_grid(&grid)?;
        let mut order: Vec<usize> = (0..n_subjects).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut folds = vec![Vec::new(); k];
        for (pos, i) in order.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        Ok(CvPlan { folds, grid })
    }

    pub fn with_default_grid(n_subjects: usize, k: usize, seed: u64) -> Result<Self> {
        let (lo, hi, c) = DEFAULT_GRID;
        Self::new(n_subjects, k, log_grid(lo, hi, c)?, seed)
    }

    fn split(&self, fold: usize, n: usize) -> (Vec<usize>, &[usize]) {
        let test = &self.folds[fold];
        let mut mask = vec![true; n];
        test.iter().for_each(|&i| mask[i] = false);
        ((0..n).filter(|&i| mask[i]).collect(), test)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::arg("empty lambda grid"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::arg("lambda grid values must be finite and positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("lambda grid must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Mean held-out loss per grid value; `inf` where some fold failed.
    pub mean_loss: Vec<f64>,
}

/// Picks the grid value with the smallest mean held-out loss. Ties go to the
/// larger value.
pub fn crossval_lambda<O: CvObjective + ?Sized>(objective: &O, plan: &CvPlan) -> Result<CvOutcome> {
    check_grid(&plan.grid)?;
    let n = objective.n_subjects();
    if plan.folds.iter().flatten().any(|&i| i >= n) {
        return Err(Error::arg("fold refers to a subject out of range"));
    }
    let per_fold: Vec<Result<Vec<f64>>> = (0..plan.folds.len())
        .into_par_iter()
        .map(|f| {
            let (train, test) = plan.split(f, n);
            objective.heldout_losses(&train, test, &plan.grid)
        })
        .collect();
    let k = plan.folds.len() as f64;
    let mut mean = vec![0.0; plan.grid.len()];
    for (f, losses) in per_fold.into_iter().enumerate() {
        let losses = losses.map_err(|e| Error::num(format!("cross-validation fold {f}: {e}")))?;
        if losses.iter().all(|l| !l.is_finite()) {
            return Err(Error::num(format!(
                "cross-validation fold {f}: no finite loss for any lambda (first {:e})",
                plan.grid[0]
            )));
        }
        for (m, l) in mean.iter_mut().zip(losses) {
            *m += if l.is_finite() { l / k } else { f64::INFINITY };
        }
    }
    let mut best = 0;
    for i in 1..mean.len() {
        if mean[i] <= mean[best] {
            best = i;
        }
    }
    if !mean[best].is_finite() {
        return Err(Error::num("cross-validation: every lambda failed on some fold"));
    }
    Ok(CvOutcome {
        lambda: plan.grid[best],
        grid: plan.grid.clone(),
        mean_loss: mean,
    })
}

/// Adapts a per-lambda closure `f(train, test, lambda) -> loss`.
pub struct PerLambda<F> {
    pub n_subjects: usize,
    pub loss: F,
}

impl<F> CvObjective for PerLambda<F>
where
    F: Fn(&[usize], &[usize], f64) -> Result<f64> + Sync,
{
    fn n_subjects(&self) -> usize {
        self.n_subjects
    }
    fn heldout_losses(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter()
            .map(|&l| (self.loss)(train, test, l).or(Ok(f64::INFINITY)))
            .collect()
    }
}

/// Integrated squared and absolute errors between two surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mise: f64,
    pub miae: f64,
}

/// Tensor-product quadrature of `(a - b)^2` and `|a - b|` over `a`'s rectangle.
pub fn surface_error(a: &impl Surface, b: &impl Surface, rule: &QuadratureRule) -> ErrorReport {
    let (ds, dt) = a.domains();
    let (sn, sw) = rule.on_domain(&ds);
    let (tn, tw) = rule.on_domain(&dt);
    let ga = a.grid(&sn, &tn);
    let gb = b.grid(&sn, &tn);
    let (mut ise, mut iae) = (0.0, 0.0);
    for i in 0..sn.len() {
        for j in 0..tn.len() {
            let d = ga[(i, j)] - gb[(i, j)];
            let w = sw[i] * tw[j];
            ise += w * d * d;
            iae += w * d.abs();
        }
    }
    ErrorReport { mise: ise, miae: iae }
}

/// One-sided trimmed mean: drops the `ceil(frac * len)` largest values.
pub fn trimmed_mean(values: &[f64], frac: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::arg(format!("trim fraction must lie in [0, 1), got {frac}")));
    }
    let drop = (frac * values.len() as f64).ceil() as usize;
    if drop >= values.len() {
        return Err(Error::arg("trimming removes every value"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let kept = &v[..v.len() - drop];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}
