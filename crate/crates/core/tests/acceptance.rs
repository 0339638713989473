//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::process::Command;
use std::time::Instant;

use common::*;
use faer::Mat;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use sparsefun::crosscov::{singular_spectra, CrossCovProblem};
use sparsefun::func::{FnCurve, ZeroSurface};
use sparsefun::io::{parse_model, save_model, ModelFile, Provenance};
use sparsefun::kernel::KernelForm;
use sparsefun::model::{fit_model, FitConfig};
use sparsefun::regression::assemble_beta;
use sparsefun::sim::{generate_dataset, run_experiment, BetaTruth, SimCase, SimConfig, TruthBundle};
use sparsefun::tuning::{log_grid, surface_error};
use sparsefun::{
    a_hat_surfaces, fit_autocov, fit_crosscov, fit_mean, gauss_legendre, singular_system, stationarity_residual,
    Curve, Domain, KernelSpec, LongitudinalSample, Surface,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)].abs())
        .fold(0.0, f64::max)
}

fn sorted(samples: &[LongitudinalSample]) -> Vec<LongitudinalSample> {
    let mut out: Vec<LongitudinalSample> = samples
        .iter()
        .map(|s| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&a, &b| s.times[a].total_cmp(&s.times[b]));
            LongitudinalSample::new(
                s.subject_id.clone(),
                idx.iter().map(|&i| s.times[i]).collect(),
                idx.iter().map(|&i| s.values[i]).collect(),
            )
            .unwrap()
        })
        .collect();
    out.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    out
}

/// Cross-covariance fits gathered from the other criteria for the stationarity check.
#[derive(Default)]
struct Fits {
    entries: Vec<(String, f64, f64)>,
}

impl Fits {
    fn record(&mut self, name: impl Into<String>, problem: &CrossCovProblem, lambda: f64) {
        let surface = problem.fit(lambda).unwrap();
        let residual = stationarity_residual(&surface, problem, lambda);
        let scale = problem.products().iter().fold(0.0, |m: f64, c| m.max(c.abs()));
        self.entries.push((name.into(), residual, scale));
    }
}

fn exact_integrals() -> Outcome {
    let rule = gauss_legendre(41);
    let targets = [(SimCase::One, 2.801542, 1.417086, 1e-3), (SimCase::Two, 1.21695, 1.020649, 1e-4)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, mise, miae, tol) in targets {
        let e = surface_error(&ZeroSurface(Domain::UNIT, Domain::UNIT), &BetaTruth(case), &rule);
        pass &= (e.mise - mise).abs() <= tol && (e.miae - miae).abs() <= tol;
        detail.push(format!("case {}: {:.6} / {:.6}", case.number(), e.mise, e.miae));
    }
    outcome(pass, detail.join(", "))
}

fn representer_oracles(fits: &mut Fits) -> Outcome {
    let spec = KernelSpec::unit();
    let mut r = rng(11);

    let mean_data = random_samples(&mut r, "m", 2, 3, |t| 2.0 * t - 1.0);
    let fitted = fit_mean(&mean_data, &spec, 0.01).unwrap();
    let d_mean = rel_diff(&fitted.coeffs, &mean_oracle(&mean_data, &spec, 0.01));

    let x = random_samples(&mut r, "s", 3, 2, |t| t.cos());
    let y = random_samples(&mut r, "s", 3, 2, |t| t * t);
    let (mx, my) = (|t: f64| 0.3 * t, |t: f64| 0.1 - t);
    let cx = FnCurve::new(mx, Domain::UNIT);
    let cy = FnCurve::new(my, Domain::UNIT);
    let surface = fit_crosscov(&x, &y, &cx, &cy, &spec, &spec, 0.05).unwrap();
    let oracle = crosscov_oracle(&x, &y, mx, my, &spec, 0.05);
    let d_cross = rel_diff(&surface.coefficients(), &oracle);
    fits.record("representer n=3", &CrossCovProblem::new(&x, &y, &cx, &cy, &spec, &spec).unwrap(), 0.05);

    let auto = random_samples(&mut r, "a", 3, 3, |t| (3.0 * t).sin());
    let mu = |t: f64| 0.5 * t;
    let sym = fit_autocov(&auto, &FnCurve::new(mu, Domain::UNIT), &spec, 0.01).unwrap();
    let ordered: Vec<f64> = sym
        .surface
        .blocks
        .iter()
        .flat_map(|b| {
            let m = b.s_len;
            (0..m * m).filter(move |k| k / m != k % m).map(|k| b.coeffs[k])
        })
        .collect();
    let d_auto = rel_diff(&ordered, &autocov_oracle(&auto, mu, &spec, 0.01));

    let worst = d_mean.max(d_cross).max(d_auto);
    outcome(
        oracle.len() == 12 && worst <= 1e-6,
        format!(
            "{} cross-covariance coefficients; rel. diff mean {d_mean:.1e}, cross {d_cross:.1e}, auto {d_auto:.1e}",
            oracle.len()
        ),
    )
}

fn small_fit(case: SimCase, n: usize, seed: u64) -> (Vec<LongitudinalSample>, Vec<LongitudinalSample>) {
    let d = generate_dataset(&SimConfig::new(case, n, 8.0, 1, seed), 0).unwrap();
    (sorted(&d.x), sorted(&d.y))
}

fn singular_identities(fits: &mut Fits) -> Outcome {
    let rule = gauss_legendre(41);
    let spec = KernelSpec::unit();
    let (x, y) = small_fit(SimCase::One, 5, 3);
    let mu_x = fit_mean(&x, &spec, 1e-3).unwrap();
    let mu_y = fit_mean(&y, &spec, 1e-3).unwrap();
    let problem = CrossCovProblem::new(&x, &y, &mu_x, &mu_y, &spec, &spec).unwrap();
    let surface = problem.fit(1e-3).unwrap();
    fits.record("singular identities n=5", &problem, 1e-3);

    let (left, right) = singular_spectra(&surface, &rule).unwrap();
    let top = left[0].max(right[0]);
    let k = left.len().min(right.len());
    let spectra_gap = (0..k).map(|i| (left[i] - right[i]).abs()).fold(0.0, f64::max)
        + left[k..].iter().chain(&right[k..]).map(|v| v.abs()).fold(0.0, f64::max);

    let sys = singular_system(&surface, &rule, None).unwrap();
    let gram_error = |fs: &[sparsefun::FittedFunction]| {
        let vals: Vec<Vec<f64>> = fs.iter().map(|f| f.values(&rule.nodes)).collect();
        let mut worst: f64 = 0.0;
        for a in 0..fs.len() {
            for b in 0..fs.len() {
                let ip: f64 = (0..rule.len()).map(|q| rule.weights[q] * vals[a][q] * vals[b][q]).sum();
                worst = worst.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    };
    let ortho = gram_error(&sys.psi).max(gram_error(&sys.phi));

    let (axy, ayx) = a_hat_surfaces(&surface, &rule);
    let g = Domain::UNIT.grid(9);
    let rebuild = |fs: &[sparsefun::FittedFunction]| {
        Mat::from_fn(9, 9, |i, j| {
            (0..sys.len()).map(|k| sys.sigma_sq[k] * fs[k].value(g[i]) * fs[k].value(g[j])).sum::<f64>()
        })
    };
    let recon_xy = max_abs(&(rebuild(&sys.psi) - axy.grid(&g, &g)));
    let recon_yx = max_abs(&(rebuild(&sys.phi) - ayx.grid(&g, &g)));

    let pass = spectra_gap <= 1e-9 * top.max(1.0) && ortho <= 1e-8 && recon_xy.max(recon_yx) <= 1e-6;
    outcome(
        pass,
        format!(
            "{} components, spectra gap {spectra_gap:.1e} (top {top:.3}), orthonormality {ortho:.1e}, \
             reconstruction XY {recon_xy:.1e} YX {recon_yx:.1e}",
            sys.len()
        ),
    )
}

fn oracle_beta() -> Outcome {
    let rule = gauss_legendre(41);
    let truth = TruthBundle::new(SimCase::One);
    let beta = assemble_beta(&truth.eigen_x(), &truth.y_basis(), &truth.crosscov(), 10, 10, &rule).unwrap();
    let g = Domain::UNIT.grid(41);
    let err = max_abs(&(beta.grid(&g, &g) - truth.beta().grid(&g, &g)));
    let norm = surface_error(&beta, &ZeroSurface(Domain::UNIT, Domain::UNIT), &rule).mise;
    outcome(
        err <= 1e-6 && (norm - 2.801542).abs() <= 1e-3,
        format!("grid max error {err:.1e} on 41x41, integral of beta^2 {norm:.6}"),
    )
}

fn monte_carlo() -> Outcome {
    let fit = FitConfig::default();
    let run = |case, n, stn| {
        let t = Instant::now();
        let rep = run_experiment(&SimConfig::new(case, n, stn, 100, 2024), &fit).unwrap();
        let s = rep.summary;
        eprintln!(
            "  case {} n={n} stn={}: trimmed MISE {:?}, {} failed, {:.0}s",
            s.case,
            s.stn,
            s.trimmed_mise,
            s.failed,
            t.elapsed().as_secs_f64()
        );
        (s.trimmed_mise.unwrap_or(f64::NAN), s.failed)
    };
    let (c1, f1) = run(SimCase::One, 100, f64::INFINITY);
    let (c2, f2) = run(SimCase::Two, 100, 8.0);
    let (c1_small, f3) = run(SimCase::One, 25, f64::INFINITY);
    let (c2_small, f4) = run(SimCase::Two, 25, f64::INFINITY);
    let (c2_large, f5) = run(SimCase::Two, 100, f64::INFINITY);
    let pass = (0.25..=1.1).contains(&c1)
        && (0.07..=0.35).contains(&c2)
        && c1 < c1_small
        && c2_large < c2_small;
    outcome(
        pass,
        format!(
            "case 1 n=100 inf {c1:.3} in [0.25,1.1]; case 2 n=100 stn=8 {c2:.3} in [0.07,0.35]; \
             n=25->100 at inf: case 1 {c1_small:.3}->{c1:.3}, case 2 {c2_small:.3}->{c2_large:.3}; \
             failed replicates {}",
            f1 + f2 + f3 + f4 + f5
        ),
    )
}

fn kernel_psd() -> (bool, String) {
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (1u32..=4, prop::bool::ANY, prop::collection::vec(0.0f64..=1.0, 1..40));
    let result = runner.run(&strategy, |(order, full, pts)| {
        let form = if full { KernelForm::Full } else { KernelForm::Reduced };
        let spec = KernelSpec::with_form(order, Domain::UNIT, form).unwrap();
        let k = nalgebra::DMatrix::from_fn(pts.len(), pts.len(), |i, j| kernel(&spec, pts[i], pts[j]));
        let eig = k.symmetric_eigenvalues();
        let top = eig.max().max(1e-300);
        prop_assert!(eig.min() >= -1e-10 * top, "min eigenvalue {} vs top {top}", eig.min());
        Ok(())
    });
    match result {
        Ok(()) => (true, "PSD on 200 random point sets".into()),
        Err(e) => (false, format!("PSD failure: {e}")),
    }
}

fn transpose_symmetry(fits: &mut Fits) -> (bool, String) {
    let spec = KernelSpec::unit();
    let (x, y) = small_fit(SimCase::Two, 20, 8);
    let mu_x = fit_mean(&x, &spec, 1e-3).unwrap();
    let mu_y = fit_mean(&y, &spec, 1e-3).unwrap();
    let problem = CrossCovProblem::new(&x, &y, &mu_x, &mu_y, &spec, &spec).unwrap();
    let c = problem.fit(1e-4).unwrap();
    fits.record("transpose n=20", &problem, 1e-4);
    let yx = c.transposed();
    let mut r = rng(99);
    let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (s, t): (f64, f64) = (rand::RngExt::random(&mut r), rand::RngExt::random(&mut r));
        worst = worst.max((yx.value(t, s) - c.value(s, t)).abs());
        scale = scale.max(c.value(s, t).abs());
    }
    (
        worst <= 1e-12 * scale,
        format!("YX(t,s) - XY(s,t) max {worst:.1e} (max |C| {scale:.2}) on 100 pairs"),
    )
}

fn loss_monotone(fits: &mut Fits) -> (bool, String) {
    let spec = KernelSpec::unit();
    let (x, y) = small_fit(SimCase::One, 30, 21);
    let mu_x = fit_mean(&x, &spec, 1e-3).unwrap();
    let mu_y = fit_mean(&y, &spec, 1e-3).unwrap();
    let problem = CrossCovProblem::new(&x, &y, &mu_x, &mu_y, &spec, &spec).unwrap();
    let grid = log_grid(1e-7, 1.0, 8).unwrap();
    let losses: Vec<f64> = grid
        .iter()
        .map(|&l| {
            fits.record(format!("monotone n=30 lambda={l:.0e}"), &problem, l);
            problem.training_loss(&problem.fit(l).unwrap())
        })
        .collect();
    let ok = losses.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    (ok, format!("loss {:.3e} -> {:.3e} over 8 lambdas", losses[0], losses[7]))
}

fn model_round_trip(fits: &mut Fits) -> (bool, String) {
    let d = generate_dataset(&SimConfig::new(SimCase::One, 40, 8.0, 1, 31), 0).unwrap();
    let cfg = FitConfig {
        domain_x: Some(Domain::UNIT),
        domain_y: Some(Domain::UNIT),
        ..FitConfig::default()
    };
    let (model, _) = fit_model(&d.x, &d.y, &cfg).unwrap();
    let (x, y) = (sorted(&d.x), sorted(&d.y));
    let problem = CrossCovProblem::new(&x, &y, &model.mu_x, &model.mu_y, &model.spec_x, &model.spec_y).unwrap();
    let same_fit = problem.fit(model.lambdas.cross).unwrap() == model.crosscov;
    fits.record("pipeline n=40", &problem, model.lambdas.cross);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &ModelFile::new(model.clone(), Provenance::default())).unwrap();
    let loaded = parse_model(&std::fs::read_to_string(&path).unwrap()).unwrap().model;
    let g = Domain::UNIT.grid(33);
    let bits = |m: &Mat<f64>| -> Vec<u64> {
        (0..33).flat_map(|i| (0..33).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].to_bits()).collect()
    };
    let mut identical = bits(&model.beta.grid(&g, &g)) == bits(&loaded.beta.grid(&g, &g))
        && bits(&model.crosscov.grid(&g, &g)) == bits(&loaded.crosscov.grid(&g, &g));
    for (a, b) in [(&model.mu_x, &loaded.mu_x), (&model.mu_y, &loaded.mu_y)] {
        identical &= a.values(&g).iter().zip(b.values(&g)).all(|(u, v)| u.to_bits() == v.to_bits());
    }
    (
        identical && same_fit,
        format!("33x33 beta, cross-covariance and means bit-identical after reload: {identical}"),
    )
}

fn simulate_determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let table = dir.path().join(format!("{tag}.csv"));
        let summary = dir.path().join(format!("{tag}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_sparsefun"))
            .args(["simulate", "--case", "1", "--n", "25", "--stn", "2", "--replicates", "2", "--seed", "7"])
            .arg("-o")
            .arg(&table)
            .arg("--summary")
            .arg(&summary)
            .status()
            .unwrap();
        (status.success(), std::fs::read(table).unwrap_or_default(), std::fs::read(summary).unwrap_or_default())
    };
    let (ok_a, ta, sa) = run("a");
    let (ok_b, tb, sb) = run("b");
    let same = ok_a && ok_b && !ta.is_empty() && ta == tb && sa == sb;
    (same, format!("two simulate runs byte-identical: {same}"))
}

fn property_suite(fits: &mut Fits) -> Outcome {
    let parts = [
        kernel_psd(),
        transpose_symmetry(fits),
        loss_monotone(fits),
        model_round_trip(fits),
        simulate_determinism(),
    ];
    outcome(
        parts.iter().all(|p| p.0),
        parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "),
    )
}

fn stationarity(fits: &Fits) -> Outcome {
    let worst = fits
        .entries
        .iter()
        .map(|(name, r, scale)| (name, r / scale))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    outcome(
        fits.entries.iter().all(|(_, r, scale)| *r <= 1e-8 * scale),
        format!(
            "{} fits, worst residual / max|C_r| = {:.1e} ({})",
            fits.entries.len(),
            worst.1,
            worst.0
        ),
    )
}

fn main() {
    let mut fits = Fits::default();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((k, name, o, t.elapsed().as_secs_f64()));
    };
    timed(1, "exact integrals", &mut exact_integrals);
    timed(2, "representer oracles", &mut || representer_oracles(&mut fits));
    timed(4, "singular identities", &mut || singular_identities(&mut fits));
    timed(5, "oracle beta assembly", &mut oracle_beta);
    timed(7, "property suite", &mut || property_suite(&mut fits));
    timed(3, "stationarity", &mut || stationarity(&fits));
    let skip_mc = std::env::var_os("SPARSEFUN_SKIP_MONTE_CARLO").is_some();
    if !skip_mc {
        timed(6, "monte carlo bands", &mut monte_carlo);
    }
    results.sort_by_key(|r| r.0);

    let mut all = true;
    for (k, name, o, secs) in &results {
        all &= o.pass;
        println!(
            "criterion {k} {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            secs,
            o.detail
        );
    }
    if skip_mc {
        println!("criterion 6 monte carlo bands: NOT RUN (SPARSEFUN_SKIP_MONTE_CARLO set)");
    }
    if !all {
        std::process::exit(1);
    }
}
