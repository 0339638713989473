#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsefun::{KernelSpec, LongitudinalSample};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Subjects with `m` sorted uniform times on [0, 1] and values drawn from `f(t) + noise`.
pub fn random_samples(rng: &mut ChaCha8Rng, prefix: &str, n: usize, m: usize, f: impl Fn(f64) -> f64) -> Vec<LongitudinalSample> {
    (0..n)
        .map(|i| {
            let mut t: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            t.sort_by(f64::total_cmp);
            let v = t.iter().map(|&t| f(t) + rng.random_range(-1.0..1.0)).collect();
            LongitudinalSample::new(format!("{prefix}{i}"), t, v).unwrap()
        })
        .collect()
}

/// Minimizes `sum_p w_p (y_p - (G a)_p)^2 + lambda a^T G a` over `a` by solving
/// the stationarity equations of the expanded quadratic `a^T H a - 2 b^T a`.
pub fn minimize_penalized_quadratic(g: &DMatrix<f64>, w: &[f64], y: &[f64], lambda: f64) -> DVector<f64> {
    let wd = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let h = g.transpose() * &wd * g + g * lambda;
    let b = g.transpose() * &wd * DVector::from_column_slice(y);
    h.svd(true, true).solve(&b, 1e-15).unwrap()
}

pub fn kernel(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.eval(s, t).unwrap()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Composite trapezoid on `[0, 1]` with `n` intervals.
pub fn trapezoid(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / n as f64;
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    h * (inner + 0.5 * (f(0.0) + f(1.0)))
}

/// Direct oracle for the pooled mean fit: minimizes
/// `sum_i 1/(n m_i) sum_j (U_ij - g(T_ij))^2 + lambda ||g||^2` over the span
/// of kernel sections at the pooled times.
pub fn mean_oracle(samples: &[LongitudinalSample], spec: &KernelSpec, lambda: f64) -> Vec<f64> {
    let n = samples.len() as f64;
    let t: Vec<f64> = samples.iter().flat_map(|s| s.times.clone()).collect();
    let y: Vec<f64> = samples.iter().flat_map(|s| s.values.clone()).collect();
    let w: Vec<f64> = samples
        .iter()
        .flat_map(|s| std::iter::repeat(1.0 / (n * s.len() as f64)).take(s.len()))
        .collect();
    let g = DMatrix::from_fn(t.len(), t.len(), |p, q| kernel(spec, t[p], t[q]));
    minimize_penalized_quadratic(&g, &w, &y, lambda).iter().copied().collect()
}

/// Direct oracle for the cross-covariance fit over the span of
/// `K(S_ij, .) K(T_ik, .)`, one coefficient per within-subject pair in
/// subject, predictor-time, response-time order.
pub fn crosscov_oracle(
    x: &[LongitudinalSample],
    y: &[LongitudinalSample],
    mu_x: impl Fn(f64) -> f64,
    mu_y: impl Fn(f64) -> f64,
    spec: &KernelSpec,
    lambda: f64,
) -> Vec<f64> {
    let n = x.len() as f64;
    let mut pts = Vec::new();
    let mut c = Vec::new();
    let mut w = Vec::new();
    for (a, b) in x.iter().zip(y) {
        assert_eq!(a.subject_id, b.subject_id);
        for (s, u) in a.times.iter().zip(&a.values) {
            for (t, v) in b.times.iter().zip(&b.values) {
                pts.push((*s, *t));
                c.push((u - mu_x(*s)) * (v - mu_y(*t)));
                w.push(1.0 / (n * (a.len() * b.len()) as f64));
            }
        }
    }
    let g = DMatrix::from_fn(pts.len(), pts.len(), |p, q| {
        kernel(spec, pts[p].0, pts[q].0) * kernel(spec, pts[p].1, pts[q].1)
    });
    minimize_penalized_quadratic(&g, &w, &c, lambda).iter().copied().collect()
}

/// Direct oracle for the auto-covariance fit over ordered off-diagonal pairs
/// `j != k`, in subject, `j`, `k` order.
pub fn autocov_oracle(samples: &[LongitudinalSample], mu: impl Fn(f64) -> f64, spec: &KernelSpec, lambda: f64) -> Vec<f64> {
    let active = samples.iter().filter(|s| s.len() > 1).count() as f64;
    let mut pts = Vec::new();
    let mut c = Vec::new();
    let mut w = Vec::new();
    for s in samples {
        let m = s.len();
        for j in 0..m {
            for k in 0..m {
                if j != k {
                    pts.push((s.times[j], s.times[k]));
                    c.push((s.values[j] - mu(s.times[j])) * (s.values[k] - mu(s.times[k])));
                    w.push(1.0 / (active * (m * (m - 1)) as f64));
                }
            }
        }
    }
    let g = DMatrix::from_fn(pts.len(), pts.len(), |p, q| {
        kernel(spec, pts[p].0, pts[q].0) * kernel(spec, pts[p].1, pts[q].1)
    });
    minimize_penalized_quadratic(&g, &w, &c, lambda).iter().copied().collect()
}
