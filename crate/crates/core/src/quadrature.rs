use serde::{Deserialize, Serialize};

use crate::kernel::Domain;

/// Quadrature nodes and positive weights on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Default node count per axis.
pub const DEFAULT_NODES: usize = 41;

/// `q`-point Gauss–Legendre rule mapped to `[0, 1]`, nodes ascending.
///
/// Roots of `P_q` are found by Newton iteration from the Chebyshev-like
/// initial guesses `cos(pi (i - 1/4) / (q + 1/2))`.
pub fn gauss_legendre(q: usize) -> QuadratureRule {
    assert!(q >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let qf = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(q, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[q - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[q - 1 - i] = 0.5 * w;
    }
    QuadratureRule { nodes, weights }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int_0^1 f`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `int_0^1 int_0^1 f(s, t) ds dt` on the tensor grid.
    pub fn integrate_2d(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&s, &ws) in self.nodes.iter().zip(&self.weights) {
            for (&t, &wt) in self.nodes.iter().zip(&self.weights) {
                acc += ws * wt * f(s, t);
            }
        }
        acc
    }

    /// Nodes and weights mapped onto `domain` (weights scaled by its width).
    pub fn on_domain(&self, domain: &Domain) -> (Vec<f64>, Vec<f64>) {
        let w = domain.width();
        (
            self.nodes.iter().map(|&x| domain.from_unit(x)).collect(),
            self.weights.iter().map(|&v| v * w).collect(),
        )
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        gauss_legendre(DEFAULT_NODES)
    }
}
