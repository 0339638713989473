//! Bernoulli polynomials and the Sobolev reproducing kernel on a compact interval.
//!
//! All kernel arithmetic happens on `[0, 1]`; a [`Domain`] maps user time
//! coordinates affinely onto the unit interval at the boundary of the API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported Sobolev order. The kernel needs `B_{2r}`, so the
/// coefficient table runs up to degree `2 * MAX_ORDER`.
pub const MAX_ORDER: u32 = 4;
const MAX_DEGREE: usize = 2 * MAX_ORDER as usize;

/// Relative slack accepted when checking that a time lies inside a domain.
const DOMAIN_SLACK: f64 = 1e-12;

/// Coefficients of `B_n(x) = sum_k c[n][k] x^k`, built from the Bernoulli
/// numbers with exact rational arithmetic at compile time.
const BERNOULLI_COEFFS: [[f64; MAX_DEGREE + 1]; MAX_DEGREE + 1] = bernoulli_table();

const fn gcd(mut a: i64, mut b: i64) -> i64 {
    if a < 0 {
        a = -a;
    }
    if b < 0 {
        b = -b;
    }
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

const fn binom(n: usize, k: usize) -> i64 {
    let mut r: i64 = 1;
    let mut i = 0;
    while i < k {
        r = r * (n - i) as i64 / (i + 1) as i64;
        i += 1;
    }
    r
}

const fn bernoulli_table() -> [[f64; MAX_DEGREE + 1]; MAX_DEGREE + 1] {
    // Bernoulli numbers as reduced fractions from sum_{k<=n} C(n+1,k) B_k = 0.
    let mut num = [0i64; MAX_DEGREE + 1];
    let mut den = [1i64; MAX_DEGREE + 1];
    num[0] = 1;
    let mut n = 1;
    while n <= MAX_DEGREE {
        let (mut sn, mut sd) = (0i64, 1i64);
        let mut k = 0;
        while k < n {
            let c = binom(n + 1, k);
            let tn = sn * den[k] + c * num[k] * sd;
            let td = sd * den[k];
            let g = gcd(tn, td);
            sn = tn / g;
            sd = td / g;
            k += 1;
        }
        // B_n = -S / (n + 1)
        let mut bn = -sn;
        let mut bd = sd * (n as i64 + 1);
        if bd < 0 {
            bn = -bn;
            bd = -bd;
        }
        let g = gcd(bn, bd);
        num[n] = if g == 0 { 0 } else { bn / g };
        den[n] = if g == 0 { 1 } else { bd / g };
        n += 1;
    }

    let mut table = [[0.0f64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
    let mut d = 0;
    while d <= MAX_DEGREE {
        // B_d(x) = sum_k C(d,k) B_k x^{d-k}
        let mut k = 0;
        while k <= d {
            let c = binom(d, k);
            table[d][d - k] = (c * num[k]) as f64 / den[k] as f64;
            k += 1;
        }
        d += 1;
    }
    table
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Evaluates the Bernoulli polynomial `B_degree(t)` for `t` in `[0, 1]`.
pub fn bernoulli(degree: u32, t: f64) -> Result<f64> {
    if degree as usize > MAX_DEGREE {
        return Err(Error::arg(format!(
            "Bernoulli degree {degree} exceeds supported maximum {MAX_DEGREE}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::arg(format!("Bernoulli argument {t} outside [0, 1]")));
    }
    Ok(bernoulli_unchecked(degree as usize, t))
}

#[inline]
fn bernoulli_unchecked(degree: usize, t: f64) -> f64 {
    let c = &BERNOULLI_COEFFS[degree];
    let mut acc = 0.0;
    for k in (0..=degree).rev() {
        acc = acc * t + c[k];
    }
    acc
}

/// Closed interval `[lo, hi]` carrying user time coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::arg(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = DOMAIN_SLACK * self.width();
        t >= self.lo - slack && t <= self.hi + slack
    }

    /// Maps `t` to `[0, 1]`, clamping values within rounding slack of the ends.
    pub fn to_unit(&self, t: f64) -> Result<f64> {
        if !self.contains(t) {
            return Err(Error::arg(format!(
                "time {t} outside domain [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.to_unit_unchecked(t))
    }

    #[inline]
    pub(crate) fn to_unit_unchecked(&self, t: f64) -> f64 {
        ((t - self.lo) / self.width()).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn from_unit(&self, x: f64) -> f64 {
        self.lo + x * self.width()
    }

    /// Evenly spaced grid of `g` points covering the domain, ends included.
    pub fn grid(&self, g: usize) -> Vec<f64> {
        match g {
            0 => Vec::new(),
            1 => vec![self.from_unit(0.5)],
            _ => (0..g)
                .map(|i| self.from_unit(i as f64 / (g - 1) as f64))
                .collect(),
        }
    }
}

/// Which reproducing kernel of the order-`r` Sobolev space is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelForm {
    /// Kernel of `W_2^r` under the norm `sum_{k<r} (int g^(k))^2 + int (g^(r))^2`:
    /// the reduced form plus `sum_{k<r} B_k(s) B_k(t) / (k!)^2`.
    #[default]
    Full,
    /// `B_r(s) B_r(t) / (r!)^2 + (-1)^(r-1) B_2r(|s-t|) / (2r)!` alone. Its
    /// span only holds functions with `int g^(k) = 0` for `k < r`.
    Reduced,
}

/// Sobolev order, domain and kernel form; defines `K(s, t)` on the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub order: u32,
    pub domain: Domain,
    #[serde(default)]
    pub form: KernelForm,
}

impl KernelSpec {
    pub fn new(order: u32, domain: Domain) -> Result<Self> {
        Self::with_form(order, domain, KernelForm::Full)
    }

    pub fn with_form(order: u32, domain: Domain, form: KernelForm) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::arg(format!(
                "kernel order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let domain = Domain::new(domain.lo, domain.hi)?;
        Ok(KernelSpec { order, domain, form })
    }

    /// Order-2 full kernel on the unit interval.
    pub fn unit() -> Self {
        KernelSpec {
            order: 2,
            domain: Domain::UNIT,
            form: KernelForm::Full,
        }
    }

    /// `K(s, t)` in user coordinates.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        let x = self.domain.to_unit(s)?;
        let y = self.domain.to_unit(t)?;
        Ok(self.eval_unit(x, y))
    }

    /// `K(s, t)` for times already known to lie in the domain.
    #[inline]
    pub(crate) fn eval_unchecked(&self, s: f64, t: f64) -> f64 {
        self.eval_unit(
            self.domain.to_unit_unchecked(s),
            self.domain.to_unit_unchecked(t),
        )
    }

    /// Kernel on `[0, 1] x [0, 1]`.
    pub fn eval_unit(&self, x: f64, y: f64) -> f64 {
        let r = self.order as usize;
        let fr = factorial(self.order);
        let f2r = factorial(2 * self.order);
        let sign = if r % 2 == 1 { 1.0 } else { -1.0 };
        let mut k = bernoulli_unchecked(r, x) * bernoulli_unchecked(r, y) / (fr * fr)
            + sign * bernoulli_unchecked(2 * r, (x - y).abs()) / f2r;
        if self.form == KernelForm::Full {
            for j in 0..r {
                let fj = factorial(j as u32);
                k += bernoulli_unchecked(j, x) * bernoulli_unchecked(j, y) / (fj * fj);
            }
        }
        k
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        self.domain.to_unit(t).map(|_| ())
    }
}
