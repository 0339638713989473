//! Evaluation traits shared by fitted and closed-form functions.

use faer::Mat;

use crate::kernel::Domain;

/// A univariate function on a compact domain.
pub trait Curve: Sync {
    /// Value at `t`; `t` is assumed to lie in [`Curve::domain`].
    fn value(&self, t: f64) -> f64;

    fn domain(&self) -> Domain;

    fn values(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.value(t)).collect()
    }
}

/// A bivariate function on a rectangle `domain_s x domain_t`.
pub trait Surface: Sync {
    fn value(&self, s: f64, t: f64) -> f64;

    fn domains(&self) -> (Domain, Domain);

    /// `out[(i, j)] = value(s[i], t[j])`.
    fn grid(&self, s: &[f64], t: &[f64]) -> Mat<f64> {
        Mat::from_fn(s.len(), t.len(), |i, j| self.value(s[i], t[j]))
    }

    /// [`Surface::grid`] flattened row by row.
    fn grid_row_major(&self, s: &[f64], t: &[f64]) -> Vec<f64> {
        let g = self.grid(s, t);
        (0..s.len())
            .flat_map(|i| (0..t.len()).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)])
            .collect()
    }
}

impl<C: Curve + ?Sized> Curve for &C {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn domain(&self) -> Domain {
        (**self).domain()
    }
    fn values(&self, ts: &[f64]) -> Vec<f64> {
        (**self).values(ts)
    }
}

impl<S: Surface + ?Sized> Surface for &S {
    fn value(&self, s: f64, t: f64) -> f64 {
        (**self).value(s, t)
    }
    fn domains(&self) -> (Domain, Domain) {
        (**self).domains()
    }
    fn grid(&self, s: &[f64], t: &[f64]) -> Mat<f64> {
        (**self).grid(s, t)
    }
}

/// Adapts a closure into a [`Surface`].
pub struct FnSurface<F> {
    f: F,
    domain_s: Domain,
    domain_t: Domain,
}

impl<F: Fn(f64, f64) -> f64 + Sync> FnSurface<F> {
    pub fn new(f: F, domain_s: Domain, domain_t: Domain) -> Self {
        FnSurface {
            f,
            domain_s,
            domain_t,
        }
    }

    pub fn unit(f: F) -> Self {
        Self::new(f, Domain::UNIT, Domain::UNIT)
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> Surface for FnSurface<F> {
    fn value(&self, s: f64, t: f64) -> f64 {
        (self.f)(s, t)
    }
    fn domains(&self) -> (Domain, Domain) {
        (self.domain_s, self.domain_t)
    }
}

/// Adapts a closure into a [`Curve`].
pub struct FnCurve<F> {
    f: F,
    domain: Domain,
}

impl<F: Fn(f64) -> f64 + Sync> FnCurve<F> {
    pub fn new(f: F, domain: Domain) -> Self {
        FnCurve { f, domain }
    }
}

impl<F: Fn(f64) -> f64 + Sync> Curve for FnCurve<F> {
    fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }
    fn domain(&self) -> Domain {
        self.domain
    }
}

/// The identically zero surface.
pub struct ZeroSurface(pub Domain, pub Domain);

impl Surface for ZeroSurface {
    fn value(&self, _s: f64, _t: f64) -> f64 {
        0.0
    }
    fn domains(&self) -> (Domain, Domain) {
        (self.0, self.1)
    }
}
