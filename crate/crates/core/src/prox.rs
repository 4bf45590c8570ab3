//! Proximal operators, Moreau-envelope identities and the metric proximal
//! machinery for regularized least squares.
//!
//! For a convex `f` and `theta > 0` the Moreau envelope
//! `f_theta(x) = min_z f(z) + |z - x|^2 / (2 theta)` is computed entirely from
//! `prox_{theta f}`:
//!
//! * `f_theta(x) = f(p) + |x - p|^2 / (2 theta)` with `p = prox_{theta f}(x)`,
//! * `grad f_theta(x) = (x - p) / theta`,
//! * `prox_{lambda f_theta}(x) = theta/(lambda+theta) x + lambda/(lambda+theta) prox_{(lambda+theta) f}(x)`.

use nalgebra::DMatrix;

use crate::problems::{Objective, ProxFunction, RlsInstance};
use crate::{Error, Matrix, Result, Vector};

/// Componentwise soft threshold `sign(x_i) max(|x_i| - tau, 0)`.
pub fn prox_l1(x: &Vector, tau: f64) -> Result<Vector> {
    if !(tau > 0.0) {
        return Err(Error::input(format!("soft-threshold level must be positive, got {tau}")));
    }
    Ok(x.map(|v| v.signum() * (v.abs() - tau).max(0.0)))
}

/// Singular-value soft threshold.
pub fn prox_nuclear(x: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau > 0.0) {
        return Err(Error::input(format!("threshold must be positive, got {tau}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("SVD of a non-finite matrix"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Ok(x.clone());
    }
    let mut svd = x.clone().svd(true, true);
    for s in svd.singular_values.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    svd.recompose()
        .map_err(|e| Error::numeric(format!("SVD recomposition failed: {e}")))
}

/// [`prox_nuclear`] on a column-major vectorized `rows x cols` matrix.
pub fn prox_nuclear_vec(x: &Vector, rows: usize, cols: usize, tau: f64) -> Result<Vector> {
    if rows * cols != x.len() {
        return Err(Error::input("shape does not match vector length"));
    }
    let m = DMatrix::from_column_slice(rows, cols, x.as_slice());
    let p = prox_nuclear(&m, tau)?;
    Ok(Vector::from_column_slice(p.as_slice()))
}

/// Solves `(I + lambda Q) z = x + lambda c`, the prox of `z'Qz/2 - c'z`.
pub fn prox_smooth_quadratic(q: &Matrix, c: &Vector, x: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda > 0.0) {
        return Err(Error::input(format!("prox step must be positive, got {lambda}")));
    }
    let n = x.len();
    if q.shape() != (n, n) || c.len() != n {
        return Err(Error::input("dimension mismatch in quadratic prox"));
    }
    let sys = Matrix::identity(n, n) + q * lambda;
    let rhs = x + c * lambda;
    sys.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or_else(|| Error::numeric("I + lambda Q is not positive definite"))
}

/// Envelope and step parameters for the Moreau-envelope identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoreauParams {
    pub theta: f64,
    pub lambda: f64,
}

impl MoreauParams {
    pub fn new(theta: f64, lambda: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        check_positive("lambda", lambda)?;
        Ok(MoreauParams { theta, lambda })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive, got {v}")))
    }
}

pub fn moreau_value(f: &dyn ProxFunction, x: &Vector, theta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    let p = f.prox(x, theta);
    Ok(f.value(&p) + (x - &p).norm_squared() / (2.0 * theta))
}

pub fn moreau_gradient(f: &dyn ProxFunction, x: &Vector, theta: f64) -> Result<Vector> {
    check_positive("theta", theta)?;
    let p = f.prox(x, theta);
    Ok((x - p) / theta)
}

/// `prox_{lambda f_theta}(x)` through the prox of `f` with step `lambda + theta`.
pub fn prox_of_envelope(f: &dyn ProxFunction, x: &Vector, lambda: f64, theta: f64) -> Result<Vector> {
    check_positive("lambda", lambda)?;
    check_positive("theta", theta)?;
    let total = lambda + theta;
    let p = f.prox(x, total);
    Ok(x * (theta / total) + p * (lambda / total))
}

/// The Moreau envelope `f_theta` of a prox-friendly function, as a smooth
/// [`Objective`] with `1/theta`-Lipschitz gradient.
#[derive(Debug, Clone)]
pub struct MoreauEnvelope<F> {
    pub inner: F,
    pub theta: f64,
    dim: usize,
}

impl<F: ProxFunction> MoreauEnvelope<F> {
    pub fn new(inner: F, theta: f64, dim: usize) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(MoreauEnvelope { inner, theta, dim })
    }
}

impl<F: ProxFunction> Objective for MoreauEnvelope<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        moreau_value(&self.inner, x, self.theta).expect("theta validated")
    }

    fn gradient(&self, x: &Vector) -> Vector {
        moreau_gradient(&self.inner, x, self.theta).expect("theta validated")
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0 / self.theta)
    }

    fn prox(&self, x: &Vector, step: f64) -> Option<Vector> {
        prox_of_envelope(&self.inner, x, step, self.theta).ok()
    }
}

/// An [`RlsInstance`] paired with the metric `M = I/lambda - A'A`.
#[derive(Debug, Clone)]
pub struct MetricRls {
    pub instance: RlsInstance,
    pub lambda: f64,
}

impl MetricRls {
    /// Uses the instance's own `lambda_metric`.
    pub fn new(instance: RlsInstance) -> Result<Self> {
        let lambda = instance.lambda_metric;
        Self::with_lambda(instance, lambda)
    }

    pub fn with_lambda(instance: RlsInstance, lambda: f64) -> Result<Self> {
        let l = instance.norm_a_sq();
        if !(lambda > 0.0) || lambda * l >= 1.0 {
            return Err(Error::input(format!(
                "metric needs 0 < lambda |A|^2 < 1, got lambda |A|^2 = {}",
                lambda * l
            )));
        }
        Ok(MetricRls { instance, lambda })
    }

    pub fn dim(&self) -> usize {
        self.instance.n()
    }

    /// `M u = u / lambda - A'A u`.
    pub fn apply_metric(&self, u: &Vector) -> Vector {
        let a = &self.instance.a;
        u / self.lambda - a.tr_mul(&(a * u))
    }

    /// `<Mu, v>`.
    pub fn metric_inner(&self, u: &Vector, v: &Vector) -> f64 {
        let a = &self.instance.a;
        u.dot(v) / self.lambda - (a * u).dot(&(a * v))
    }

    pub fn metric_norm(&self, u: &Vector) -> f64 {
        self.metric_inner(u, u).max(0.0).sqrt()
    }

    /// The dense metric matrix; intended for small instances.
    pub fn metric_matrix(&self) -> Matrix {
        let n = self.dim();
        let a = &self.instance.a;
        Matrix::identity(n, n) / self.lambda - a.tr_mul(a)
    }

    /// Forward step `x + lambda A'(b - Ax)`.
    fn forward(&self, x: &Vector) -> Vector {
        let a = &self.instance.a;
        x + a.tr_mul(&(&self.instance.b - a * x)) * self.lambda
    }

    /// Envelope value `f_M(x) = f(p) + |p - x|_M^2 / 2`, `p = prox_f^M(x)`.
    pub fn envelope_value(&self, x: &Vector) -> f64 {
        let p = prox_metric_rls(self, x);
        let d = &p - x;
        self.instance.value(&p) + 0.5 * self.metric_inner(&d, &d)
    }

    /// `f_M(x) - f_M(y)` with the objective part in difference form.
    pub fn envelope_gap(&self, x: &Vector, y: &Vector) -> f64 {
        let (px, py) = (prox_metric_rls(self, x), prox_metric_rls(self, y));
        let (dx, dy) = (&px - x, &py - y);
        self.instance.value_gap(&px, &py) + 0.5 * (self.metric_inner(&dx, &dx) - self.metric_inner(&dy, &dy))
    }
}

/// `prox_f^M(x) = prox_{lambda g}(x + lambda A'(b - Ax))`.
pub fn prox_metric_rls(mr: &MetricRls, x: &Vector) -> Vector {
    mr.instance
        .regularizer
        .prox(&mr.forward(x), mr.lambda)
}

/// Gradient of `f_M` in the metric `M`: `x - prox_f^M(x)`.
pub fn grad_metric_rls(mr: &MetricRls, x: &Vector) -> Vector {
    x - prox_metric_rls(mr, x)
}

/// The envelope `f_M` as an [`Objective`] living in the metric `M`; its
/// gradient is 1-Lipschitz there.
#[derive(Debug, Clone, Copy)]
pub struct MetricEnvelope<'a> {
    pub rls: &'a MetricRls,
}

impl Objective for MetricEnvelope<'_> {
    fn dim(&self) -> usize {
        self.rls.dim()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.rls.envelope_value(x)
    }

    fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        self.rls.envelope_gap(x, y)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        grad_metric_rls(self.rls, x)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }

    fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        self.rls.metric_inner(u, v)
    }
}
