//! Objective abstractions, synthetic regularized least-squares generators and
//! gradient-correctness utilities.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::prox::{prox_l1, prox_nuclear_vec, prox_smooth_quadratic};
use crate::{Error, Matrix, Result, Vector};

/// A convex objective on `R^n`.
///
/// Only `value` and `gradient` are mandatory. The optional oracles return
/// `None` when the objective does not provide them; operations that need
/// them report [`Error::Capability`].
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    /// `f(x) - f(y)`. Objectives override this with a form that avoids
    /// cancelling two large values when `x` and `y` are close.
    fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        self.value(x) - self.value(y)
    }

    /// Gradient with respect to the inner product [`Objective::inner`].
    fn gradient(&self, x: &Vector) -> Vector;

    fn hessian_vec(&self, _x: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }

    /// Lipschitz constant of the gradient, in the objective's own metric.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// `argmin_z f(z) + |z - x|^2 / (2 step)`.
    fn prox(&self, _x: &Vector, _step: f64) -> Option<Vector> {
        None
    }

    fn known_minimum(&self) -> Option<f64> {
        None
    }

    fn known_minimizer(&self) -> Option<Vector> {
        None
    }

    /// Inner product of the space the objective lives in. Euclidean unless
    /// the objective is defined in a weighted metric.
    fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(v)
    }

    fn norm(&self, u: &Vector) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }
}

/// A (possibly nonsmooth) convex function known through its value and its
/// proximal map.
pub trait ProxFunction {
    fn value(&self, x: &Vector) -> f64;

    /// `prox_{step f}(x)`.
    fn prox(&self, x: &Vector, step: f64) -> Vector;
}

impl<T: ProxFunction + ?Sized> ProxFunction for &T {
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }

    fn prox(&self, x: &Vector, step: f64) -> Vector {
        (**self).prox(x, step)
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).value_gap(x, y)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn hessian_vec(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        (**self).hessian_vec(x, v)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
    fn prox(&self, x: &Vector, step: f64) -> Option<Vector> {
        (**self).prox(x, step)
    }
    fn known_minimum(&self) -> Option<f64> {
        (**self).known_minimum()
    }
    fn known_minimizer(&self) -> Option<Vector> {
        (**self).known_minimizer()
    }
    fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        (**self).inner(u, v)
    }
}

/// `value = x'Qx/2 - c'x`, `grad = Qx - c`.
pub fn quadratic_value_grad(q: &Matrix, c: &Vector, x: &Vector) -> Result<(f64, Vector)> {
    if !q.is_square() || q.nrows() != c.len() || c.len() != x.len() {
        return Err(Error::input(format!(
            "dimension mismatch: Q is {}x{}, c has {}, x has {}",
            q.nrows(),
            q.ncols(),
            c.len(),
            x.len()
        )));
    }
    let qx = q * x;
    let value = 0.5 * x.dot(&qx) - c.dot(x);
    Ok((value, qx - c))
}

/// The quadratic `f(x) = x'Qx/2 - c'x` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: Matrix,
    c: Vector,
    lipschitz: f64,
    minimizer: Option<Vector>,
    minimum: Option<f64>,
}

impl Quadratic {
    pub fn new(q: Matrix, c: Vector) -> Result<Self> {
        if !q.is_square() || q.nrows() != c.len() {
            return Err(Error::input("Q must be square and match the length of c"));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * (1.0 + q.amax()) {
            return Err(Error::input("Q must be symmetric"));
        }
        let eig = q.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max().max(0.0);
        if lmin < -1e-12 * (1.0 + lmax) {
            return Err(Error::input("Q must be positive semidefinite"));
        }
        // A minimizer is only recorded when Q is nonsingular.
        let (minimizer, minimum) = match q.clone().cholesky() {
            Some(chol) if lmin > 1e-14 * (1.0 + lmax) => {
                let xs = chol.solve(&c);
                let fs = -0.5 * c.dot(&xs);
                (Some(xs), Some(fs))
            }
            _ => (None, None),
        };
        Ok(Quadratic {
            q,
            c,
            lipschitz: lmax,
            minimizer,
            minimum,
        })
    }

    /// `diag(d)` with linear term zero, minimized at the origin.
    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            DVector::zeros(n),
        )
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) - self.c.dot(x)
    }

    fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        let d = x - y;
        0.5 * d.dot(&(&self.q * (x + y))) - self.c.dot(&d)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.q * x - &self.c
    }

    fn hessian_vec(&self, _x: &Vector, v: &Vector) -> Option<Vector> {
        Some(&self.q * v)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn prox(&self, x: &Vector, step: f64) -> Option<Vector> {
        prox_smooth_quadratic(&self.q, &self.c, x, step).ok()
    }

    fn known_minimum(&self) -> Option<f64> {
        self.minimum
    }

    fn known_minimizer(&self) -> Option<Vector> {
        self.minimizer.clone()
    }
}

impl ProxFunction for Quadratic {
    fn value(&self, x: &Vector) -> f64 {
        Objective::value(self, x)
    }

    fn prox(&self, x: &Vector, step: f64) -> Vector {
        prox_smooth_quadratic(&self.q, &self.c, x, step).expect("PSD quadratic prox")
    }
}

/// `weight * |x|_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    pub weight: f64,
}

impl ProxFunction for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }

    fn prox(&self, x: &Vector, step: f64) -> Vector {
        if self.weight == 0.0 {
            return x.clone();
        }
        prox_l1(x, step * self.weight).expect("positive threshold")
    }
}

/// Maximum over coordinates of `|g_i - d_i| / max(1, |g_i|)` where `g` is the
/// analytic gradient and `d` the central difference with the given step.
pub fn finite_diff_gradient_check(obj: &dyn Objective, x: &Vector, step: f64) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::input("finite-difference step must be positive"));
    }
    let g = obj.gradient(x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite analytic gradient"));
    }
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + step;
        let fp = obj.value(&probe);
        probe[i] = xi - step;
        let fm = obj.value(&probe);
        probe[i] = xi;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite objective value near coordinate {i}"
            )));
        }
        let fd = (fp - fm) / (2.0 * step);
        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
    }
    Ok(worst)
}

/// Largest eigenvalue of `A'A` by power iteration (relative tolerance 1e-8,
/// at most 1000 iterations).
pub fn spectral_norm_sq(a: &Matrix) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..1000 {
        let w = a.tr_mul(&(a * &v));
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        let done = (next - est).abs() <= 1e-8 * next.abs();
        est = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient of the final vector.
    let av = a * &v;
    av.dot(&av).max(est)
}

/// The regularizer `g` of a regularized least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regularizer {
    None,
    L1 { weight: f64 },
    /// Nuclear norm of the `rows x cols` matrix stored column-major in `x`.
    Nuclear { weight: f64, rows: usize, cols: usize },
}

impl Regularizer {
    pub fn weight(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } | Regularizer::Nuclear { weight, .. } => weight,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::L1 { .. } => "l1",
            Regularizer::Nuclear { .. } => "nuclear",
        }
    }
}

impl ProxFunction for Regularizer {
    fn value(&self, x: &Vector) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } => weight * x.lp_norm(1),
            Regularizer::Nuclear { weight, rows, cols } => {
                let m = DMatrix::from_column_slice(rows, cols, x.as_slice());
                weight * m.singular_values().sum()
            }
        }
    }

    fn prox(&self, x: &Vector, step: f64) -> Vector {
        let tau = step * self.weight();
        if tau <= 0.0 {
            return x.clone();
        }
        match *self {
            Regularizer::None => x.clone(),
            Regularizer::L1 { .. } => prox_l1(x, tau).expect("positive threshold"),
            Regularizer::Nuclear { rows, cols, .. } => {
                prox_nuclear_vec(x, rows, cols, tau).expect("SVD of a finite matrix")
            }
        }
    }
}

/// `min_x |b - Ax|^2 / 2 + g(x)` together with the metric parameter used by
/// the metric-envelope machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsInstance {
    pub a: Matrix,
    pub b: Vector,
    pub regularizer: Regularizer,
    pub lambda_metric: f64,
    pub ground_truth: Option<Vector>,
    pub seed: Option<u64>,
    norm_a_sq: f64,
}

/// Default fraction of `1/|A|^2` used for the metric parameter.
pub const DEFAULT_METRIC_FRACTION: f64 = 0.9;

impl RlsInstance {
    pub fn new(a: Matrix, b: Vector, regularizer: Regularizer) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::input(format!(
                "A has {} rows but b has length {}",
                a.nrows(),
                b.len()
            )));
        }
        if let Regularizer::Nuclear { rows, cols, .. } = regularizer {
            if rows * cols != a.ncols() {
                return Err(Error::input("nuclear-norm shape does not match A's columns"));
            }
        }
        if regularizer.weight() < 0.0 || !regularizer.weight().is_finite() {
            return Err(Error::input("regularizer weight must be nonnegative"));
        }
        let norm_a_sq = spectral_norm_sq(&a);
        if !(norm_a_sq > 0.0) {
            return Err(Error::input("A must be nonzero"));
        }
        Ok(RlsInstance {
            a,
            b,
            regularizer,
            lambda_metric: DEFAULT_METRIC_FRACTION / norm_a_sq,
            ground_truth: None,
            seed: None,
            norm_a_sq,
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `|A|^2`, the Lipschitz constant of the least-squares gradient.
    pub fn norm_a_sq(&self) -> f64 {
        self.norm_a_sq
    }

    pub fn with_lambda_metric(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || lambda * self.norm_a_sq >= 1.0 {
            return Err(Error::input(format!(
                "lambda_metric must satisfy 0 < lambda |A|^2 < 1 (|A|^2 = {})",
                self.norm_a_sq
            )));
        }
        self.lambda_metric = lambda;
        Ok(self)
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::input("regularizer weight must be nonnegative"));
        }
        self.regularizer = match self.regularizer {
            Regularizer::None | Regularizer::L1 { .. } if weight == 0.0 => Regularizer::None,
            Regularizer::None | Regularizer::L1 { .. } => Regularizer::L1 { weight },
            Regularizer::Nuclear { rows, cols, .. } => Regularizer::Nuclear { weight, rows, cols },
        };
        Ok(self)
    }

    pub fn smooth_part(&self) -> LeastSquares<'_> {
        LeastSquares { inst: self }
    }

    /// `f(x) = |b - Ax|^2 / 2 + g(x)`.
    pub fn value(&self, x: &Vector) -> f64 {
        let r = &self.b - &self.a * x;
        0.5 * r.norm_squared() + self.regularizer.value(x)
    }

    /// `|b - Ax|^2/2 - |b - Ay|^2/2` as `<A(y - x), r_x + r_y>/2`.
    fn residual_gap(&self, x: &Vector, y: &Vector) -> f64 {
        let rx = &self.b - &self.a * x;
        let ry = &self.b - &self.a * y;
        0.5 * (&self.a * (y - x)).dot(&(rx + ry))
    }

    /// `f(x) - f(y)` without subtracting the two objective values.
    pub fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        let g = match self.regularizer {
            Regularizer::L1 { weight } => weight * x.iter().zip(y.iter()).map(|(a, b)| a.abs() - b.abs()).sum::<f64>(),
            _ => self.regularizer.value(x) - self.regularizer.value(y),
        };
        self.residual_gap(x, y) + g
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = RlsDocument::from(self);
        serde_json::to_value(doc).expect("plain data serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: RlsDocument = serde_json::from_value(value.clone())
            .map_err(|e| Error::input(format!("malformed instance document: {e}")))?;
        doc.try_into()
    }
}

/// The smooth part `|b - Ax|^2 / 2` of an [`RlsInstance`].
#[derive(Debug, Clone, Copy)]
pub struct LeastSquares<'a> {
    inst: &'a RlsInstance,
}

impl Objective for LeastSquares<'_> {
    fn dim(&self) -> usize {
        self.inst.n()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.inst.b - &self.inst.a * x).norm_squared()
    }

    fn value_gap(&self, x: &Vector, y: &Vector) -> f64 {
        self.inst.residual_gap(x, y)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.inst.a.tr_mul(&(&self.inst.a * x - &self.inst.b))
    }

    fn hessian_vec(&self, _x: &Vector, v: &Vector) -> Option<Vector> {
        Some(self.inst.a.tr_mul(&(&self.inst.a * v)))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.inst.norm_a_sq)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RlsDocument {
    m: usize,
    n: usize,
    seed: Option<u64>,
    regularizer: String,
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<(usize, usize)>,
    lambda_metric: f64,
    #[serde(rename = "A")]
    a: Vec<f64>,
    b: Vec<f64>,
    ground_truth: Option<Vec<f64>>,
}

impl From<&RlsInstance> for RlsDocument {
    fn from(inst: &RlsInstance) -> Self {
        let (m, n) = inst.a.shape();
        let mut row_major = Vec::with_capacity(m * n);
        for i in 0..m {
            row_major.extend(inst.a.row(i).iter().copied());
        }
        let shape = match inst.regularizer {
            Regularizer::Nuclear { rows, cols, .. } => Some((rows, cols)),
            _ => None,
        };
        RlsDocument {
            m,
            n,
            seed: inst.seed,
            regularizer: inst.regularizer.tag().to_string(),
            weight: inst.regularizer.weight(),
            shape,
            lambda_metric: inst.lambda_metric,
            a: row_major,
            b: inst.b.as_slice().to_vec(),
            ground_truth: inst.ground_truth.as_ref().map(|g| g.as_slice().to_vec()),
        }
    }
}

impl TryFrom<RlsDocument> for RlsInstance {
    type Error = Error;

    fn try_from(doc: RlsDocument) -> Result<Self> {
        if doc.a.len() != doc.m * doc.n || doc.b.len() != doc.m {
            return Err(Error::input("array sizes disagree with m and n"));
        }
        let regularizer = match (doc.regularizer.as_str(), doc.shape) {
            ("none", _) => Regularizer::None,
            ("l1", _) => Regularizer::L1 { weight: doc.weight },
            ("nuclear", Some((rows, cols))) => Regularizer::Nuclear {
                weight: doc.weight,
                rows,
                cols,
            },
            ("nuclear", None) => return Err(Error::input("nuclear regularizer needs a shape")),
            (other, _) => return Err(Error::input(format!("unknown regularizer '{other}'"))),
        };
        let a = DMatrix::from_row_slice(doc.m, doc.n, &doc.a);
        let mut inst = RlsInstance::new(a, DVector::from_vec(doc.b), regularizer)?
            .with_lambda_metric(doc.lambda_metric)?;
        inst.seed = doc.seed;
        if let Some(g) = doc.ground_truth {
            if g.len() != doc.n {
                return Err(Error::input("ground truth length differs from n"));
            }
            inst.ground_truth = Some(DVector::from_vec(g));
        }
        Ok(inst)
    }
}

/// Default l1 weight of generated lasso instances.
pub const DEFAULT_LASSO_WEIGHT: f64 = 0.05;
/// Default nuclear-norm weight of generated low-rank instances.
pub const DEFAULT_NUCLEAR_WEIGHT: f64 = 0.05;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    // Row-major draw order keeps the stream independent of storage layout.
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let z: f64 = StandardNormal.sample(rng);
        data.push(z * scale);
    }
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Sparse recovery instance: Gaussian `A / sqrt(m)`, a `sparsity`-sparse
/// ground truth with standard-normal nonzeros, `b = A x + noise * e`.
pub fn gen_lasso_instance(
    m: usize,
    n: usize,
    sparsity: usize,
    noise: f64,
    seed: u64,
) -> Result<RlsInstance> {
    if m < 1 || m > n {
        return Err(Error::input(format!("need 1 <= m <= n, got m={m}, n={n}")));
    }
    if sparsity > n {
        return Err(Error::input(format!("sparsity {sparsity} exceeds n={n}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::input("noise must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m, n, 1.0 / (m as f64).sqrt());

    // Partial Fisher-Yates for the support.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..sparsity {
        let j = i + rand::Rng::random_range(&mut rng, 0..(n - i));
        idx.swap(i, j);
    }
    let mut truth = DVector::zeros(n);
    for &i in &idx[..sparsity] {
        let z: f64 = StandardNormal.sample(&mut rng);
        // Keep nonzeros away from zero so the support is unambiguous.
        truth[i] = z + z.signum();
    }
    let mut b = &a * &truth;
    if noise > 0.0 {
        for bi in b.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *bi += noise * z;
        }
    }
    let mut inst = RlsInstance::new(
        a,
        b,
        Regularizer::L1 {
            weight: DEFAULT_LASSO_WEIGHT,
        },
    )?;
    inst.ground_truth = Some(truth);
    inst.seed = Some(seed);
    Ok(inst)
}

/// Low-rank recovery instance: `X = U V'` with Gaussian `p x rank` and
/// `q x rank` factors, observed through `m` Gaussian measurements of
/// `vec(X)` (column-major), noiseless.
pub fn gen_lowrank_instance(
    p: usize,
    q: usize,
    rank: usize,
    m: usize,
    seed: u64,
) -> Result<RlsInstance> {
    if rank < 1 || rank > p.min(q) {
        return Err(Error::input(format!(
            "rank {rank} outside [1, min(p, q)] = [1, {}]",
            p.min(q)
        )));
    }
    if m < 1 || m > p * q {
        return Err(Error::input(format!("need 1 <= m <= p*q = {}", p * q)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gaussian_matrix(&mut rng, p, rank, 1.0);
    let v = gaussian_matrix(&mut rng, q, rank, 1.0);
    let x = &u * v.transpose();
    let truth = DVector::from_column_slice(x.as_slice());
    let a = gaussian_matrix(&mut rng, m, p * q, 1.0 / (m as f64).sqrt());
    let b = &a * &truth;
    let mut inst = RlsInstance::new(
        a,
        b,
        Regularizer::Nuclear {
            weight: DEFAULT_NUCLEAR_WEIGHT,
            rows: p,
            cols: q,
        },
    )?;
    inst.ground_truth = Some(truth);
    inst.seed = Some(seed);
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_examples() {
        let (v, g) =
            quadratic_value_grad(&DMatrix::identity(2, 2), &DVector::zeros(2), &DVector::from_vec(vec![1.0, 1.0]))
                .unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g, DVector::from_vec(vec![1.0, 1.0]));

        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0]));
        let (v, g) = quadratic_value_grad(&q, &DVector::zeros(2), &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, DVector::from_vec(vec![1.0, 0.0]));

        let (v, g) = quadratic_value_grad(
            &DMatrix::identity(1, 1),
            &DVector::from_vec(vec![2.0]),
            &DVector::from_vec(vec![3.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(v, -1.5, epsilon = 1e-15);
        assert_eq!(g[0], 1.0);
        // Central difference of the scalar quadratic at 3.
        let f = |z: f64| 0.5 * z * z - 2.0 * z;
        assert_abs_diff_eq!((f(3.0 + 1e-6) - f(3.0 - 1e-6)) / 2e-6, g[0], epsilon = 1e-8);
    }

    #[test]
    fn quadratic_dimension_mismatch() {
        let err = quadratic_value_grad(&DMatrix::identity(2, 2), &DVector::zeros(3), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(Quadratic::new(q, DVector::zeros(2)).is_err());
    }

    #[test]
    fn finite_difference_checks() {
        let quad = Quadratic::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert!(finite_diff_gradient_check(&quad, &x, 1e-5).unwrap() <= 1e-7);
        assert!(matches!(
            finite_diff_gradient_check(&quad, &x, 0.0),
            Err(Error::Input(_))
        ));

        let inst = gen_lasso_instance(20, 40, 4, 0.0, 3).unwrap();
        let x = DVector::from_fn(40, |i, _| ((i * 7 % 11) as f64 - 5.0) / 5.0);
        assert!(finite_diff_gradient_check(&inst.smooth_part(), &x, 1e-5).unwrap() <= 1e-5);
    }

    #[test]
    fn lasso_generator_contract() {
        let inst = gen_lasso_instance(50, 200, 10, 0.0, 7).unwrap();
        let truth = inst.ground_truth.as_ref().unwrap();
        assert_eq!(truth.iter().filter(|v| **v != 0.0).count(), 10);
        assert_eq!((&inst.b - &inst.a * truth).norm(), 0.0);

        let again = gen_lasso_instance(50, 200, 10, 0.0, 7).unwrap();
        assert_eq!(inst.a, again.a);
        assert_eq!(inst.b, again.b);

        let noisy = gen_lasso_instance(50, 200, 10, 0.01, 7).unwrap();
        let resid = (&noisy.b - &noisy.a * noisy.ground_truth.as_ref().unwrap()).norm();
        assert!(resid > 0.0 && resid <= 0.01 * (50f64).sqrt() * 5.0);
    }

    #[test]
    fn lasso_generator_rejects_bad_dims() {
        assert!(gen_lasso_instance(0, 10, 1, 0.0, 1).is_err());
        assert!(gen_lasso_instance(20, 10, 1, 0.0, 1).is_err());
        assert!(gen_lasso_instance(5, 10, 11, 0.0, 1).is_err());
        assert!(gen_lasso_instance(5, 10, 1, -1.0, 1).is_err());
    }

    #[test]
    fn lowrank_generator_contract() {
        let inst = gen_lowrank_instance(10, 10, 2, 60, 1).unwrap();
        let truth = inst.ground_truth.as_ref().unwrap();
        let x = DMatrix::from_column_slice(10, 10, truth.as_slice());
        let sv = x.singular_values();
        let big = sv.iter().filter(|s| **s > 1e-8 * sv.max()).count();
        assert_eq!(big, 2);
        assert_eq!((&inst.b - &inst.a * truth).norm(), 0.0);
        let again = gen_lowrank_instance(10, 10, 2, 60, 1).unwrap();
        assert_eq!(inst.a, again.a);
        assert!(gen_lowrank_instance(10, 10, 0, 60, 1).is_err());
        assert!(gen_lowrank_instance(10, 10, 11, 60, 1).is_err());
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let inst = gen_lasso_instance(12, 30, 3, 0.0, 11).unwrap();
        let ata = inst.a.tr_mul(&inst.a);
        let direct = ata.symmetric_eigen().eigenvalues.max();
        assert!((inst.norm_a_sq() - direct).abs() <= 1e-6 * direct);
    }

    #[test]
    fn json_round_trip() {
        let inst = gen_lasso_instance(6, 9, 2, 0.01, 5).unwrap();
        let doc = inst.to_json();
        assert_eq!(doc["m"], 6);
        assert_eq!(doc["regularizer"], "l1");
        assert_eq!(doc["A"].as_array().unwrap().len(), 54);
        assert_eq!(doc["A"][1].as_f64().unwrap(), inst.a[(0, 1)]);
        let back = RlsInstance::from_json(&doc).unwrap();
        assert_eq!(back.a, inst.a);
        assert_eq!(back.b, inst.b);
        assert_eq!(back.lambda_metric, inst.lambda_metric);
        assert_eq!(back.ground_truth, inst.ground_truth);

        let lr = gen_lowrank_instance(3, 4, 1, 8, 2).unwrap();
        let back = RlsInstance::from_json(&lr.to_json()).unwrap();
        assert_eq!(back.regularizer, lr.regularizer);
    }

    #[test]
    fn lambda_metric_bounds() {
        let inst = gen_lasso_instance(6, 9, 2, 0.0, 5).unwrap();
        let l = inst.norm_a_sq();
        assert!(inst.clone().with_lambda_metric(1.0 / l).is_err());
        assert!(inst.clone().with_lambda_metric(0.0).is_err());
        assert!(inst.with_lambda_metric(0.5 / l).is_ok());
    }
}
