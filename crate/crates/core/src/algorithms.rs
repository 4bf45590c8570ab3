//! The inertial solvers and their discrete growth conditions.
//!
//! * IPAHD: `y_k = x_k + a_k (x_k - x_{k-1}) + h a_k beta_k grad f(x_k)`,
//!   `x_{k+1} = prox_{lambda_k f}(y_k)` with `a_k = k/(k+alpha)` and
//!   `lambda_k = h k (beta_k + h b_k)/(k+alpha)`.
//! * IPAHD-NS: IPAHD run on the Moreau envelope `f_theta`, written with
//!   proximal steps of `f` only.
//! * IGAHD: `y_k = x_k + (1 - alpha/k)(x_k - x_{k-1}) - beta sqrt(s) (g_k - g_{k-1})
//!   - (beta sqrt(s)/k) g_{k-1}`, `x_{k+1} = y_k - s grad f(y_k)`. FISTA is the
//!   `beta = 0` case.
//! * IGAHD-RLS: IGAHD on the metric envelope of a regularized least-squares
//!   problem.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::conditions::{limit_zero_verdict, pointwise_verdict, ConditionCheck, ConditionReport};
use crate::diagnostics::{lyapunov_igahd, lyapunov_ipahd, LyapunovSpec};
use crate::problems::{Objective, ProxFunction};
use crate::prox::{grad_metric_rls, prox_metric_rls, MetricEnvelope, MetricRls, MoreauEnvelope};
use crate::{Error, Result, Vector};

/// A sequence indexed by the iteration counter.
pub type IndexFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Parameters of the implicit discretization: `alpha`, step `h`, and the
/// sequences `beta_k >= 0`, `b_k > 0`.
#[derive(Clone)]
pub struct DiscreteSchedule {
    pub alpha: f64,
    pub h: f64,
    beta: IndexFn,
    b: IndexFn,
}

impl fmt::Debug for DiscreteSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteSchedule")
            .field("alpha", &self.alpha)
            .field("h", &self.h)
            .field("beta_1", &(self.beta)(1))
            .field("b_1", &(self.b)(1))
            .finish()
    }
}

impl DiscreteSchedule {
    pub fn new(
        alpha: f64,
        h: f64,
        beta: impl Fn(usize) -> f64 + Send + Sync + 'static,
        b: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::input(format!("alpha must exceed 1, got {alpha}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::input(format!("step h must be positive, got {h}")));
        }
        Ok(DiscreteSchedule {
            alpha,
            h,
            beta: Arc::new(beta),
            b: Arc::new(b),
        })
    }

    /// `beta_k = beta`, `b_k = b` for all `k`.
    pub fn constant(alpha: f64, h: f64, beta: f64, b: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::input(format!("beta must be nonnegative, got {beta}")));
        }
        if !(b > 0.0) {
            return Err(Error::input(format!("b must be positive, got {b}")));
        }
        Self::new(alpha, h, move |_| beta, move |_| b)
    }

    /// `beta_k = sum_i c_i k^{p_i}` and `b_k = sum_j d_j k^{q_j}`.
    pub fn power_sums(alpha: f64, h: f64, beta: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Self> {
        let (beta, b) = (beta.to_vec(), b.to_vec());
        let eval = |terms: &[(f64, f64)], k: usize| terms.iter().map(|&(c, p)| c * (k as f64).powf(p)).sum::<f64>();
        Self::new(alpha, h, move |k| eval(&beta, k), move |k| eval(&b, k))
    }

    pub fn beta(&self, k: usize) -> f64 {
        (self.beta)(k)
    }

    pub fn b(&self, k: usize) -> f64 {
        (self.b)(k)
    }

    /// `lambda_k = h k (beta_k + h b_k) / (k + alpha)`.
    pub fn prox_step(&self, k: usize) -> f64 {
        let kf = k as f64;
        self.h * kf * (self.beta(k) + self.h * self.b(k)) / (kf + self.alpha)
    }

    /// `a_k = k / (k + alpha)`.
    pub fn inertia(&self, k: usize) -> f64 {
        let kf = k as f64;
        kf / (kf + self.alpha)
    }

    fn check_sequences(&self, k: usize) -> Result<()> {
        let (beta, b) = (self.beta(k), self.b(k));
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::input(format!("beta_{k} = {beta} must be finite and nonnegative")));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::input(format!("b_{k} = {b} must be finite and positive")));
        }
        Ok(())
    }
}

/// `gamma = alpha - lambda - 1`, `B_k` and `delta_k` for one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Growth {
    pub gamma: f64,
    pub b_k: f64,
    pub delta_k: f64,
}

fn check_lambda(alpha: f64, lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= alpha - 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "lambda must lie in (0, alpha - 1] = (0, {}], got {lambda}",
            alpha - 1.0
        )))
    }
}

/// `B_k = k(h b_k + beta_k - beta_{k+1}) - beta_{k+1}` and
/// `delta_k = h((k + 1 + gamma) B_k + gamma (k + 1) beta_{k+1})`.
pub fn compute_growth(sched: &DiscreteSchedule, lambda: f64, k: usize) -> Result<Growth> {
    check_lambda(sched.alpha, lambda)?;
    if k < 1 {
        return Err(Error::input("growth quantities are defined for k >= 1"));
    }
    let gamma = sched.alpha - lambda - 1.0;
    let kf = k as f64;
    let beta_next = sched.beta(k + 1);
    let b_k = kf * (sched.h * sched.b(k) + sched.beta(k) - beta_next) - beta_next;
    let delta_k = sched.h * ((kf + 1.0 + gamma) * b_k + gamma * (kf + 1.0) * beta_next);
    Ok(Growth { gamma, b_k, delta_k })
}

/// Evaluates G1, G2, G1+, G2+ pointwise for `k = 1..=k_max` and G3 as a
/// sampled limit. When `epsilon` or `b_lower` is `None`, the largest value
/// for which the strengthened condition holds wherever the plain one holds
/// strictly is used.
pub fn validate_discrete_conditions(
    sched: &DiscreteSchedule,
    lambda: f64,
    k_max: usize,
    epsilon: Option<f64>,
    b_lower: Option<f64>,
) -> Result<ConditionReport> {
    validate_discrete_conditions_from(sched, lambda, 1, k_max, epsilon, b_lower)
}

/// [`validate_discrete_conditions`] on the index range `k_min..=k_max`.
pub fn validate_discrete_conditions_from(
    sched: &DiscreteSchedule,
    lambda: f64,
    k_min: usize,
    k_max: usize,
    epsilon: Option<f64>,
    b_lower: Option<f64>,
) -> Result<ConditionReport> {
    check_lambda(sched.alpha, lambda)?;
    for (name, v) in [("epsilon", epsilon), ("b_lower", b_lower)] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
    }
    let k_min = k_min.max(1);
    if k_max < k_min + 1 {
        return Err(Error::input("need at least two indices (k_max >= k_min + 1)"));
    }
    let grid: Vec<f64> = (k_min..=k_max).map(|k| k as f64).collect();
    let h = sched.h;
    let mut b = Vec::with_capacity(grid.len());
    let mut b_tol = Vec::with_capacity(grid.len());
    let mut drift = Vec::with_capacity(grid.len());
    let mut tol = Vec::with_capacity(grid.len());
    let mut ratio = Vec::with_capacity(grid.len());
    let mut cur = compute_growth(sched, lambda, k_min)?;
    for k in k_min..=k_max {
        let next = compute_growth(sched, lambda, k + 1)?;
        let kf = k as f64;
        let bn = sched.beta(k + 1).abs();
        b_tol.push(1e-12 * (kf * (h * sched.b(k).abs() + sched.beta(k).abs() + bn) + bn));
        b.push(cur.b_k);
        drift.push(next.delta_k - cur.delta_k - h * lambda * cur.b_k);
        tol.push(1e-12 * (next.delta_k.abs() + cur.delta_k.abs()));
        ratio.push(if cur.b_k > *b_tol.last().expect("pushed above") {
            sched.beta(k + 1) / cur.b_k
        } else {
            f64::INFINITY
        });
        cur = next;
    }
    let n = grid.len();
    let b_lower = b_lower.unwrap_or_else(|| {
        let m = (0..n)
            .filter(|&i| b[i] > b_tol[i])
            .map(|i| b[i])
            .fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            1.0
        }
    });
    let epsilon = epsilon.unwrap_or_else(|| {
        let m = (0..n)
            .filter(|&i| b[i] > b_tol[i] && drift[i] < -tol[i])
            .map(|i| -drift[i] / (h * b[i]))
            .fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            1e-3
        }
    });
    // B_k within roundoff of zero counts as zero.
    let g1: Vec<bool> = (0..n).map(|i| b[i] > b_tol[i]).collect();
    let g2: Vec<bool> = (0..n).map(|i| drift[i] <= tol[i]).collect();
    let g1p: Vec<bool> = b.iter().map(|&x| x >= b_lower).collect();
    let g2p: Vec<bool> = (0..n)
        .map(|i| drift[i] <= -epsilon * h * b[i] + tol[i] + 1e-12 * (epsilon * h * b[i]).abs())
        .collect();
    let check = |name: &str, statement: String, verdict| ConditionCheck {
        name: name.to_string(),
        statement,
        verdict,
    };
    Ok(ConditionReport {
        conditions: vec![
            check("G1", "B_k > 0".into(), pointwise_verdict(&grid, &g1)),
            check(
                "G2",
                "delta_{k+1} - delta_k - h lambda B_k <= 0".into(),
                pointwise_verdict(&grid, &g2),
            ),
            check("G1+", format!("B_k >= {b_lower}"), pointwise_verdict(&grid, &g1p)),
            check(
                "G2+",
                format!("delta_{{k+1}} - delta_k - h lambda B_k <= -{epsilon} h B_k"),
                pointwise_verdict(&grid, &g2p),
            ),
            check(
                "G3",
                "beta_{k+1} / B_k -> 0".into(),
                limit_zero_verdict(&grid, &ratio),
            ),
        ],
        epsilon_used: Some(epsilon),
        grid,
        note: format!(
            "discrete schedule alpha={} h={} lambda={lambda}; verdicts cover the sampled indices only, \
             G3 is judged by decay over the final decade",
            sched.alpha, sched.h
        ),
    })
}

/// Parameters of IGAHD: `alpha >= 3`, `0 <= beta < 2 sqrt(s)`, `s L <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IgahdParams {
    pub alpha: f64,
    pub beta: f64,
    pub s: f64,
}

impl IgahdParams {
    /// Validates the parameters; `lipschitz` is checked against `s L <= 1`
    /// when known.
    pub fn new(alpha: f64, beta: f64, s: f64, lipschitz: Option<f64>) -> Result<Self> {
        if !(alpha >= 3.0) || !alpha.is_finite() {
            return Err(Error::input(format!("IGAHD needs alpha >= 3, got {alpha}")));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::input(format!("step s must be positive, got {s}")));
        }
        if !(beta >= 0.0) || beta >= 2.0 * s.sqrt() {
            return Err(Error::input(format!(
                "IGAHD needs 0 <= beta < 2 sqrt(s) = {}, got beta = {beta}",
                2.0 * s.sqrt()
            )));
        }
        if let Some(l) = lipschitz {
            if s * l > 1.0 + 1e-12 {
                return Err(Error::input(format!(
                    "step violates sL ≤ 1: s = {s}, L = {l}, sL = {}",
                    s * l
                )));
            }
        }
        Ok(IgahdParams { alpha, beta, s })
    }

    /// First iteration index: `ceil(alpha) + 1`, where `1 - alpha/k > 0`.
    pub fn k_start(&self) -> usize {
        self.alpha.ceil() as usize + 1
    }

    /// `t_k = (k - 1)/(alpha - 1)`.
    pub fn t(&self, k: usize) -> f64 {
        (k as f64 - 1.0) / (self.alpha - 1.0)
    }

    fn fista(&self) -> Self {
        IgahdParams { beta: 0.0, ..*self }
    }
}

/// Solver state `(k, x_{k-1}, x_k)` with the cached gradient-like quantity at
/// `x_{k-1}` (the gradient, or the metric-envelope gradient `z_{k-1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub k: usize,
    pub x_prev: Vector,
    pub x_curr: Vector,
    pub grad_prev: Option<Vector>,
}

impl RunState {
    pub fn new(k: usize, x_prev: Vector, x_curr: Vector) -> Result<Self> {
        if k < 1 {
            return Err(Error::input("iteration counter starts at 1"));
        }
        if x_prev.len() != x_curr.len() {
            return Err(Error::input("x_prev and x_curr differ in dimension"));
        }
        Ok(RunState {
            k,
            x_prev,
            x_curr,
            grad_prev: None,
        })
    }

    /// Zero-velocity start `x_{k-1} = x_k = x`.
    pub fn at_rest(k: usize, x: Vector) -> Result<Self> {
        Self::new(k, x.clone(), x)
    }

    pub fn dim(&self) -> usize {
        self.x_curr.len()
    }

    pub fn velocity(&self) -> Vector {
        &self.x_curr - &self.x_prev
    }
}

fn require_prox(obj: &dyn Objective, x: &Vector, step: f64) -> Result<Vector> {
    obj.prox(x, step)
        .ok_or_else(|| Error::capability("IPAHD needs a proximal oracle for f"))
}

/// One IPAHD step.
pub fn ipahd_step(obj: &dyn Objective, sched: &DiscreteSchedule, st: &RunState) -> Result<RunState> {
    let k = st.k;
    sched.check_sequences(k)?;
    let a_k = sched.inertia(k);
    let lam = sched.prox_step(k);
    let beta = sched.beta(k);
    let mut y = &st.x_curr + st.velocity() * a_k;
    if beta != 0.0 {
        y += obj.gradient(&st.x_curr) * (sched.h * a_k * beta);
    }
    let next = require_prox(obj, &y, lam)?;
    Ok(RunState {
        k: k + 1,
        x_prev: st.x_curr.clone(),
        x_curr: next,
        grad_prev: None,
    })
}

/// `mu_k = theta(k+alpha) / (theta(k+alpha) + h k (beta_k + h b_k))`.
pub fn ipahd_ns_weight(sched: &DiscreteSchedule, theta: f64, k: usize) -> f64 {
    let kf = k as f64;
    let num = theta * (kf + sched.alpha);
    num / (num + sched.h * kf * (sched.beta(k) + sched.h * sched.b(k)))
}

/// One IPAHD-NS step for a nonsmooth `f` given through its prox.
pub fn ipahd_ns_step(
    f: &dyn ProxFunction,
    sched: &DiscreteSchedule,
    theta: f64,
    st: &RunState,
) -> Result<RunState> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::input(format!("theta must be positive, got {theta}")));
    }
    let k = st.k;
    sched.check_sequences(k)?;
    let kf = k as f64;
    let damp = 1.0 - sched.alpha / (kf + sched.alpha);
    let mu = ipahd_ns_weight(sched, theta, k);
    // beta is read from the schedule at the current index.
    let beta = sched.beta(k);
    let mut y = &st.x_curr + st.velocity() * damp;
    if beta != 0.0 {
        let p = f.prox(&st.x_curr, theta);
        y += (&st.x_curr - p) * (beta * sched.h / theta * damp);
    }
    let next = &y * mu + f.prox(&y, theta / mu) * (1.0 - mu);
    Ok(RunState {
        k: k + 1,
        x_prev: st.x_curr.clone(),
        x_curr: next,
        grad_prev: None,
    })
}

/// Extrapolation shared by IGAHD and IGAHD-RLS:
/// `x + (1 - alpha/k)(x - x_prev) - beta sqrt(s)(g - g_prev) - (beta sqrt(s)/k) c`.
fn igahd_extrapolate(
    p: &IgahdParams,
    st: &RunState,
    g: &Vector,
    g_prev: &Vector,
    correction: &Vector,
) -> Vector {
    let kf = st.k as f64;
    let a_k = 1.0 - p.alpha / kf;
    let bs = p.beta * p.s.sqrt();
    &st.x_curr + st.velocity() * a_k - (g - g_prev) * bs - correction * (bs / kf)
}

/// One IGAHD step; returns the new state and the extrapolated point `y_k`.
pub fn igahd_step(obj: &dyn Objective, p: &IgahdParams, st: &RunState) -> (RunState, Vector) {
    let g_prev = st
        .grad_prev
        .clone()
        .unwrap_or_else(|| obj.gradient(&st.x_prev));
    let g = obj.gradient(&st.x_curr);
    let y = igahd_extrapolate(p, st, &g, &g_prev, &g_prev);
    let next = &y - obj.gradient(&y) * p.s;
    (
        RunState {
            k: st.k + 1,
            x_prev: st.x_curr.clone(),
            x_curr: next,
            grad_prev: Some(g),
        },
        y,
    )
}

/// FISTA: IGAHD with `beta = 0`.
pub fn fista_step(obj: &dyn Objective, p: &IgahdParams, st: &RunState) -> (RunState, Vector) {
    igahd_step(obj, &p.fista(), st)
}

/// Which metric-envelope gradient enters the `beta sqrt(s)/k` correction of IGAHD-RLS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RlsCorrection {
    /// `z_k`, the current envelope gradient.
    #[default]
    Current,
    /// `z_{k-1}`, which makes the step coincide with IGAHD applied to `f_M`.
    Lagged,
}

/// One IGAHD-RLS step; returns the new state and `y_k`.
pub fn igahd_rls_step(
    mr: &MetricRls,
    p: &IgahdParams,
    correction: RlsCorrection,
    st: &RunState,
) -> (RunState, Vector) {
    let z_prev = st
        .grad_prev
        .clone()
        .unwrap_or_else(|| grad_metric_rls(mr, &st.x_prev));
    let z = grad_metric_rls(mr, &st.x_curr);
    let corr = match correction {
        RlsCorrection::Current => &z,
        RlsCorrection::Lagged => &z_prev,
    };
    let y = igahd_extrapolate(p, st, &z, &z_prev, corr);
    let next = &y * (1.0 - p.s) + prox_metric_rls(mr, &y) * p.s;
    (
        RunState {
            k: st.k + 1,
            x_prev: st.x_curr.clone(),
            x_curr: next,
            grad_prev: Some(z),
        },
        y,
    )
}

/// Solver selection with its parameters.
#[derive(Debug, Clone)]
pub enum Method {
    Ipahd(DiscreteSchedule),
    IpahdNs { schedule: DiscreteSchedule, theta: f64 },
    Igahd(IgahdParams),
    IgahdRls { params: IgahdParams, correction: RlsCorrection },
    /// IGAHD with `beta = 0`, on a smooth problem or on the metric envelope.
    Fista { alpha: f64, s: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ipahd(_) => "ipahd",
            Method::IpahdNs { .. } => "ipahd_ns",
            Method::Igahd(_) => "igahd",
            Method::IgahdRls { .. } => "igahd_rls",
            Method::Fista { .. } => "fista",
        }
    }
}

/// The problem a solver runs on.
#[derive(Clone, Copy)]
pub enum Problem<'a> {
    Smooth(&'a dyn Objective),
    NonSmooth { f: &'a dyn ProxFunction, dim: usize },
    Rls(&'a MetricRls),
}

impl Problem<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Smooth(o) => o.dim(),
            Problem::NonSmooth { dim, .. } => *dim,
            Problem::Rls(mr) => mr.dim(),
        }
    }
}

/// Reference minimum and minimizer used for gaps, distances and Lyapunov values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub f_star: Option<f64>,
    pub x_star: Option<Vector>,
}

/// Optional tolerance-based stops; `max_iter` always applies.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StoppingRule {
    pub gap_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub velocity_tol: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub max_iter: usize,
    pub stop: StoppingRule,
    /// Starting point; zero when absent.
    pub x1: Option<Vector>,
    /// Previous point for IPAHD-type methods; equal to `x1` when absent.
    pub x0: Option<Vector>,
    /// First index for IPAHD-type methods (default 1). IGAHD-type methods
    /// always start at `ceil(alpha) + 1`.
    pub k1: Option<usize>,
    pub reference: Reference,
    /// Lyapunov parameter for IPAHD-type energies; `alpha - 1` when absent.
    pub lyapunov_lambda: Option<f64>,
    /// Keep every iterate in the trace.
    pub keep_iterates: bool,
}

/// One row of a run trace. Quantities refer to `x_k` after the step that
/// produced it; `y_grad_norm` is the gradient norm at the extrapolated point
/// of that step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub f_gap: Option<f64>,
    pub grad_norm: f64,
    pub velocity_norm: f64,
    pub lyapunov: Option<f64>,
    pub y_grad_norm: Option<f64>,
    /// `|x_k - x*|`; kept in memory only, not part of the CSV schema.
    #[serde(skip)]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub method: String,
    pub records: Vec<TraceRecord>,
    pub final_state: RunState,
    pub iterates: Vec<Vector>,
}

/// CSV header of [`RunTrace::to_csv`].
pub const TRACE_CSV_HEADER: &str = "k,f_gap,grad_norm,velocity_norm,lyapunov,y_grad_norm";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                r.k,
                opt(r.f_gap),
                r.grad_norm,
                r.velocity_norm,
                opt(r.lyapunov),
                opt(r.y_grad_norm)
            ));
        }
        out
    }

    /// Parses the CSV written by [`RunTrace::to_csv`]; iterates and
    /// distances are not part of the schema and come back empty.
    pub fn from_csv(method: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRACE_CSV_HEADER) {
            return Err(Error::input("unexpected trace CSV header"));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::input(format!("bad number '{s}': {e}")))
            }
        };
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(Error::input(format!("expected 6 columns in '{line}'")));
            }
            let k = cols[0]
                .parse::<usize>()
                .map_err(|e| Error::input(format!("bad index '{}': {e}", cols[0])))?;
            records.push(TraceRecord {
                k,
                f_gap: parse_opt(cols[1])?,
                grad_norm: parse_opt(cols[2])?.unwrap_or(f64::NAN),
                velocity_norm: parse_opt(cols[3])?.unwrap_or(f64::NAN),
                lyapunov: parse_opt(cols[4])?,
                y_grad_norm: parse_opt(cols[5])?,
                distance: None,
            });
        }
        Ok(RunTrace {
            method: method.to_string(),
            records,
            final_state: RunState::at_rest(1, Vector::zeros(0))?,
            iterates: Vec::new(),
        })
    }
}

fn mismatch(method: &Method) -> Error {
    Error::input(format!("method '{}' does not apply to this problem", method.name()))
}

/// Validates `method` against `problem` and iterates up to `max_iter` steps.
pub fn run_solver(method: &Method, problem: Problem<'_>, opts: &RunOptions) -> Result<RunTrace> {
    let n = problem.dim();
    let x1 = opts.x1.clone().unwrap_or_else(|| Vector::zeros(n));
    if x1.len() != n {
        return Err(Error::input(format!("starting point has length {} but the problem has dimension {n}", x1.len())));
    }
    if let Some(xs) = &opts.reference.x_star {
        if xs.len() != n {
            return Err(Error::input("reference minimizer has the wrong dimension"));
        }
    }

    match (method, problem) {
        (Method::Ipahd(sched), Problem::Smooth(obj)) => {
            if obj.prox(&x1, 1.0).is_none() {
                return Err(Error::capability("IPAHD needs a proximal oracle for f"));
            }
            let lam = opts.lyapunov_lambda.unwrap_or(sched.alpha - 1.0);
            check_lambda(sched.alpha, lam)?;
            let meter = GapMeter::new(|x| obj.value(x), |x, y| obj.value_gap(x, y));
            run_ipahd_family(method.name(), obj, sched, lam, opts, x1, |st| ipahd_step(obj, sched, st), meter, |x| {
                obj.gradient(x)
            })
        }
        (Method::IpahdNs { schedule, theta }, Problem::NonSmooth { f, dim }) => {
            let env = MoreauEnvelope::new(f, *theta, dim)?;
            let lam = opts.lyapunov_lambda.unwrap_or(schedule.alpha - 1.0);
            check_lambda(schedule.alpha, lam)?;
            run_ipahd_family(
                method.name(),
                &env,
                schedule,
                lam,
                opts,
                x1,
                |st| ipahd_ns_step(f, schedule, *theta, st),
                // Gap measured at the prox point, as in the rate statement for f itself.
                GapMeter::new(
                    |x| f.value(&f.prox(x, *theta)),
                    |x, y| f.value(&f.prox(x, *theta)) - f.value(&f.prox(y, *theta)),
                ),
                |x| env.gradient(x),
            )
        }
        (Method::Igahd(p), Problem::Smooth(obj)) => {
            let p = IgahdParams::new(p.alpha, p.beta, p.s, obj.lipschitz())?;
            let meter = GapMeter::new(|x| obj.value(x), |x, y| obj.value_gap(x, y));
            run_igahd_family(method.name(), obj, &p, opts, x1, |st| igahd_step(obj, &p, st), meter)
        }
        (Method::Fista { alpha, s }, Problem::Smooth(obj)) => {
            let p = IgahdParams::new(*alpha, 0.0, *s, obj.lipschitz())?;
            let meter = GapMeter::new(|x| obj.value(x), |x, y| obj.value_gap(x, y));
            run_igahd_family(method.name(), obj, &p, opts, x1, |st| fista_step(obj, &p, st), meter)
        }
        (Method::IgahdRls { params, correction }, Problem::Rls(mr)) => {
            let p = IgahdParams::new(params.alpha, params.beta, params.s, Some(1.0))?;
            let env = MetricEnvelope { rls: mr };
            run_igahd_family(
                method.name(),
                &env,
                &p,
                opts,
                x1,
                |st| igahd_rls_step(mr, &p, *correction, st),
                rls_meter(mr),
            )
        }
        (Method::Fista { alpha, s }, Problem::Rls(mr)) => {
            let p = IgahdParams::new(*alpha, 0.0, *s, Some(1.0))?;
            let env = MetricEnvelope { rls: mr };
            run_igahd_family(
                method.name(),
                &env,
                &p,
                opts,
                x1,
                |st| igahd_rls_step(mr, &p, RlsCorrection::Lagged, st),
                rls_meter(mr),
            )
        }
        _ => Err(mismatch(method)),
    }
}

fn finite_or_fail(method: &str, st: &RunState) -> Result<()> {
    if st.x_curr.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "{method}: non-finite iterate at iteration {}",
            st.k
        )))
    }
}

fn should_stop(rule: &StoppingRule, rec: &TraceRecord) -> bool {
    matches!((rule.gap_tol, rec.f_gap), (Some(t), Some(g)) if g <= t)
        || matches!(rule.grad_tol, Some(t) if rec.grad_norm <= t)
        || matches!(rule.velocity_tol, Some(t) if rec.velocity_norm <= t)
}

/// Reported objective value and its cancellation-free differences.
struct GapMeter<V, D> {
    value: V,
    diff: D,
}

impl<V: Fn(&Vector) -> f64, D: Fn(&Vector, &Vector) -> f64> GapMeter<V, D> {
    fn new(value: V, diff: D) -> Self {
        GapMeter { value, diff }
    }

    /// Gap function for the given reference. With a reference point the gap
    /// is `f(x) - f(x*) + (f(x*) - f*)`, the first part in difference form.
    fn gap_fn<'a>(&'a self, f_star: Option<f64>, x_star: Option<&'a Vector>) -> impl Fn(&Vector) -> Option<f64> + 'a {
        let offset = match (f_star, x_star) {
            (Some(fs), Some(xs)) => Some((self.value)(xs) - fs),
            _ => None,
        };
        move |x| match (f_star, x_star, offset) {
            (_, Some(xs), Some(o)) => Some((self.diff)(x, xs) + o),
            (Some(fs), _, _) => Some((self.value)(x) - fs),
            _ => None,
        }
    }
}

/// The objective reported for metric problems is `f` at the metric prox point.
fn rls_meter(mr: &MetricRls) -> GapMeter<impl Fn(&Vector) -> f64 + '_, impl Fn(&Vector, &Vector) -> f64 + '_> {
    GapMeter::new(
        move |x| mr.instance.value(&prox_metric_rls(mr, x)),
        move |x, y| mr.instance.value_gap(&prox_metric_rls(mr, x), &prox_metric_rls(mr, y)),
    )
}

fn resolve_f_star(obj: &dyn Objective, reference: &Reference) -> Option<f64> {
    reference.f_star.or_else(|| obj.known_minimum())
}

fn resolve_x_star(obj: &dyn Objective, reference: &Reference) -> Option<Vector> {
    reference.x_star.clone().or_else(|| obj.known_minimizer())
}

#[allow(clippy::too_many_arguments)]
fn run_ipahd_family(
    name: &str,
    obj: &dyn Objective,
    sched: &DiscreteSchedule,
    lambda: f64,
    opts: &RunOptions,
    x1: Vector,
    step: impl Fn(&RunState) -> Result<RunState>,
    meter: GapMeter<impl Fn(&Vector) -> f64, impl Fn(&Vector, &Vector) -> f64>,
    gradient: impl Fn(&Vector) -> Vector,
) -> Result<RunTrace> {
    let x0 = opts.x0.clone().unwrap_or_else(|| x1.clone());
    let mut st = RunState::new(opts.k1.unwrap_or(1), x0, x1)?;
    let f_star = resolve_f_star(obj, &opts.reference);
    let x_star = resolve_x_star(obj, &opts.reference);
    let lyap_spec = match (f_star, &x_star) {
        (Some(f), Some(x)) => Some(LyapunovSpec::new(lambda, x.clone(), f)?),
        _ => None,
    };
    let gap = meter.gap_fn(f_star, x_star.as_ref());
    let mut records = Vec::with_capacity(opts.max_iter);
    let mut iterates = Vec::new();
    for _ in 0..opts.max_iter {
        st = step(&st)?;
        finite_or_fail(name, &st)?;
        let g = gradient(&st.x_curr);
        let lyapunov = match &lyap_spec {
            Some(spec) => Some(lyapunov_ipahd(obj, sched, spec, &st)?),
            None => None,
        };
        let rec = TraceRecord {
            k: st.k,
            f_gap: gap(&st.x_curr),
            grad_norm: g.norm(),
            velocity_norm: st.velocity().norm(),
            lyapunov,
            y_grad_norm: None,
            distance: x_star.as_ref().map(|xs| (&st.x_curr - xs).norm()),
        };
        records.push(rec);
        if opts.keep_iterates {
            iterates.push(st.x_curr.clone());
        }
        if should_stop(&opts.stop, &rec) {
            break;
        }
    }
    Ok(RunTrace {
        method: name.to_string(),
        records,
        final_state: st,
        iterates,
    })
}

fn run_igahd_family(
    name: &str,
    obj: &dyn Objective,
    p: &IgahdParams,
    opts: &RunOptions,
    x1: Vector,
    step: impl Fn(&RunState) -> (RunState, Vector),
    meter: GapMeter<impl Fn(&Vector) -> f64, impl Fn(&Vector, &Vector) -> f64>,
) -> Result<RunTrace> {
    let mut st = RunState::at_rest(p.k_start(), x1)?;
    st.grad_prev = Some(obj.gradient(&st.x_prev));
    let f_star = resolve_f_star(obj, &opts.reference);
    let x_star = resolve_x_star(obj, &opts.reference);
    let gap = meter.gap_fn(f_star, x_star.as_ref());
    let mut records = Vec::with_capacity(opts.max_iter);
    let mut iterates = Vec::new();
    for _ in 0..opts.max_iter {
        let (next, y) = step(&st);
        st = next;
        finite_or_fail(name, &st)?;
        let g = obj.gradient(&st.x_curr);
        let lyapunov = match (f_star, &x_star) {
            (Some(fs), Some(xs)) => Some(lyapunov_igahd(obj, p, xs, fs, &st)),
            _ => None,
        };
        let rec = TraceRecord {
            k: st.k,
            f_gap: gap(&st.x_curr),
            grad_norm: g.norm(),
            velocity_norm: st.velocity().norm(),
            lyapunov,
            y_grad_norm: Some(obj.gradient(&y).norm()),
            distance: x_star.as_ref().map(|xs| (&st.x_curr - xs).norm()),
        };
        records.push(rec);
        if opts.keep_iterates {
            iterates.push(st.x_curr.clone());
        }
        if should_stop(&opts.stop, &rec) {
            break;
        }
    }
    Ok(RunTrace {
        method: name.to_string(),
        records,
        final_state: st,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_lasso_instance, L1Norm, Quadratic};
    use crate::prox::{moreau_gradient, prox_of_envelope};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn v(xs: &[f64]) -> Vector {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn growth_examples() {
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        let g = compute_growth(&sched, 3.0, 5).unwrap();
        assert_eq!((g.b_k, g.delta_k, g.gamma), (5.0, 30.0, 0.0));

        let sched = DiscreteSchedule::constant(4.0, 0.1, 0.5, 1.0).unwrap();
        let g = compute_growth(&sched, 3.0, 10).unwrap();
        assert_abs_diff_eq!(g.b_k, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.delta_k, 0.1 * 11.0 * 0.5, epsilon = 1e-14);

        // B_k > 0 iff k > beta/h for constant beta and b = 1.
        let (beta, h) = (0.7, 0.05);
        let sched = DiscreteSchedule::constant(3.0, h, beta, 1.0).unwrap();
        for k in (1..40).filter(|&k| k != 14) {
            let g = compute_growth(&sched, 2.0, k).unwrap();
            assert_eq!(g.b_k > 0.0, (k as f64) * h > beta, "k = {k}");
        }
        assert!(compute_growth(&sched, 2.5, 3).is_err());
        assert!(compute_growth(&sched, 0.0, 3).is_err());
    }

    #[test]
    fn discrete_conditions_zero_beta() {
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        let report = validate_discrete_conditions(&sched, 3.0, 1000, Some(0.5), Some(1.0)).unwrap();
        assert_eq!(report.get("G1"), Some(&crate::conditions::Verdict::Holds));
        assert_eq!(report.get("G1+"), Some(&crate::conditions::Verdict::Holds));
        // Direct recurrence: delta_k = (k+1)k, drift = (2 - lambda)k + 2, so
        // G2 is violated at k = 1 only.
        assert_eq!(
            report.get("G2"),
            Some(&crate::conditions::Verdict::HoldsFrom {
                from: 2.0,
                first_violation: 1.0
            })
        );
        // G2+ with eps = 0.5: -0.5 k + 2 <= 0 from k = 4.
        assert_eq!(report.get("G2+").unwrap().holds_from(1.0), Some(4.0));
        assert!(report.get("G3").unwrap().holds_everywhere());

        let sched = DiscreteSchedule::constant(2.0, 1.0, 0.0, 1.0).unwrap();
        let report = validate_discrete_conditions(&sched, 1.0, 50, Some(0.1), Some(1.0)).unwrap();
        assert_eq!(report.get("G1"), Some(&crate::conditions::Verdict::Holds));
    }

    #[test]
    fn discrete_conditions_first_violation() {
        let sched = DiscreteSchedule::constant(4.0, 0.1, 1.0, 1.0).unwrap();
        let report = validate_discrete_conditions(&sched, 3.0, 200, Some(0.1), Some(0.01)).unwrap();
        let g1 = report.get("G1").unwrap();
        // B_k = 0.1 k - 1 vanishes at k = 10 (up to rounding) and is positive after.
        assert_eq!(g1.first_violation(), Some(1.0));
        let from = g1.holds_from(1.0).unwrap();
        assert!(from == 10.0 || from == 11.0);
        assert_eq!(report.first_violation().unwrap().1, 1.0);
        assert!(validate_discrete_conditions(&sched, 3.0, 1, None, None).is_err());
        assert!(validate_discrete_conditions(&sched, 3.0, 50, Some(-1.0), None).is_err());

        // Automatic epsilon for beta = 0, b = 1, h = 1, lambda = 3: drift = 2 - k,
        // so the largest admissible epsilon is min_{k >= 3} (k - 2)/k = 1/3.
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        let report = validate_discrete_conditions(&sched, 3.0, 100, None, None).unwrap();
        assert_abs_diff_eq!(report.epsilon_used.unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(report.get("G2+").unwrap().holds_from(1.0), Some(3.0));
        assert_eq!(report.get("G1+"), Some(&crate::conditions::Verdict::Holds));
    }

    fn half_square() -> Quadratic {
        Quadratic::new(nalgebra::DMatrix::identity(1, 1), v(&[0.0])).unwrap()
    }

    #[test]
    fn ipahd_step_example() {
        let f = half_square();
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(sched.prox_step(4), 0.5);
        assert_eq!(sched.inertia(4), 0.5);
        let st = RunState::new(4, v(&[1.0]), v(&[0.5])).unwrap();
        let next = ipahd_step(&f, &sched, &st).unwrap();
        assert_eq!(next.k, 5);
        assert_abs_diff_eq!(next.x_curr[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(next.x_prev[0], 0.5);
    }

    #[test]
    fn ipahd_fixed_point_and_pure_inertia() {
        let q = Quadratic::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            v(&[1.0, -1.0]),
        )
        .unwrap();
        let xs = q.known_minimizer().unwrap();
        let sched = DiscreteSchedule::constant(3.5, 0.5, 0.8, 1.0).unwrap();
        let next = ipahd_step(&q, &sched, &RunState::at_rest(7, xs.clone()).unwrap()).unwrap();
        assert_abs_diff_eq!(next.x_curr, xs, epsilon = 1e-13);

        // With beta = 0 the prox argument is the pure inertial point.
        let sched = DiscreteSchedule::constant(3.0, 1.0, 0.0, 1.0).unwrap();
        let st = RunState::new(3, v(&[1.0, 2.0]), v(&[0.5, 1.0])).unwrap();
        let next = ipahd_step(&q, &sched, &st).unwrap();
        let y = &st.x_curr + st.velocity() * 0.5;
        let expect = Objective::prox(&q, &y, sched.prox_step(3)).unwrap();
        assert_eq!(next.x_curr, expect);
    }

    #[test]
    fn ipahd_needs_prox() {
        struct NoProx;
        impl Objective for NoProx {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &Vector) -> f64 {
                x[0].powi(4)
            }
            fn gradient(&self, x: &Vector) -> Vector {
                x.map(|t| 4.0 * t.powi(3))
            }
        }
        let sched = DiscreteSchedule::constant(3.0, 1.0, 0.0, 1.0).unwrap();
        let st = RunState::at_rest(1, v(&[1.0])).unwrap();
        assert!(matches!(ipahd_step(&NoProx, &sched, &st), Err(Error::Capability(_))));
        let opts = RunOptions {
            max_iter: 3,
            ..Default::default()
        };
        assert!(matches!(
            run_solver(&Method::Ipahd(sched), Problem::Smooth(&NoProx), &opts),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn ipahd_satisfies_second_order_recursion() {
        let q = Quadratic::new(
            nalgebra::DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
            v(&[0.5, 1.0]),
        )
        .unwrap();
        let sched = DiscreteSchedule::new(3.5, 0.3, |k| 0.5 + 1.0 / k as f64, |_| 1.0).unwrap();
        let mut st = RunState::new(1, v(&[2.0, -1.0]), v(&[1.5, -0.5])).unwrap();
        for _ in 0..300 {
            let next = ipahd_step(&q, &sched, &st).unwrap();
            let k = st.k as f64;
            let (beta, b, h) = (sched.beta(st.k), sched.b(st.k), sched.h);
            let lhs = &next.x_curr - &st.x_curr * 2.0 + &st.x_prev;
            let rhs = -((&next.x_curr - &st.x_curr) * (sched.alpha / k)
                + q.gradient(&next.x_curr) * (h * (beta + h * b))
                - q.gradient(&st.x_curr) * (h * beta));
            assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + st.x_curr.norm()));
            st = next;
        }
    }

    #[test]
    fn ipahd_ns_weight_example() {
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(ipahd_ns_weight(&sched, 1.0, 4), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ipahd_ns_matches_ipahd_on_envelope() {
        let f = L1Norm { weight: 1.0 };
        let theta = 0.8;
        let env = MoreauEnvelope::new(f, theta, 1).unwrap();
        let sched = DiscreteSchedule::constant(3.5, 0.7, 0.6, 1.0).unwrap();
        let st = RunState::new(3, v(&[2.5]), v(&[1.7])).unwrap();
        let a = ipahd_ns_step(&f, &sched, theta, &st).unwrap();
        let b = ipahd_step(&env, &sched, &st).unwrap();
        assert!((a.x_curr[0] - b.x_curr[0]).abs() <= 1e-10);

        // Same thing spelled out with the envelope formulas.
        let k = st.k as f64;
        let ak = k / (k + sched.alpha);
        let y = &st.x_curr
            + st.velocity() * ak
            + moreau_gradient(&f, &st.x_curr, theta).unwrap() * (sched.h * ak * sched.beta(3));
        let x = prox_of_envelope(&f, &y, sched.prox_step(3), theta).unwrap();
        assert!((a.x_curr[0] - x[0]).abs() <= 1e-10);

        let fixed = ipahd_ns_step(&f, &sched, theta, &RunState::at_rest(5, v(&[0.0])).unwrap()).unwrap();
        assert_eq!(fixed.x_curr, v(&[0.0]));
        assert!(ipahd_ns_step(&f, &sched, 0.0, &st).is_err());
    }

    #[test]
    fn igahd_step_example() {
        let f = half_square();
        let p = IgahdParams::new(4.0, 0.5, 1.0, Some(1.0)).unwrap();
        let st = RunState::new(5, v(&[1.0]), v(&[0.8])).unwrap();
        let (next, y) = igahd_step(&f, &p, &st);
        assert_abs_diff_eq!(y[0], 0.76, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x_curr[0], 0.0, epsilon = 1e-15);
        assert_eq!(next.grad_prev, Some(v(&[0.8])));
    }

    #[test]
    fn igahd_reduces_to_nesterov_without_damping() {
        let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
        let p = IgahdParams::new(4.0, 0.0, 0.1, Some(10.0)).unwrap();
        let st = RunState::new(6, v(&[1.0, 1.0]), v(&[0.9, 0.5])).unwrap();
        let (next, y) = igahd_step(&q, &p, &st);
        let expect_y = &st.x_curr + st.velocity() * (1.0 - 4.0 / 6.0);
        assert_eq!(y, expect_y);
        assert_eq!(next.x_curr, &expect_y - q.gradient(&expect_y) * 0.1);
        let (fnext, _) = fista_step(&q, &IgahdParams { beta: 0.7, ..p }, &st);
        assert_eq!(fnext, next);

        let xs = v(&[0.0, 0.0]);
        let (fixed, y) = igahd_step(&q, &IgahdParams { beta: 0.5, ..p }, &RunState::at_rest(6, xs.clone()).unwrap());
        assert_eq!(y, xs);
        assert_eq!(fixed.x_curr, xs);
    }

    #[test]
    fn igahd_params_validation() {
        assert!(IgahdParams::new(2.9, 0.1, 1.0, None).is_err());
        assert!(IgahdParams::new(3.0, 2.0, 1.0, None).is_err());
        assert!(IgahdParams::new(3.0, -0.1, 1.0, None).is_err());
        let err = IgahdParams::new(3.0, 0.1, 1.0, Some(2.0)).unwrap_err();
        assert!(err.to_string().contains("sL ≤ 1"));
        assert_eq!(IgahdParams::new(4.0, 0.5, 1.0, Some(1.0)).unwrap().k_start(), 5);
        assert_eq!(IgahdParams::new(3.5, 0.5, 1.0, None).unwrap().k_start(), 5);
    }

    fn tiny_rls(weight: f64) -> MetricRls {
        let inst = gen_lasso_instance(3, 5, 2, 0.02, 9).unwrap().with_weight(weight).unwrap();
        MetricRls::new(inst).unwrap()
    }

    #[test]
    fn igahd_rls_zero_regularizer_is_landweber() {
        let mr = tiny_rls(0.0);
        let p = IgahdParams::new(4.0, 0.5, 1.0, Some(1.0)).unwrap();
        let st = RunState::new(6, v(&[0.1, 0.2, 0.0, -0.4, 0.3]), v(&[0.2, 0.1, 0.1, -0.2, 0.2])).unwrap();
        let (next, y) = igahd_rls_step(&mr, &p, RlsCorrection::Current, &st);
        let a = &mr.instance.a;
        let expect = &y + a.tr_mul(&(&mr.instance.b - a * &y)) * mr.lambda;
        assert_abs_diff_eq!(next.x_curr, expect, epsilon = 1e-14);
    }

    #[test]
    fn igahd_rls_matches_composed_igahd() {
        let mr = tiny_rls(0.1);
        let p = IgahdParams::new(4.0, 0.5, 1.0, Some(1.0)).unwrap();
        let st = RunState::new(6, v(&[0.1, 0.2, 0.0, -0.4, 0.3]), v(&[0.2, 0.1, 0.1, -0.2, 0.2])).unwrap();

        // Lagged correction is IGAHD on the metric envelope.
        let (rls, _) = igahd_rls_step(&mr, &p, RlsCorrection::Lagged, &st);
        let (plain, _) = igahd_step(&MetricEnvelope { rls: &mr }, &p, &st);
        assert!((&rls.x_curr - &plain.x_curr).amax() <= 1e-12);

        // Current correction, composed by hand from the prox-calculus operations.
        let (rls, _) = igahd_rls_step(&mr, &p, RlsCorrection::Current, &st);
        let z = grad_metric_rls(&mr, &st.x_curr);
        let zp = grad_metric_rls(&mr, &st.x_prev);
        let bs = p.beta * p.s.sqrt();
        let k = st.k as f64;
        let y = &st.x_curr + st.velocity() * (1.0 - p.alpha / k) - (&z - &zp) * bs - &z * (bs / k);
        let x = &y - grad_metric_rls(&mr, &y) * p.s;
        assert!((&rls.x_curr - &x).amax() <= 1e-12);
    }

    #[test]
    fn run_solver_basics() {
        let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
        let opts = RunOptions {
            max_iter: 0,
            ..Default::default()
        };
        let p = IgahdParams::new(4.0, 0.5, 0.1, Some(10.0)).unwrap();
        let trace = run_solver(&Method::Igahd(p), Problem::Smooth(&q), &opts).unwrap();
        assert!(trace.is_empty());

        let opts = RunOptions {
            max_iter: 300,
            x1: Some(v(&[1.0, 1.0])),
            ..Default::default()
        };
        let fista = run_solver(&Method::Fista { alpha: 4.0, s: 0.1 }, Problem::Smooth(&q), &opts).unwrap();
        let igahd0 = run_solver(
            &Method::Igahd(IgahdParams { beta: 0.0, ..p }),
            Problem::Smooth(&q),
            &opts,
        )
        .unwrap();
        assert_eq!(fista.records, igahd0.records);
        assert_eq!(fista.to_csv(), igahd0.to_csv());

        let bad = IgahdParams { s: 1.0, ..p };
        assert!(run_solver(&Method::Igahd(bad), Problem::Smooth(&q), &opts).is_err());
        let mr = tiny_rls(0.1);
        assert!(run_solver(&Method::Igahd(p), Problem::Rls(&mr), &opts).is_err());
    }

    #[test]
    fn stopping_rules() {
        let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
        let p = IgahdParams::new(4.0, 0.5, 0.1, Some(10.0)).unwrap();
        let opts = RunOptions {
            max_iter: 5000,
            x1: Some(v(&[1.0, 1.0])),
            stop: StoppingRule {
                gap_tol: Some(1e-6),
                ..Default::default()
            },
            ..Default::default()
        };
        let trace = run_solver(&Method::Igahd(p), Problem::Smooth(&q), &opts).unwrap();
        assert!(trace.len() < 5000);
        assert!(trace.records.last().unwrap().f_gap.unwrap() <= 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
        let p = IgahdParams::new(4.0, 0.5, 0.1, Some(10.0)).unwrap();
        let opts = RunOptions {
            max_iter: 20,
            x1: Some(v(&[1.0, 1.0])),
            ..Default::default()
        };
        let trace = run_solver(&Method::Igahd(p), Problem::Smooth(&q), &opts).unwrap();
        let csv = trace.to_csv();
        assert!(csv.starts_with(TRACE_CSV_HEADER));
        let back = RunTrace::from_csv("igahd", &csv).unwrap();
        for (a, b) in trace.records.iter().zip(&back.records) {
            assert_eq!((a.k, a.f_gap, a.grad_norm, a.lyapunov), (b.k, b.f_gap, b.grad_norm, b.lyapunov));
        }
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        let ns = run_solver(
            &Method::IpahdNs { schedule: sched, theta: 1.0 },
            Problem::NonSmooth { f: &L1Norm { weight: 1.0 }, dim: 1 },
            &RunOptions { max_iter: 3, x1: Some(v(&[2.0])), ..Default::default() },
        )
        .unwrap();
        // No reference: gap and Lyapunov columns are empty.
        assert!(ns.to_csv().lines().nth(1).unwrap().starts_with("2,,"));
    }
}
