//! Lyapunov energies, rate fits, summability probes and oscillation counts.

use serde::Serialize;

use crate::algorithms::{compute_growth, DiscreteSchedule, IgahdParams, RunState, RunTrace, TraceRecord};
use crate::dynamics::{w_eval, ContinuousSchedule, TrajectoryPoint};
use crate::problems::Objective;
use crate::{Error, Result, Vector};

/// Gap values below this are treated as numerically zero and left out of fits.
pub const GAP_FLOOR: f64 = 1e-14;

/// Differences smaller than this do not count as direction changes.
pub const OSCILLATION_DEAD_BAND: f64 = 1e-14;

/// Energy parameter `lambda` and the reference pair `(x*, f*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub lambda: f64,
    pub x_star: Vector,
    pub f_star: f64,
}

impl LyapunovSpec {
    pub fn new(lambda: f64, x_star: Vector, f_star: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::input(format!("lambda must be positive, got {lambda}")));
        }
        Ok(LyapunovSpec { lambda, x_star, f_star })
    }

    fn check(&self, alpha: f64) -> Result<()> {
        if self.lambda <= alpha - 1.0 {
            Ok(())
        } else {
            Err(Error::input(format!(
                "lambda = {} exceeds alpha - 1 = {}",
                self.lambda,
                alpha - 1.0
            )))
        }
    }

    /// `c = lambda (alpha - 1 - lambda)`.
    pub fn c(&self, alpha: f64) -> f64 {
        self.lambda * (alpha - 1.0 - self.lambda)
    }
}

/// `f(x) - f*` measured against the reference point, so that the result is
/// accurate relative to the gap rather than to `|f*|`.
pub fn gap_to_reference(obj: &dyn Objective, x: &Vector, x_star: &Vector, f_star: f64) -> f64 {
    obj.value_gap(x, x_star) + (obj.value(x_star) - f_star)
}

/// `E(t) = delta(t)(f(x) - f*) + |lambda(x - x*) + t(x' + beta grad f(x))|^2/2
/// + (c/2)|x - x*|^2` with `delta(t) = t^2 w(t) - (lambda + 1 - alpha) t beta(t)`.
pub fn lyapunov_continuous(
    obj: &dyn Objective,
    cs: &ContinuousSchedule,
    spec: &LyapunovSpec,
    p: &TrajectoryPoint,
) -> Result<f64> {
    spec.check(cs.alpha)?;
    let t = p.t;
    let beta = cs.beta.eval(t);
    let delta = t * t * w_eval(cs, t)? - (spec.lambda + 1.0 - cs.alpha) * t * beta;
    let d = &p.x - &spec.x_star;
    let mut vel = d.clone() * spec.lambda + &p.v * t;
    if beta != 0.0 {
        vel += obj.gradient(&p.x) * (t * beta);
    }
    Ok(delta * gap_to_reference(obj, &p.x, &spec.x_star, spec.f_star)
        + 0.5 * obj.inner(&vel, &vel)
        + 0.5 * spec.c(cs.alpha) * obj.inner(&d, &d))
}

/// `E_k = delta_k (f(x_k) - f*) + |v_k|^2/2 + (c/2)|x_k - x*|^2` with
/// `v_k = lambda(x_k - x*) + k(x_k - x_{k-1} + beta_k h grad f(x_k))`.
pub fn lyapunov_ipahd(
    obj: &dyn Objective,
    sched: &DiscreteSchedule,
    spec: &LyapunovSpec,
    st: &RunState,
) -> Result<f64> {
    spec.check(sched.alpha)?;
    let k = st.k;
    let growth = compute_growth(sched, spec.lambda, k)?;
    let d = &st.x_curr - &spec.x_star;
    let mut vel = st.velocity();
    let beta = sched.beta(k);
    if beta != 0.0 {
        vel += obj.gradient(&st.x_curr) * (beta * sched.h);
    }
    let v = &d * spec.lambda + vel * k as f64;
    Ok(growth.delta_k * gap_to_reference(obj, &st.x_curr, &spec.x_star, spec.f_star)
        + 0.5 * obj.inner(&v, &v)
        + 0.5 * spec.c(sched.alpha) * obj.inner(&d, &d))
}

/// `E_k = t_k^2 (f(x_k) - f*) + |v_k|^2/(2s)` with
/// `v_k = (x_{k-1} - x*) + t_k(x_k - x_{k-1} + beta sqrt(s) grad f(x_{k-1}))`
/// and `t_k = (k-1)/(alpha-1)`.
pub fn lyapunov_igahd(obj: &dyn Objective, p: &IgahdParams, x_star: &Vector, f_star: f64, st: &RunState) -> f64 {
    let t = p.t(st.k);
    let mut inner = st.velocity();
    if p.beta != 0.0 {
        let g_prev = st.grad_prev.clone().unwrap_or_else(|| obj.gradient(&st.x_prev));
        inner += g_prev * (p.beta * p.s.sqrt());
    }
    let v = (&st.x_prev - x_star) + inner * t;
    t * t * gap_to_reference(obj, &st.x_curr, x_star, f_star) + obj.inner(&v, &v) / (2.0 * p.s)
}

/// Reinforced descent inequality residual
/// `f(x+) - [f(x) + <g(y), y - x> - (s/2)|g(y)|^2 - (s/2)|g(x) - g(y)|^2]`,
/// nonpositive whenever `s L <= 1`.
pub fn descent_lemma_residual(obj: &dyn Objective, s: f64, x: &Vector, y: &Vector, x_next: &Vector) -> f64 {
    let gy = obj.gradient(y);
    let gx = obj.gradient(x);
    let diff = &gx - &gy;
    let bound = obj.value(x) + obj.inner(&gy, &(y - x)) - 0.5 * s * obj.inner(&gy, &gy) - 0.5 * s * obj.inner(&diff, &diff);
    obj.value(x_next) - bound
}

/// Trace columns available to the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceField {
    FGap,
    GradNorm,
    VelocityNorm,
    Lyapunov,
    YGradNorm,
    Distance,
}

impl TraceField {
    pub fn name(&self) -> &'static str {
        match self {
            TraceField::FGap => "f_gap",
            TraceField::GradNorm => "grad_norm",
            TraceField::VelocityNorm => "velocity_norm",
            TraceField::Lyapunov => "lyapunov",
            TraceField::YGradNorm => "y_grad_norm",
            TraceField::Distance => "distance",
        }
    }

    pub fn get(&self, r: &TraceRecord) -> Option<f64> {
        match self {
            TraceField::FGap => r.f_gap,
            TraceField::GradNorm => Some(r.grad_norm),
            TraceField::VelocityNorm => Some(r.velocity_norm),
            TraceField::Lyapunov => r.lyapunov,
            TraceField::YGradNorm => r.y_grad_norm,
            TraceField::Distance => r.distance,
        }
    }
}

/// `(k, value)` pairs of one field, skipping unrecorded entries.
pub fn field_series(trace: &RunTrace, field: TraceField) -> (Vec<f64>, Vec<f64>) {
    trace
        .records
        .iter()
        .filter_map(|r| field.get(r).map(|v| (r.k as f64, v)))
        .unzip()
}

/// Least-squares line through `(log k, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub k_range: (f64, f64),
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Fits `log value = intercept + slope log k` over `k_lo <= k <= k_hi`.
/// With `floor = Some(f)`, values below `f` are skipped; otherwise a
/// nonpositive value in range is an error.
pub fn fit_power_law(ks: &[f64], values: &[f64], k_range: (f64, f64), floor: Option<f64>) -> Result<RateFit> {
    let (lo, hi) = k_range;
    if !(hi > 2.0 * lo) || !(lo > 0.0) {
        return Err(Error::input(format!("fit range needs 0 < k_lo and k_hi > 2 k_lo, got ({lo}, {hi})")));
    }
    let mut pts = Vec::new();
    for (&k, &v) in ks.iter().zip(values) {
        if k < lo || k > hi {
            continue;
        }
        match floor {
            Some(f) if !(v >= f) => continue,
            None if !(v > 0.0) => {
                return Err(Error::input(format!(
                    "nonpositive value {v} at k = {k}; fit a gap with a floor instead"
                )))
            }
            _ => {}
        }
        pts.push((k.ln(), v.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::input(format!(
            "only {} usable points in [{lo}, {hi}] (values under the floor are skipped)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::input("fit points share a single abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        k_range,
        residual,
        points: pts.len(),
    })
}

/// Log-log slope of a trace field; gaps use [`GAP_FLOOR`].
pub fn fit_rate_slope(trace: &RunTrace, field: TraceField, k_range: (f64, f64)) -> Result<RateFit> {
    let (ks, vs) = field_series(trace, field);
    let floor = (field == TraceField::FGap).then_some(GAP_FLOOR);
    fit_power_law(&ks, &vs, k_range, floor)
}

/// Weighted partial sum of squares and the share of it from the last decade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummabilityProbe {
    pub total: f64,
    pub tail_fraction: f64,
}

/// `sum_k weight(k) value_k^2` and the fraction of it from `k > K/10`, where
/// `K` is the last index.
pub fn summability_of(ks: &[f64], values: &[f64], weight: impl Fn(f64) -> f64) -> SummabilityProbe {
    let Some(&last) = ks.last() else {
        return SummabilityProbe {
            total: 0.0,
            tail_fraction: 0.0,
        };
    };
    let cut = last / 10.0;
    let (mut total, mut tail) = (0.0, 0.0);
    for (&k, &v) in ks.iter().zip(values) {
        let term = weight(k) * v * v;
        total += term;
        if k > cut {
            tail += term;
        }
    }
    SummabilityProbe {
        total,
        tail_fraction: if total > 0.0 { tail / total } else { 0.0 },
    }
}

pub fn summability_probe(trace: &RunTrace, weight: impl Fn(f64) -> f64, field: TraceField) -> SummabilityProbe {
    let (ks, vs) = field_series(trace, field);
    summability_of(&ks, &vs, weight)
}

/// Number of interior indices where the direction of change flips; changes
/// within [`OSCILLATION_DEAD_BAND`] are ignored.
pub fn count_oscillations(values: &[f64]) -> usize {
    let mut last_sign = 0i8;
    let mut count = 0;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= OSCILLATION_DEAD_BAND || !d.is_finite() {
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if last_sign != 0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}

pub fn count_trace_oscillations(trace: &RunTrace, field: TraceField) -> usize {
    count_oscillations(&field_series(trace, field).1)
}

/// Maximum of `values` over the final decade `[K/10, K]` divided by its
/// maximum over the decade centred (geometrically) between the first and
/// last index. Small ratios indicate decay to zero.
pub fn tail_decay_ratio(ks: &[f64], values: &[f64]) -> Result<f64> {
    let (Some(&first), Some(&last)) = (ks.first(), ks.last()) else {
        return Err(Error::input("empty series"));
    };
    if !(first > 0.0) || last < 1000.0 * first {
        return Err(Error::input(format!(
            "decay test needs an index range spanning three decades, got [{first}, {last}]"
        )));
    }
    let mid = (first * last).sqrt();
    let span = 10f64.sqrt();
    let max_in = |lo: f64, hi: f64| {
        ks.iter()
            .zip(values)
            .filter(|(&k, _)| k >= lo && k <= hi)
            .map(|(_, &v)| v.abs())
            .fold(0.0f64, f64::max)
    };
    let middle = max_in(mid / span, mid * span);
    let fin = max_in(last / 10.0, last);
    if middle == 0.0 {
        return Ok(if fin == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(fin / middle)
}

/// True when no value after index `from_k` exceeds the maximum reached up to
/// `from_k`, i.e. the running maximum is constant afterwards.
pub fn running_max_settles(ks: &[f64], values: &[f64], from_k: f64) -> bool {
    let before = ks
        .iter()
        .zip(values)
        .filter(|(&k, _)| k <= from_k)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    ks.iter()
        .zip(values)
        .filter(|(&k, _)| k > from_k)
        .all(|(_, &v)| v <= before * (1.0 + 1e-12))
}

/// First index `i` with `e[i+1] > e[i] (1 + rel) + abs_slack(i)`, if any.
pub fn first_energy_increase(energies: &[f64], rel: f64, abs_slack: impl Fn(usize) -> f64) -> Option<usize> {
    energies
        .windows(2)
        .enumerate()
        .find(|(i, w)| w[1] > w[0] * (1.0 + rel) + abs_slack(*i))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::DiscreteSchedule;
    use crate::problems::Quadratic;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn v(xs: &[f64]) -> Vector {
        DVector::from_column_slice(xs)
    }

    fn half_square() -> Quadratic {
        Quadratic::new(DMatrix::identity(1, 1), v(&[0.0])).unwrap()
    }

    #[test]
    fn continuous_energy_examples() {
        let f = half_square();
        let cs = ContinuousSchedule::constant(4.0, 1.0, 1.0, 1.0).unwrap();
        let spec = LyapunovSpec::new(3.0, v(&[0.0]), 0.0).unwrap();
        let p = TrajectoryPoint { t: 2.0, x: v(&[1.0]), v: v(&[0.0]) };
        assert_abs_diff_eq!(lyapunov_continuous(&f, &cs, &spec, &p).unwrap(), 13.5, epsilon = 1e-12);
        assert_eq!(spec.c(4.0), 0.0);
        let rest = TrajectoryPoint { t: 5.0, x: v(&[0.0]), v: v(&[0.0]) };
        assert_eq!(lyapunov_continuous(&f, &cs, &spec, &rest).unwrap(), 0.0);
        let big = LyapunovSpec::new(3.5, v(&[0.0]), 0.0).unwrap();
        assert!(lyapunov_continuous(&f, &cs, &big, &p).is_err());
    }

    #[test]
    fn ipahd_energy_examples() {
        let f = half_square();
        let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
        let spec = LyapunovSpec::new(3.0, v(&[0.0]), 0.0).unwrap();
        let st = RunState::new(4, v(&[1.0]), v(&[0.5])).unwrap();
        assert_abs_diff_eq!(lyapunov_ipahd(&f, &sched, &spec, &st).unwrap(), 2.625, epsilon = 1e-12);
        let rest = RunState::at_rest(9, v(&[0.0])).unwrap();
        assert_eq!(lyapunov_ipahd(&f, &sched, &spec, &rest).unwrap(), 0.0);
    }

    #[test]
    fn igahd_energy_examples() {
        let f = half_square();
        let p = IgahdParams::new(4.0, 0.0, 1.0, Some(1.0)).unwrap();
        let st = RunState::new(4, v(&[1.0]), v(&[1.0])).unwrap();
        assert_abs_diff_eq!(lyapunov_igahd(&f, &p, &v(&[0.0]), 0.0, &st), 1.0, epsilon = 1e-15);
        let rest = RunState::at_rest(6, v(&[0.0])).unwrap();
        assert_eq!(lyapunov_igahd(&f, &p, &v(&[0.0]), 0.0, &rest), 0.0);
    }

    #[test]
    fn fits_exact_power_laws() {
        let ks: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        let a: Vec<f64> = ks.iter().map(|k| 7.0 / (k * k)).collect();
        let fit = fit_power_law(&ks, &a, (10.0, 1000.0), None).unwrap();
        assert_abs_diff_eq!(fit.slope, -2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.intercept, 7f64.ln(), epsilon = 1e-9);
        let b: Vec<f64> = ks.iter().map(|k| 3.0 / k).collect();
        assert_abs_diff_eq!(fit_power_law(&ks, &b, (10.0, 1000.0), None).unwrap().slope, -1.0, epsilon = 1e-10);
        let mut c = b.clone();
        c[500] = 0.0;
        assert!(fit_power_law(&ks, &c, (10.0, 1000.0), None).is_err());
        assert!(fit_power_law(&ks, &c, (10.0, 1000.0), Some(GAP_FLOOR)).is_ok());
        assert!(fit_power_law(&ks, &b, (10.0, 15.0), None).is_err());
    }

    #[test]
    fn summability_controls() {
        let ks: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        let ones = vec![1.0; ks.len()];
        let p = summability_of(&ks, &ones, |k| k);
        assert!((p.tail_fraction - 0.99).abs() < 0.001);
        let fast: Vec<f64> = ks.iter().map(|k| k.powf(-2.0)).collect();
        assert!(summability_of(&ks, &fast, |k| k).tail_fraction < 0.01);
    }

    #[test]
    fn oscillation_counts() {
        let mono: Vec<f64> = (0..20).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        assert_eq!(count_oscillations(&mono), 0);
        let alt: Vec<f64> = (0..10).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(count_oscillations(&alt), 8);
        assert_eq!(count_oscillations(&[1.0, 1.0 + 1e-15, 1.0, 0.5]), 0);
    }

    #[test]
    fn tail_decay() {
        let ks: Vec<f64> = (1..=10000).map(|k| k as f64).collect();
        let decaying: Vec<f64> = ks.iter().map(|k| 1.0 / k.sqrt()).collect();
        assert!(tail_decay_ratio(&ks, &decaying).unwrap() < 0.2);
        let flat = vec![1.0; ks.len()];
        assert_eq!(tail_decay_ratio(&ks, &flat).unwrap(), 1.0);
        assert!(tail_decay_ratio(&ks[..50], &flat[..50]).is_err());
    }

    #[test]
    fn running_max() {
        let ks = [1.0, 2.0, 3.0, 4.0];
        assert!(running_max_settles(&ks, &[1.0, 3.0, 2.0, 1.0], 2.0));
        assert!(!running_max_settles(&ks, &[1.0, 3.0, 2.0, 4.0], 2.0));
    }

    #[test]
    fn descent_lemma_holds_for_quadratic_steps() {
        let q = Quadratic::diagonal(&[1.0, 4.0]).unwrap();
        let s = 0.25;
        let (x, y) = (v(&[1.0, -2.0]), v(&[0.3, 0.7]));
        let xn = &y - q.gradient(&y) * s;
        assert!(descent_lemma_residual(&q, s, &x, &y, &xn) <= 1e-12);
    }
}
