//! Per-method summaries computed from a trace. Every number here can be
//! recomputed from the trace CSV and the method parameters.

use inertia_hd::algorithms::{validate_discrete_conditions, RunTrace};
use inertia_hd::diagnostics::{
    count_trace_oscillations, field_series, first_energy_increase, fit_rate_slope, summability_probe, TraceField,
};
use serde_json::{json, Value};

use crate::build::BuiltMethod;

pub const LYAPUNOV_REL_SLACK: f64 = 1e-10;
pub const LYAPUNOV_ABS_SLACK: f64 = 1e-12;
/// Floating-point floor of the weighted gap term: `delta_k (f - f*)` cannot be
/// resolved below about `delta_k eps max(1, |f*|)` when `f` has no
/// cancellation-free difference form (nuclear norms).
pub const ROUNDOFF_SLACK: f64 = 64.0 * f64::EPSILON;

/// Default fit window: from a fiftieth of the budget (at least the first
/// recorded index) to the last recorded index.
pub fn default_fit_range(trace: &RunTrace, max_iter: usize) -> (f64, f64) {
    let first = trace.records.first().map(|r| r.k).unwrap_or(1) as f64;
    let last = trace.records.last().map(|r| r.k).unwrap_or(1) as f64;
    (first.max(max_iter as f64 / 50.0), last)
}

fn fit_json(trace: &RunTrace, field: TraceField, range: (f64, f64)) -> Value {
    match fit_rate_slope(trace, field, range) {
        Ok(fit) => json!(fit),
        Err(e) => json!({"error": e.to_string()}),
    }
}

/// Energy check: the index of the first step with
/// `E_{k+1} > E_k (1 + rel) + abs + roundoff * delta_{k+1} max(1, |f*|)`, if any.
pub fn lyapunov_check(trace: &RunTrace, method: &BuiltMethod, f_star: f64) -> Value {
    let (ks, es) = field_series(trace, TraceField::Lyapunov);
    if es.is_empty() {
        return json!({"checked": false});
    }
    let floor = ROUNDOFF_SLACK * f_star.abs().max(1.0);
    let first = first_energy_increase(&es, LYAPUNOV_REL_SLACK, |i| {
        LYAPUNOV_ABS_SLACK + floor * method.gap_weight(ks[i + 1] as usize)
    });
    json!({
        "checked": true,
        "monotone": first.is_none(),
        "first_increase_k": first.map(|i| ks[i + 1]),
        "rel_slack": LYAPUNOV_REL_SLACK,
        "abs_slack": LYAPUNOV_ABS_SLACK,
        "roundoff_slack": floor,
    })
}

pub fn analyze(trace: &RunTrace, method: &BuiltMethod, fit_range: (f64, f64), f_star: f64) -> Value {
    let last = trace.records.last();
    let condition_report = method.schedule().map(|s| {
        let k_max = last.map(|r| r.k).unwrap_or(2).max(2);
        let lambda = method.lyapunov_lambda.unwrap_or(s.alpha - 1.0);
        match validate_discrete_conditions(s, lambda, k_max, None, None) {
            Ok(rep) => json!({
                "conditions": rep.conditions,
                "epsilon_used": rep.epsilon_used,
                "k_range": [rep.grid.first(), rep.grid.last()],
                "note": rep.note,
            }),
            Err(e) => json!({"error": e.to_string()}),
        }
    });
    json!({
        "rate_fits": {
            "f_gap": fit_json(trace, TraceField::FGap, fit_range),
            "velocity_norm": fit_json(trace, TraceField::VelocityNorm, fit_range),
        },
        "oscillations": {"f_gap": count_trace_oscillations(trace, TraceField::FGap)},
        "summability": {
            "velocity_norm_k_weighted": summability_probe(trace, |k| k, TraceField::VelocityNorm),
            "y_grad_norm_k2_weighted": trace
                .records
                .iter()
                .any(|r| r.y_grad_norm.is_some())
                .then(|| summability_probe(trace, |k| k * k, TraceField::YGradNorm)),
        },
        "lyapunov": lyapunov_check(trace, method, f_star),
        "condition_report": condition_report,
        "final": last.map(|r| json!({
            "k": r.k,
            "f_gap": r.f_gap,
            "grad_norm": r.grad_norm,
            "velocity_norm": r.velocity_norm,
        })),
        "iterations": trace.records.len(),
    })
}
