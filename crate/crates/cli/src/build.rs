//! Turns config blocks into problems, solver methods and references.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use inertia_hd::algorithms::{
    compute_growth, run_solver, DiscreteSchedule, IgahdParams, Method, Problem, Reference, RlsCorrection,
    RunOptions, StoppingRule,
};
use inertia_hd::problems::{gen_lasso_instance, gen_lowrank_instance, L1Norm, Objective, ProxFunction, Quadratic};
use inertia_hd::prox::{prox_metric_rls, MetricRls};
use inertia_hd::{Matrix, Vector};
use serde_json::{json, Value};

use crate::config::{Coef, MethodConfig, ProblemConfig};
use crate::CliError;

pub enum BuiltProblem {
    Quadratic { q: Quadratic, x0: Option<Vector> },
    Abs { f: L1Norm, dim: usize, x0: Option<Vector> },
    Rls { mr: MetricRls, kind: &'static str, x0: Option<Vector> },
}

fn config_err(e: inertia_hd::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn vector(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

pub fn build_problem(cfg: &ProblemConfig, seed: u64) -> Result<BuiltProblem, CliError> {
    let x0 = cfg.x0.as_deref().map(vector);
    let built = match cfg.kind.as_str() {
        "lasso" => {
            let inst = gen_lasso_instance(
                cfg.m.unwrap_or(50),
                cfg.n.unwrap_or(200),
                cfg.sparsity.unwrap_or(10),
                cfg.noise.unwrap_or(0.01),
                seed,
            )
            .map_err(config_err)?;
            rls(inst, cfg, "lasso", x0)?
        }
        "lowrank" => {
            let inst = gen_lowrank_instance(
                cfg.rows.unwrap_or(10),
                cfg.cols.unwrap_or(10),
                cfg.rank.unwrap_or(2),
                cfg.m.unwrap_or(60),
                seed,
            )
            .map_err(config_err)?;
            rls(inst, cfg, "lowrank", x0)?
        }
        "quadratic" => {
            let q = match (&cfg.diag, &cfg.matrix) {
                (Some(d), None) => {
                    let q = Quadratic::diagonal(d).map_err(config_err)?;
                    match &cfg.c {
                        Some(c) => Quadratic::new(q.q().clone(), vector(c)).map_err(config_err)?,
                        None => q,
                    }
                }
                (None, Some(rows)) => {
                    let n = rows.len();
                    if n == 0 || rows.iter().any(|r| r.len() != n) {
                        return Err(CliError::Config("quadratic matrix must be square and nonempty".into()));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    let c = cfg.c.as_deref().map(vector).unwrap_or_else(|| Vector::zeros(n));
                    Quadratic::new(Matrix::from_row_slice(n, n, &flat), c).map_err(config_err)?
                }
                _ => {
                    return Err(CliError::Config(
                        "quadratic problem needs exactly one of 'diag' or 'matrix'".into(),
                    ))
                }
            };
            BuiltProblem::Quadratic { q, x0 }
        }
        "abs" => {
            let weight = cfg.weight.unwrap_or(1.0);
            if !(weight > 0.0) {
                return Err(CliError::Config("abs problem needs a positive weight".into()));
            }
            let dim = cfg.dim.or(cfg.x0.as_ref().map(Vec::len)).unwrap_or(1);
            BuiltProblem::Abs {
                f: L1Norm { weight },
                dim,
                x0,
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown problem kind '{other}' (expected lasso, lowrank, quadratic or abs)"
            )))
        }
    };
    if let Some(x0) = built.x0() {
        if x0.len() != built.dim() {
            return Err(CliError::Config(format!(
                "x0 has length {} but the problem has dimension {}",
                x0.len(),
                built.dim()
            )));
        }
    }
    Ok(built)
}

fn rls(
    mut inst: inertia_hd::problems::RlsInstance,
    cfg: &ProblemConfig,
    kind: &'static str,
    x0: Option<Vector>,
) -> Result<BuiltProblem, CliError> {
    if let Some(w) = cfg.weight {
        inst = inst.with_weight(w).map_err(config_err)?;
    }
    if let Some(l) = cfg.lambda_metric {
        inst = inst.with_lambda_metric(l).map_err(config_err)?;
    }
    let mr = MetricRls::new(inst).map_err(config_err)?;
    Ok(BuiltProblem::Rls { mr, kind, x0 })
}

impl BuiltProblem {
    pub fn kind(&self) -> &str {
        match self {
            BuiltProblem::Quadratic { .. } => "quadratic",
            BuiltProblem::Abs { .. } => "abs",
            BuiltProblem::Rls { kind, .. } => kind,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BuiltProblem::Quadratic { q, .. } => q.dim(),
            BuiltProblem::Abs { dim, .. } => *dim,
            BuiltProblem::Rls { mr, .. } => mr.dim(),
        }
    }

    pub fn x0(&self) -> Option<&Vector> {
        match self {
            BuiltProblem::Quadratic { x0, .. } | BuiltProblem::Abs { x0, .. } | BuiltProblem::Rls { x0, .. } => {
                x0.as_ref()
            }
        }
    }

    /// Starting point: the configured `x0`, else ones for quadratics and
    /// absolute values (whose minimizer is the origin), else zero.
    pub fn start(&self) -> Vector {
        match (self.x0(), self) {
            (Some(x), _) => x.clone(),
            (None, BuiltProblem::Rls { .. }) => Vector::zeros(self.dim()),
            (None, _) => Vector::from_element(self.dim(), 1.0),
        }
    }

    /// The smooth objective, when the problem is one.
    pub fn smooth(&self) -> Option<&dyn Objective> {
        match self {
            BuiltProblem::Quadratic { q, .. } => Some(q),
            _ => None,
        }
    }

    /// The view of the problem a method runs on.
    pub fn view_for(&self, method: &Method) -> Problem<'_> {
        match (self, method) {
            (BuiltProblem::Quadratic { q, .. }, Method::IpahdNs { .. }) => Problem::NonSmooth {
                f: q as &dyn ProxFunction,
                dim: q.dim(),
            },
            (BuiltProblem::Quadratic { q, .. }, _) => Problem::Smooth(q),
            (BuiltProblem::Abs { f, dim, .. }, _) => Problem::NonSmooth { f, dim: *dim },
            (BuiltProblem::Rls { mr, .. }, _) => Problem::Rls(mr),
        }
    }

    /// Lipschitz constant used for the default IGAHD step (`s = 1/L`); the
    /// metric envelope of a regularized least-squares problem has `L = 1`.
    fn lipschitz(&self) -> Option<f64> {
        match self {
            BuiltProblem::Quadratic { q, .. } => q.lipschitz(),
            BuiltProblem::Abs { .. } => None,
            BuiltProblem::Rls { .. } => Some(1.0),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            BuiltProblem::Quadratic { .. } => json!({"kind": "quadratic", "dim": self.dim()}),
            BuiltProblem::Abs { f, dim, .. } => json!({"kind": "abs", "dim": dim, "weight": f.weight}),
            BuiltProblem::Rls { mr, kind, .. } => json!({
                "kind": kind,
                "m": mr.instance.m(),
                "n": mr.instance.n(),
                "regularizer": mr.instance.regularizer.tag(),
                "weight": mr.instance.regularizer.weight(),
                "lambda_metric": mr.lambda,
                "seed": mr.instance.seed,
            }),
        }
    }
}

/// A validated solver configuration.
#[derive(Debug, Clone)]
pub struct BuiltMethod {
    pub label: String,
    pub method: Method,
    pub params: Value,
    pub lyapunov_lambda: Option<f64>,
}

impl BuiltMethod {
    /// The factor `delta_k` multiplying the gap in the method's energy; used
    /// to scale the slack that absorbs reference error.
    pub fn gap_weight(&self, k: usize) -> f64 {
        match &self.method {
            Method::Igahd(p) | Method::IgahdRls { params: p, .. } => p.t(k).powi(2),
            Method::Fista { alpha, .. } => ((k as f64 - 1.0) / (alpha - 1.0)).powi(2),
            Method::Ipahd(s) | Method::IpahdNs { schedule: s, .. } => {
                let lam = self.lyapunov_lambda.unwrap_or(s.alpha - 1.0);
                compute_growth(s, lam, k).map(|g| g.delta_k.abs()).unwrap_or(0.0)
            }
        }
    }

    pub fn schedule(&self) -> Option<&DiscreteSchedule> {
        match &self.method {
            Method::Ipahd(s) | Method::IpahdNs { schedule: s, .. } => Some(s),
            _ => None,
        }
    }
}

fn coef_label(c: &Coef) -> String {
    match c {
        Coef::Const(v) => format!("{v}"),
        Coef::Terms(ts) => ts
            .iter()
            .map(|t| format!("{}k^{}", t[0], t[1]))
            .collect::<Vec<_>>()
            .join("+"),
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

pub fn build_method(mc: &MethodConfig, prob: &BuiltProblem) -> Result<BuiltMethod, CliError> {
    let name = mc.name.as_str();
    let alpha = mc
        .alpha
        .ok_or_else(|| CliError::Config(format!("method '{name}' needs alpha")))?;
    let beta = mc.beta.clone().unwrap_or(Coef::Const(0.0));
    let correction = match mc.correction.as_deref() {
        None | Some("current") => RlsCorrection::Current,
        Some("lagged") => RlsCorrection::Lagged,
        Some(other) => {
            return Err(CliError::Config(format!(
                "unknown correction '{other}' (expected current or lagged)"
            )))
        }
    };
    let scalar_beta = |what: &str| {
        beta.as_const()
            .ok_or_else(|| CliError::Config(format!("{what} takes a constant beta")))
    };
    let step_s = || match (mc.s, prob.lipschitz()) {
        (Some(s), _) => Ok(s),
        (None, Some(l)) if l > 0.0 => Ok(1.0 / l),
        _ => Err(CliError::Config(format!("method '{name}' needs a step s"))),
    };
    let schedule = || {
        let h = mc.h.unwrap_or(1.0);
        let b = mc.b.clone().unwrap_or(Coef::Const(1.0));
        DiscreteSchedule::power_sums(alpha, h, &beta.terms(), &b.terms()).map_err(config_err)
    };
    let is_rls = matches!(prob, BuiltProblem::Rls { .. });
    let method = match name {
        "igahd" | "igahd_rls" => {
            if name == "igahd_rls" && !is_rls {
                return Err(CliError::Config(
                    "igahd_rls applies to lasso and lowrank problems only".into(),
                ));
            }
            let p = IgahdParams::new(alpha, scalar_beta(name)?, step_s()?, prob.lipschitz())
                .map_err(config_err)?;
            if is_rls {
                Method::IgahdRls { params: p, correction }
            } else {
                Method::Igahd(p)
            }
        }
        "fista" => {
            let s = step_s()?;
            IgahdParams::new(alpha, 0.0, s, prob.lipschitz()).map_err(config_err)?;
            Method::Fista { alpha, s }
        }
        "ipahd" => Method::Ipahd(schedule()?),
        "ipahd_ns" => Method::IpahdNs {
            schedule: schedule()?,
            theta: mc.theta.unwrap_or(1.0),
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown method '{other}' (expected igahd, igahd_rls, fista, ipahd or ipahd_ns)"
            )))
        }
    };
    let mut params = json!({"alpha": alpha});
    match &method {
        Method::Igahd(p) | Method::IgahdRls { params: p, .. } => {
            params["beta"] = json!(p.beta);
            params["s"] = json!(p.s);
            if let Method::IgahdRls { correction, .. } = &method {
                params["correction"] = json!(correction);
            }
        }
        Method::Fista { s, .. } => {
            params["beta"] = json!(0.0);
            params["s"] = json!(s);
        }
        Method::Ipahd(s) | Method::IpahdNs { schedule: s, .. } => {
            params["h"] = json!(s.h);
            params["beta"] = json!(beta.terms());
            params["b"] = json!(mc.b.clone().unwrap_or(Coef::Const(1.0)).terms());
            if let Method::IpahdNs { theta, .. } = &method {
                params["theta"] = json!(theta);
            }
        }
    }
    let lyapunov_lambda = match &method {
        Method::Ipahd(_) | Method::IpahdNs { .. } => Some(mc.lambda.unwrap_or(alpha - 1.0)),
        _ => None,
    };
    if let Some(l) = lyapunov_lambda {
        params["lambda"] = json!(l);
    }
    let label = mc.label.clone().unwrap_or_else(|| match &method {
        Method::Fista { .. } => format!("fista_a{alpha}"),
        _ => format!("{}_a{alpha}_b{}", method.name(), coef_label(&beta)),
    });
    let built = BuiltMethod {
        label: sanitize(&label),
        method,
        params,
        lyapunov_lambda,
    };
    // A zero-iteration run performs every parameter/problem compatibility check.
    let opts = RunOptions {
        max_iter: 0,
        x1: Some(prob.start()),
        lyapunov_lambda,
        ..Default::default()
    };
    run_solver(&built.method, prob.view_for(&built.method), &opts)
        .map_err(|e| CliError::Config(format!("method '{}': {e}", built.label)))?;
    Ok(built)
}

/// Makes labels unique by suffixing repeats with their position.
pub fn dedupe_labels(methods: &mut [BuiltMethod]) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for m in methods.iter() {
        *seen.entry(m.label.clone()).or_default() += 1;
    }
    for (i, m) in methods.iter_mut().enumerate() {
        if seen[&m.label] > 1 {
            m.label = format!("{}_{}", m.label, i + 1);
        }
    }
}

/// Reference minimum and minimizer for gaps, distances and energies.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceInfo {
    pub f_star: f64,
    pub x_star: Vector,
    /// `analytic` or `presolve`.
    pub source: &'static str,
}

impl ReferenceInfo {
    pub fn as_reference(&self) -> Reference {
        Reference {
            f_star: Some(self.f_star),
            x_star: Some(self.x_star.clone()),
        }
    }
}

fn reference_cache() -> &'static Mutex<HashMap<String, ReferenceInfo>> {
    static CACHE: OnceLock<Mutex<HashMap<String, ReferenceInfo>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Analytic reference when the problem provides one, otherwise a pre-solve
/// with ten times the benchmark budget (stopping early once the envelope
/// gradient vanishes). Pre-solves are cached per problem and budget.
pub fn reference_for(prob: &BuiltProblem, cache_key: &str, max_iter: usize) -> Result<ReferenceInfo, CliError> {
    match prob {
        BuiltProblem::Quadratic { q, .. } => {
            if let (Some(f), Some(x)) = (q.known_minimum(), q.known_minimizer()) {
                return Ok(ReferenceInfo {
                    f_star: f,
                    x_star: x,
                    source: "analytic",
                });
            }
        }
        BuiltProblem::Abs { dim, .. } => {
            return Ok(ReferenceInfo {
                f_star: 0.0,
                x_star: Vector::zeros(*dim),
                source: "analytic",
            })
        }
        BuiltProblem::Rls { .. } => {}
    }
    let key = format!("{cache_key}/{max_iter}");
    if let Some(hit) = reference_cache().lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let method = Method::Fista {
        alpha: 4.0,
        s: prob.lipschitz().map(|l| 1.0 / l).unwrap_or(1.0),
    };
    let opts = RunOptions {
        max_iter: 10 * max_iter,
        x1: Some(prob.start()),
        stop: StoppingRule {
            grad_tol: Some(1e-15),
            ..Default::default()
        },
        ..Default::default()
    };
    let trace = run_solver(&method, prob.view_for(&method), &opts)
        .map_err(|e| CliError::Numeric(format!("reference pre-solve: {e}")))?;
    let x = trace.final_state.x_curr;
    let info = match prob {
        BuiltProblem::Rls { mr, .. } => ReferenceInfo {
            f_star: mr.instance.value(&prox_metric_rls(mr, &x)),
            x_star: x,
            source: "presolve",
        },
        BuiltProblem::Quadratic { q, .. } => ReferenceInfo {
            f_star: Objective::value(q, &x),
            x_star: x,
            source: "presolve",
        },
        BuiltProblem::Abs { .. } => unreachable!("analytic above"),
    };
    reference_cache()
        .lock()
        .expect("cache lock")
        .insert(key, info.clone());
    Ok(info)
}
