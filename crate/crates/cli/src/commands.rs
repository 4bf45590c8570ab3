//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use inertia_hd::algorithms::{
    run_solver, validate_discrete_conditions_from, DiscreteSchedule, RunOptions, RunTrace, StoppingRule,
};
use inertia_hd::conditions::ConditionReport;
use inertia_hd::diagnostics::{
    first_energy_increase, fit_power_law, LyapunovSpec, TraceField, GAP_FLOOR,
};
use inertia_hd::dynamics::{
    check_continuous_conditions, integrate_trajectory_with, log_grid, named_case_conditions, trajectory_csv,
    trajectory_records, CaseParams, Coefficient, ContinuousSchedule, IntegrateOptions, NamedCase,
};
use inertia_hd::Vector;
use serde_json::{json, Value};

use crate::build::{build_method, build_problem, dedupe_labels, reference_for, BuiltMethod, BuiltProblem, ReferenceInfo};
use crate::config::{load_config, Coef, LoadedConfig, MethodConfig, ScheduleConfig};
use crate::report::{analyze, default_fit_range};
use crate::svg::{loglog_plot, Series};
use crate::CliError;

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
}

/// Files written by a command, relative to its output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

fn out_dir(ov: &Overrides) -> PathBuf {
    ov.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    files.push(name.to_string());
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &Value, files: &mut Vec<String>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_file(dir, name, &(text + "\n"), files)
}

fn numeric(label: &str, e: inertia_hd::Error) -> CliError {
    match e {
        inertia_hd::Error::Numeric(m) => CliError::Numeric(format!("{label}: {m}")),
        other => CliError::Config(format!("{label}: {other}")),
    }
}

fn problem_of(loaded: &LoadedConfig) -> Result<(BuiltProblem, String), CliError> {
    let pc = loaded
        .config
        .problem
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [problem] table".into()))?;
    let key = format!(
        "{}/seed={}",
        serde_json::to_string(pc).expect("problem config serializes"),
        loaded.seed
    );
    Ok((build_problem(pc, loaded.seed)?, key))
}

fn fit_range(loaded: &LoadedConfig, trace: &RunTrace) -> (f64, f64) {
    loaded
        .config
        .report
        .fit_range
        .map(|r| (r[0], r[1]))
        .unwrap_or_else(|| default_fit_range(trace, loaded.max_iter))
}

fn run_options(loaded: &LoadedConfig, prob: &BuiltProblem, method: &BuiltMethod, reference: &ReferenceInfo) -> RunOptions {
    RunOptions {
        max_iter: loaded.max_iter,
        stop: StoppingRule {
            gap_tol: loaded.config.report.gap_tol,
            ..Default::default()
        },
        x1: Some(prob.start()),
        reference: reference.as_reference(),
        lyapunov_lambda: method.lyapunov_lambda,
        ..Default::default()
    }
}

struct MethodRun {
    trace: RunTrace,
    seconds: f64,
}

fn run_one(loaded: &LoadedConfig, prob: &BuiltProblem, m: &BuiltMethod, reference: &ReferenceInfo) -> Result<MethodRun, CliError> {
    let start = Instant::now();
    let trace = run_solver(&m.method, prob.view_for(&m.method), &run_options(loaded, prob, m, reference))
        .map_err(|e| numeric(&m.label, e))?;
    Ok(MethodRun {
        trace,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn method_entry(loaded: &LoadedConfig, m: &BuiltMethod, run: &MethodRun, reference: &ReferenceInfo, file: &str) -> Value {
    let mut entry = json!({
        "name": m.method.name(),
        "label": m.label,
        "params": m.params,
    });
    let summary = analyze(&run.trace, m, fit_range(loaded, &run.trace), reference.f_star);
    if let (Value::Object(e), Value::Object(s)) = (&mut entry, summary) {
        e.extend(s);
    }
    entry["files"] = json!([file]);
    entry["wall_clock_s"] = json!(run.seconds);
    entry
}

fn reference_json(r: &ReferenceInfo) -> Value {
    json!({"source": r.source, "f_star": r.f_star})
}

/// `run`: every configured method on one problem.
pub fn cmd_run(config: &Path, ov: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load_config(config, ov.seed, ov.max_iter)?;
    let (prob, key) = problem_of(&loaded)?;
    if loaded.config.methods.is_empty() {
        return Err(CliError::Config("config lists no [[methods]]".into()));
    }
    let mut methods = loaded
        .config
        .methods
        .iter()
        .map(|mc| build_method(mc, &prob))
        .collect::<Result<Vec<_>, _>>()?;
    dedupe_labels(&mut methods);

    let start = Instant::now();
    let reference = reference_for(&prob, &key, loaded.max_iter)?;
    let runs = methods
        .iter()
        .map(|m| run_one(&loaded, &prob, m, &reference))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = out_dir(ov);
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (m, run) in methods.iter().zip(&runs) {
        let file = format!("{}.csv", m.label);
        write_file(&dir, &file, &run.trace.to_csv(), &mut files)?;
        entries.push(method_entry(&loaded, m, run, &reference, &file));
    }
    let plots = loaded.config.report.plots.unwrap_or(true);
    if plots {
        let panel = |field: TraceField| -> Vec<Series<'_>> {
            methods
                .iter()
                .zip(&runs)
                .map(|(m, run)| Series {
                    label: &m.label,
                    points: run
                        .trace
                        .records
                        .iter()
                        .filter_map(|r| field.get(r).map(|v| (r.k as f64, v)))
                        .collect(),
                })
                .collect()
        };
        let gap_title = match prob {
            BuiltProblem::Rls { .. } => "objective gap at the metric prox point",
            _ => "objective gap",
        };
        write_file(
            &dir,
            "f_gap.svg",
            &loglog_plot(gap_title, "iteration k", "f - f*", &panel(TraceField::FGap)),
            &mut files,
        )?;
        write_file(
            &dir,
            "distance.svg",
            &loglog_plot(
                "distance to the reference minimizer",
                "iteration k",
                "|x_k - x*|",
                &panel(TraceField::Distance),
            ),
            &mut files,
        )?;
    }
    files.push("report.json".into());
    let report = json!({
        "config_digest": loaded.digest,
        "command": "run",
        "seed": loaded.seed,
        "max_iter": loaded.max_iter,
        "problem": prob.describe(),
        "reference": reference_json(&reference),
        "methods": entries,
        "files": files,
        "wall_clock_s": start.elapsed().as_secs_f64(),
    });
    files.pop();
    write_json(&dir, "report.json", &report, &mut files)?;
    Ok(Outcome { out_dir: dir, files })
}

fn continuous_schedule(sc: &ScheduleConfig) -> Result<(ContinuousSchedule, Option<NamedCase>), CliError> {
    let cfg = |e: inertia_hd::Error| CliError::Config(e.to_string());
    let t0 = sc.t0.or(sc.grid.map(|g| g[0])).unwrap_or(1.0);
    match &sc.case {
        Some(tag) => {
            let beta = match &sc.beta {
                None => None,
                Some(c) => Some(
                    c.as_const()
                        .ok_or_else(|| CliError::Config("named cases take a constant beta".into()))?,
                ),
            };
            let params = CaseParams {
                alpha: sc.alpha,
                beta,
                r: sc.r,
                c: sc.c,
                b_exponent: sc.b_exponent,
                beta_exponent: sc.beta_exponent,
            };
            let case = NamedCase::parse(tag, &params).map_err(cfg)?;
            Ok((case.schedule(t0).map_err(cfg)?, Some(case)))
        }
        None => {
            let beta = sc.beta.clone().unwrap_or(Coef::Const(0.0));
            let b = sc.b.clone().unwrap_or(Coef::Const(1.0));
            let cs = ContinuousSchedule::new(
                sc.alpha,
                t0,
                Coefficient::power_sum(&beta.terms()),
                Coefficient::power_sum(&b.terms()),
            )
            .map_err(cfg)?;
            Ok((cs, None))
        }
    }
}

fn continuous_grid(sc: &ScheduleConfig, default: [f64; 2]) -> Result<Vec<f64>, CliError> {
    let [a, b] = sc.grid.unwrap_or(default);
    let n = sc.grid_points.unwrap_or(200);
    if !(a > 0.0 && b > a) || n < 2 {
        return Err(CliError::Config(format!(
            "grid needs 0 < start < end and at least 2 points, got [{a}, {b}] with {n}"
        )));
    }
    match sc.grid_spacing.as_deref() {
        None | Some("linear") => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
        Some("log") => Ok(log_grid(a, b, n)),
        Some(other) => Err(CliError::Config(format!(
            "unknown grid_spacing '{other}' (expected linear or log)"
        ))),
    }
}

fn discrete_schedule(sc: &ScheduleConfig) -> Result<DiscreteSchedule, CliError> {
    let beta = sc.beta.clone().unwrap_or(Coef::Const(0.0));
    let b = sc.b.clone().unwrap_or(Coef::Const(1.0));
    DiscreteSchedule::power_sums(sc.alpha, sc.h.unwrap_or(1.0), &beta.terms(), &b.terms())
        .map_err(|e| CliError::Config(e.to_string()))
}

/// First violation among the required conditions (all conditions when none
/// are listed).
fn required_violation(report: &ConditionReport, required: Option<&[String]>) -> Result<Option<(String, f64)>, CliError> {
    if let Some(names) = required {
        for n in names {
            if report.get(n).is_none() {
                return Err(CliError::Config(format!("unknown condition '{n}' in 'required'")));
            }
        }
    }
    Ok(report
        .conditions
        .iter()
        .filter(|c| required.is_none_or(|r| r.iter().any(|n| *n == c.name)))
        .filter_map(|c| c.verdict.first_violation().map(|at| (c.name.clone(), at)))
        .min_by(|a, b| a.1.total_cmp(&b.1)))
}

/// `check`: evaluates the growth conditions of a schedule and prints the table.
pub fn cmd_check(config: &Path, ov: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load_config(config, ov.seed, ov.max_iter)?;
    let sc = loaded
        .config
        .schedule
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [schedule] table".into()))?;
    let (report, var) = match sc.kind.as_str() {
        "continuous" => {
            let (cs, case) = continuous_schedule(sc)?;
            let grid = continuous_grid(sc, [cs.t0, 100.0 * cs.t0])?;
            if let Some(case) = case {
                println!("closed-form region: {}", serde_json::to_string(&named_case_conditions(&case)).expect("json"));
            }
            let rep = check_continuous_conditions(&cs, sc.epsilon, &grid).map_err(|e| CliError::Config(e.to_string()))?;
            (rep, "t")
        }
        "discrete" => {
            let sched = discrete_schedule(sc)?;
            let [k_min, k_max] = sc.k_range.unwrap_or([1, 1000]);
            let lambda = sc.lambda.unwrap_or(sc.alpha - 1.0);
            let rep = validate_discrete_conditions_from(&sched, lambda, k_min, k_max, sc.epsilon, sc.b_lower)
                .map_err(|e| CliError::Config(e.to_string()))?;
            (rep, "k")
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown schedule kind '{other}' (expected continuous or discrete)"
            )))
        }
    };
    print!("{}", report.to_table());
    match required_violation(&report, sc.required.as_deref())? {
        Some((name, at)) => Err(CliError::Condition(format!("{name} fails at {var} = {at}"))),
        None => Ok(Outcome {
            out_dir: out_dir(ov),
            files: Vec::new(),
        }),
    }
}

/// `ode`: integrates the continuous dynamic on a quadratic problem.
pub fn cmd_ode(config: &Path, ov: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load_config(config, ov.seed, ov.max_iter)?;
    let (prob, key) = problem_of(&loaded)?;
    let obj = prob
        .smooth()
        .ok_or_else(|| CliError::Config("ode needs a smooth (quadratic) problem".into()))?;
    let sc = loaded
        .config
        .schedule
        .as_ref()
        .ok_or_else(|| CliError::Config("ode needs a continuous [schedule] table".into()))?;
    if sc.kind != "continuous" {
        return Err(CliError::Config("ode needs a continuous schedule".into()));
    }
    let oc = loaded
        .config
        .ode
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [ode] table".into()))?;
    let (cs, _) = continuous_schedule(sc)?;
    if !(oc.t_end > cs.t0) {
        return Err(CliError::Config(format!("t_end = {} must exceed t0 = {}", oc.t_end, cs.t0)));
    }
    let n = prob.dim();
    let vec_of = |v: &Option<Vec<f64>>, what: &str, default: Vector| -> Result<Vector, CliError> {
        match v {
            Some(xs) if xs.len() != n => Err(CliError::Config(format!("{what} must have length {n}"))),
            Some(xs) => Ok(Vector::from_column_slice(xs)),
            None => Ok(default),
        }
    };
    let x0 = vec_of(&oc.x0, "x0", prob.start())?;
    let v0 = vec_of(&oc.v0, "v0", Vector::zeros(n))?;
    let tol = oc.tol.unwrap_or(1e-10);
    let lambda = oc.lambda.unwrap_or(cs.alpha - 1.0);
    if !(lambda > 0.0) || lambda > cs.alpha - 1.0 {
        return Err(CliError::Config(format!(
            "lambda = {lambda} must lie in (0, alpha - 1 = {}]",
            cs.alpha - 1.0
        )));
    }
    let mut opts = IntegrateOptions::new(tol);
    opts.grid_points = oc.grid_points.unwrap_or(200);
    opts.fd_fallback = oc.fd_fallback.unwrap_or(true);

    let start = Instant::now();
    let reference = reference_for(&prob, &key, loaded.max_iter)?;
    let points = integrate_trajectory_with(obj, &cs, &x0, &v0, oc.t_end, &opts).map_err(|e| numeric("ode", e))?;
    let spec = LyapunovSpec::new(lambda, reference.x_star.clone(), reference.f_star)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let records = trajectory_records(obj, &cs, &points, Some(reference.f_star), Some(&spec))
        .map_err(|e| numeric("ode", e))?;
    let seconds = start.elapsed().as_secs_f64();

    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let gaps: Vec<f64> = records.iter().map(|r| r.f_gap.unwrap_or(f64::NAN)).collect();
    let range = oc
        .fit_range
        .map(|r| (r[0], r[1]))
        .unwrap_or(((2.0 * cs.t0).max(oc.t_end / 50.0), oc.t_end));
    let fit = match fit_power_law(&ts, &gaps, range, Some(GAP_FLOOR)) {
        Ok(f) => json!(f),
        Err(e) => json!({"error": e.to_string()}),
    };
    let grid = log_grid(cs.t0, oc.t_end, 200);
    let conditions = check_continuous_conditions(&cs, None, &grid).map_err(|e| CliError::Config(e.to_string()))?;
    // The energy is only claimed to decrease where C1 and C2 hold.
    let from = conditions.joint_holds_from(&["C1", "C2"]);
    let lyapunov = match from {
        Some(from) => {
            let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].t >= from).collect();
            let es: Vec<f64> = idx.iter().filter_map(|&i| records[i].lyapunov).collect();
            let abs = tol * es.first().copied().unwrap_or(0.0).abs();
            let first = first_energy_increase(&es, 1e-8, |_| abs);
            json!({
                "checked_from_t": from,
                "monotone": first.is_none(),
                "first_increase_t": first.map(|i| records[idx[i + 1]].t),
                "rel_slack": 1e-8,
                "abs_slack": abs,
            })
        }
        None => json!({"checked_from_t": null, "note": "C1/C2 do not hold on a final segment of the grid"}),
    };

    let dir = out_dir(ov);
    let mut files = Vec::new();
    write_file(&dir, "trajectory.csv", &trajectory_csv(&records), &mut files)?;
    let report = json!({
        "config_digest": loaded.digest,
        "command": "ode",
        "problem": prob.describe(),
        "reference": reference_json(&reference),
        "schedule": {"alpha": cs.alpha, "t0": cs.t0, "beta": cs.beta.label(), "b": cs.b.label()},
        "t_end": oc.t_end,
        "tol": tol,
        "lambda": lambda,
        "rate_fits": {"f_gap": fit},
        "lyapunov": lyapunov,
        "condition_report": conditions,
        "files": ["trajectory.csv", "report.json"],
        "wall_clock_s": seconds,
    });
    write_json(&dir, "report.json", &report, &mut files)?;
    Ok(Outcome { out_dir: dir, files })
}

fn fmt_axis(v: f64) -> String {
    format!("{v}")
}

/// `sweep`: the cross product of the alpha and beta axes for one method.
pub fn cmd_sweep(config: &Path, ov: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load_config(config, ov.seed, ov.max_iter)?;
    let sw = loaded
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [sweep] table".into()))?;
    if sw.alpha.is_empty() || sw.beta.is_empty() {
        return Err(CliError::Config("sweep axes 'alpha' and 'beta' must be nonempty".into()));
    }
    let (prob, key) = problem_of(&loaded)?;
    let name = sw.method.clone().unwrap_or_else(|| "igahd".into());
    let mut cells = Vec::new();
    for &alpha in &sw.alpha {
        for &beta in &sw.beta {
            let mc = MethodConfig {
                name: name.clone(),
                label: Some(format!("{name}_a{}_b{}", fmt_axis(alpha), fmt_axis(beta))),
                alpha: Some(alpha),
                beta: Some(Coef::Const(beta)),
                s: sw.s,
                h: sw.h,
                b: sw.b.clone(),
                theta: sw.theta,
                correction: sw.correction.clone(),
                lambda: None,
            };
            cells.push((alpha, beta, build_method(&mc, &prob)?));
        }
    }
    let mut methods: Vec<BuiltMethod> = cells.iter().map(|c| c.2.clone()).collect();
    dedupe_labels(&mut methods);

    let start = Instant::now();
    let reference = reference_for(&prob, &key, loaded.max_iter)?;
    let workers = sw
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, methods.len());
    let mut results: Vec<Option<Result<MethodRun, CliError>>> = (0..methods.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (w..methods.len()).step_by(workers).collect())
            .collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let (loaded, prob, methods, reference) = (&loaded, &prob, &methods, &reference);
                scope.spawn(move || {
                    idx.into_iter()
                        .map(|i| (i, run_one(loaded, prob, &methods[i], reference)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let runs = results
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = out_dir(ov);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for ((alpha, beta, _), (m, run)) in cells.iter().zip(methods.iter().zip(&runs)) {
        let file = format!("{}.csv", m.label);
        write_file(&dir, &file, &run.trace.to_csv(), &mut files)?;
        let mut row = method_entry(&loaded, m, run, &reference, &file);
        row["alpha"] = json!(alpha);
        row["beta"] = json!(beta);
        rows.push(row);
    }
    files.push("report.json".into());
    let report = json!({
        "config_digest": loaded.digest,
        "command": "sweep",
        "seed": loaded.seed,
        "max_iter": loaded.max_iter,
        "problem": prob.describe(),
        "reference": reference_json(&reference),
        "axes": {"alpha": sw.alpha, "beta": sw.beta},
        "methods": rows,
        "files": files,
        "wall_clock_s": start.elapsed().as_secs_f64(),
    });
    files.pop();
    write_json(&dir, "report.json", &report, &mut files)?;
    Ok(Outcome { out_dir: dir, files })
}
