use inertia_hd::algorithms::{
    run_solver, validate_discrete_conditions, DiscreteSchedule, IgahdParams, Method, Problem, Reference,
    RlsCorrection, RunOptions, StoppingRule,
};
use inertia_hd::diagnostics::{
    field_series, first_energy_increase, summability_probe, tail_decay_ratio, TraceField,
};
use inertia_hd::problems::{gen_lasso_instance, L1Norm, Objective, Quadratic};
use inertia_hd::prox::{prox_metric_rls, MetricRls, MoreauEnvelope};
use inertia_hd::Vector;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

#[test]
fn igahd_reaches_tight_gap_on_small_quadratic() {
    let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
    let x1 = v(&[1.0, 1.0]);
    // Oracle: a long FISTA run.
    let oracle = run_solver(
        &Method::Fista { alpha: 4.0, s: 0.1 },
        Problem::Smooth(&q),
        &RunOptions {
            max_iter: 20000,
            x1: Some(x1.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    let f_oracle = Objective::value(&q, &oracle.final_state.x_curr);
    let p = IgahdParams::new(4.0, 0.5, 0.1, q.lipschitz()).unwrap();
    let trace = run_solver(
        &Method::Igahd(p),
        Problem::Smooth(&q),
        &RunOptions {
            max_iter: 2000,
            x1: Some(x1),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(trace.len(), 2000);
    let gap = Objective::value(&q, &trace.final_state.x_curr) - f_oracle;
    assert!(gap <= 1e-8, "gap {gap}");
}

#[test]
fn ipahd_ns_tracks_ipahd_on_the_envelope() {
    let theta = 0.7;
    let f = L1Norm { weight: 1.0 };
    let env = MoreauEnvelope::new(f, theta, 1).unwrap();
    let sched = DiscreteSchedule::constant(4.0, 1.0, 0.3, 1.0).unwrap();
    let opts = RunOptions {
        max_iter: 200,
        x1: Some(v(&[2.5])),
        keep_iterates: true,
        ..Default::default()
    };
    let ns = run_solver(
        &Method::IpahdNs {
            schedule: sched.clone(),
            theta,
        },
        Problem::NonSmooth { f: &f, dim: 1 },
        &opts,
    )
    .unwrap();
    let direct = run_solver(&Method::Ipahd(sched), Problem::Smooth(&env), &opts).unwrap();
    for (a, b) in ns.iterates.iter().zip(&direct.iterates) {
        assert!((a - b).norm() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn ipahd_energy_and_summability_on_quadratic() {
    let q = Quadratic::diagonal(&[1.0, 10.0]).unwrap();
    let sched = DiscreteSchedule::constant(4.0, 1.0, 0.0, 1.0).unwrap();
    let report = validate_discrete_conditions(&sched, 3.0, 4000, None, None).unwrap();
    let from = report.joint_holds_from(&["G1", "G2"]).unwrap() as usize;
    let trace = run_solver(
        &Method::Ipahd(sched.clone()),
        Problem::Smooth(&q),
        &RunOptions {
            max_iter: 4000,
            x1: Some(v(&[1.0, 1.0])),
            k1: Some(from),
            ..Default::default()
        },
    )
    .unwrap();
    let (_, e) = field_series(&trace, TraceField::Lyapunov);
    assert_eq!(first_energy_increase(&e, 1e-10, |_| 1e-12), None);
    // delta_k (f(x_k) - f*) stays bounded by the initial energy.
    for r in &trace.records {
        let d = inertia_hd::algorithms::compute_growth(&sched, 3.0, r.k).unwrap().delta_k;
        assert!(d * r.f_gap.unwrap() <= e[0] * (1.0 + 1e-9));
    }
    let probe = summability_probe(&trace, |k| k, TraceField::VelocityNorm);
    assert!(probe.tail_fraction <= 0.01, "{probe:?}");
}

#[test]
fn rls_variants_converge_to_the_same_point() {
    let inst = gen_lasso_instance(20, 40, 4, 0.01, 3).unwrap();
    let mr = MetricRls::new(inst).unwrap();
    let p = IgahdParams::new(4.0, 0.5, 1.0, Some(1.0)).unwrap();
    let run = |correction| {
        run_solver(
            &Method::IgahdRls { params: p, correction },
            Problem::Rls(&mr),
            &RunOptions {
                max_iter: 20000,
                stop: StoppingRule {
                    grad_tol: Some(1e-13),
                    ..Default::default()
                },
                ..Default::default()
            },
        )
        .unwrap()
    };
    let cur = run(RlsCorrection::Current);
    let lag = run(RlsCorrection::Lagged);
    let (a, b) = (
        prox_metric_rls(&mr, &cur.final_state.x_curr),
        prox_metric_rls(&mr, &lag.final_state.x_curr),
    );
    assert!((mr.instance.value(&a) - mr.instance.value(&b)).abs() <= 1e-10);
    assert!((&a - &b).norm() <= 1e-6);
}

#[test]
fn gap_summability_and_tail_decay_for_igahd() {
    let q = Quadratic::diagonal(&[0.01, 1.0]).unwrap();
    let p = IgahdParams::new(4.0, 0.5, 1.0, q.lipschitz()).unwrap();
    let trace = run_solver(
        &Method::Igahd(p),
        Problem::Smooth(&q),
        &RunOptions {
            max_iter: 10000,
            x1: Some(v(&[1.0, 1.0])),
            reference: Reference::default(),
            ..Default::default()
        },
    )
    .unwrap();
    for (field, weight) in [
        (TraceField::GradNorm, 2),
        (TraceField::YGradNorm, 2),
        (TraceField::VelocityNorm, 1),
    ] {
        let probe = summability_probe(&trace, |k| k.powi(weight), field);
        assert!(probe.tail_fraction <= 0.01, "{field:?}: {probe:?}");
    }
    // sum k f_gap_k: the probe squares its field, so feed sqrt(gap).
    let (ks, gaps) = field_series(&trace, TraceField::FGap);
    let roots: Vec<f64> = gaps.iter().map(|g| g.max(0.0).sqrt()).collect();
    let probe = inertia_hd::diagnostics::summability_of(&ks, &roots, |k| k);
    assert!(probe.tail_fraction <= 0.01, "{probe:?}");
    let (ks, vel) = field_series(&trace, TraceField::VelocityNorm);
    let kv: Vec<f64> = ks.iter().zip(&vel).map(|(k, v)| k * v).collect();
    assert!(tail_decay_ratio(&ks, &kv).unwrap() <= 0.1);
}
