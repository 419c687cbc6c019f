//! Contract tests for the penalty and gradient-flow baselines and the
//! penalty conditioning diagnostic, at benchmark scale.

use ptctr::{
    gradient_flow_solve, make_example, penalty_conditioning, penalty_solve, solve, ExampleId,
    FlowConfig, PenaltyConfig, SolveStatus, SolverConfig,
};

#[test]
fn penalty_converges_on_the_well_conditioned_examples() {
    // ex3 (pure quadratic) and ex1 stay benign for the inner BFGS even as
    // sigma grows; the method should fully converge, not merely get close.
    let cases = [
        (ExampleId::Ex3, 1200_usize, 714.666_666_7),
        (ExampleId::Ex1, 100, 727.272_727_3),
    ];
    for (id, n, f_expected) in cases {
        let problem = make_example(id, n).expect("example builds");
        let reduced = problem.reduce().expect("reduction succeeds");
        let report = penalty_solve(&problem, &reduced, problem.x0(), &PenaltyConfig::default())
            .expect("valid configuration");
        assert_eq!(report.status, SolveStatus::Converged, "{id} n={n}");
        assert!(!report.close, "{id}: converged runs are not 'close'");
        let rel = (report.f_star - f_expected).abs() / f_expected.abs();
        assert!(
            rel <= 5e-3,
            "{id}: penalty f {} vs expected {f_expected}",
            report.f_star
        );
    }
}

#[test]
fn penalty_tracks_the_solver_where_it_converges_or_comes_close() {
    let problem = make_example(ExampleId::Ex5, 1000).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let ptctr = solve(&problem, &reduced, problem.x0(), &SolverConfig::default())
        .expect("valid configuration");
    assert_eq!(ptctr.status, SolveStatus::Converged);

    let penalty = penalty_solve(&problem, &reduced, problem.x0(), &PenaltyConfig::default())
        .expect("valid configuration");
    assert!(
        penalty.status == SolveStatus::Converged || penalty.close,
        "ex5: penalty should at least come close, got {} (close = {})",
        penalty.status,
        penalty.close
    );
    let rel = (penalty.f_star - ptctr.f_star).abs() / ptctr.f_star.abs();
    assert!(
        rel <= 5e-3,
        "ex5: penalty f {} vs solver f {}",
        penalty.f_star,
        ptctr.f_star
    );
}

#[test]
fn penalty_trace_records_one_row_per_stage_with_growing_sigma() {
    let problem = make_example(ExampleId::Ex1, 20).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let config = PenaltyConfig::default();
    let report =
        penalty_solve(&problem, &reduced, problem.x0(), &config).expect("valid configuration");
    assert!(!report.trace.is_empty());
    let mut sigma = config.sigma0;
    for (stage, row) in report.trace.iter().enumerate() {
        assert_eq!(row.k, stage, "trace rows are stages in order");
        assert!(
            (row.dt - sigma).abs() <= 1e-12 * sigma,
            "stage {stage}: dt column carries sigma, got {} expected {sigma}",
            row.dt
        );
        sigma *= config.growth;
    }
    assert!(
        (report.final_dt * config.growth - sigma).abs() <= 1e-12 * sigma,
        "final_dt is the last stage's sigma"
    );
}

#[test]
fn conditioning_grows_linearly_in_sigma_once_the_penalty_dominates() {
    let problem = make_example(ExampleId::Ex1, 4).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let sigmas: Vec<f64> = (0..=6).map(|e| 10.0_f64.powi(e)).collect();
    let rows = penalty_conditioning(
        &problem,
        &reduced,
        problem.x0(),
        &sigmas,
        &PenaltyConfig::default(),
    )
    .expect("valid configuration");
    assert_eq!(rows.len(), sigmas.len());
    for row in &rows {
        assert!(
            row.kappa.is_finite() && row.kappa >= 1.0,
            "κ(σ={}) = {}",
            row.sigma,
            row.kappa
        );
    }
    // In the penalty-dominated regime the condition number scales like σ.
    for pair in rows.windows(2) {
        if pair[0].sigma >= 1e3 {
            let ratio = pair[1].kappa / pair[0].kappa;
            assert!(
                (5.0..=15.0).contains(&ratio),
                "κ should scale ~linearly with σ in the tail: κ({}) = {}, κ({}) = {}",
                pair[0].sigma,
                pair[0].kappa,
                pair[1].sigma,
                pair[1].kappa
            );
        }
    }
    let last = rows.last().expect("non-empty");
    assert!(
        last.kappa > 1e5,
        "κ(σ=1e6) = {} demonstrates the blow-up",
        last.kappa
    );
}

#[test]
fn gradient_flow_reaches_the_reference_optimum_on_ex1() {
    let problem = make_example(ExampleId::Ex1, 100).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let known = problem
        .known_optimum()
        .expect("ex1 has a closed form")
        .clone();
    let report = gradient_flow_solve(&problem, &reduced, problem.x0(), &FlowConfig::default())
        .expect("valid configuration");
    assert_eq!(report.status, SolveStatus::Converged);
    let rel = (report.f_star - known.f_star).abs() / known.f_star.abs();
    assert!(
        rel <= 1e-4,
        "flow f {} vs closed form {}",
        report.f_star,
        known.f_star
    );
    assert!(
        report.feasibility_residual <= 1e-8,
        "flow keeps iterates feasible"
    );
}

#[test]
fn gradient_flow_descends_monotonically_and_stays_feasible() {
    let problem = make_example(ExampleId::Ex10, 30).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let report = gradient_flow_solve(&problem, &reduced, problem.x0(), &FlowConfig::default())
        .expect("valid configuration");
    assert_eq!(report.status, SolveStatus::Converged);
    for row in &report.trace {
        if row.accepted {
            assert!(
                row.actual_reduction >= 0.0,
                "step {}: accepted flow steps never increase f (got {})",
                row.k,
                row.actual_reduction
            );
        }
    }
    // The flow solves the same first-order system as the solver.
    let ptctr = solve(&problem, &reduced, problem.x0(), &SolverConfig::default())
        .expect("valid configuration");
    let rel = (report.f_star - ptctr.f_star).abs() / (1.0 + ptctr.f_star.abs());
    assert!(
        rel <= 1e-6,
        "flow f {} vs solver f {}",
        report.f_star,
        ptctr.f_star
    );
}

#[test]
fn three_methods_agree_on_a_small_instance() {
    let problem = make_example(ExampleId::Ex1, 10).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let f_ptctr = solve(&problem, &reduced, problem.x0(), &SolverConfig::default())
        .expect("valid configuration")
        .f_star;
    let f_penalty = penalty_solve(&problem, &reduced, problem.x0(), &PenaltyConfig::default())
        .expect("valid configuration")
        .f_star;
    let f_flow = gradient_flow_solve(&problem, &reduced, problem.x0(), &FlowConfig::default())
        .expect("valid configuration")
        .f_star;
    let spread = [f_ptctr, f_penalty, f_flow];
    let lo = spread.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = spread.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        (hi - lo) / lo.abs() <= 1e-4,
        "methods disagree: ptctr {f_ptctr}, penalty {f_penalty}, flow {f_flow}"
    );
}
