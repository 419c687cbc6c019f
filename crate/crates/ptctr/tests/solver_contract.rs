//! Contract tests for the continuation solver.
//!
//! The ground truth for equality-constrained quadratics is the dense KKT
//! system `[Q Aᵀ; A 0][x; λ] = [−c; b]`, solved here with a direct dense
//! factorization — an oracle entirely independent of the iteration under
//! test. On such problems, seeding the model with the exact Hessian makes
//! the quadratic model exact, so the trust ratio must sit at 1 for every
//! accepted step; that invariant is asserted through the observer hooks.

use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray_linalg::Solve;
use ptctr::solver::{solve_with_observer, IterationEvent, IterationObserver, DEFAULT_MAX_DT};
use ptctr::{
    make_example, solve, ExampleId, Objective, RankPolicy, RawConstraints, SolveStatus,
    SolverConfig, SolverError,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Quadratic {
    q: Array2<f64>,
    c: Array1<f64>,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        0.5 * x.dot(&self.q.dot(&x)) + self.c.dot(&x)
    }
    fn gradient_into(&self, x: ArrayView1<'_, f64>, grad: &mut Array1<f64>) {
        grad.assign(&self.q.dot(&x));
        *grad += &self.c;
    }
}

/// Draws a well-conditioned SPD matrix `MᵀM + I` and a consistent system.
fn random_instance(seed: u64, n: usize, m: usize) -> (Quadratic, RawConstraints) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mat = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    let mut q = mat.t().dot(&mat);
    q.diag_mut().mapv_inplace(|d| d + 1.0);
    let c = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
    let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
    let x_feasible = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let b = a.dot(&x_feasible);
    let raw = RawConstraints::new(a, b).expect("constructed shapes agree");
    (Quadratic { q, c }, raw)
}

/// Solves `[Q Aᵀ; A 0][x; λ] = [−c; b]` densely.
fn kkt_oracle(quad: &Quadratic, raw: &RawConstraints) -> Array1<f64> {
    let n = quad.c.len();
    let m = raw.rows();
    let mut kkt = Array2::zeros((n + m, n + m));
    kkt.slice_mut(s![..n, ..n]).assign(&quad.q);
    kkt.slice_mut(s![..n, n..]).assign(&raw.a().t());
    kkt.slice_mut(s![n.., ..n]).assign(&raw.a());
    let mut rhs = Array1::zeros(n + m);
    rhs.slice_mut(s![..n]).assign(&(-&quad.c));
    rhs.slice_mut(s![n..]).assign(&raw.b());
    let solution = kkt
        .solve(&rhs)
        .expect("KKT matrix of a full-rank instance is invertible");
    solution.slice(s![..n]).to_owned()
}

#[derive(Default)]
struct RhoRecorder {
    accepted_rhos: Vec<(usize, f64, f64)>,
    iterations_seen: usize,
}

impl IterationObserver for RhoRecorder {
    fn on_iteration(&mut self, event: &IterationEvent<'_>) {
        self.iterations_seen += 1;
        if event.accepted {
            self.accepted_rhos
                .push((event.k, event.rho, event.predicted_reduction));
        }
    }
}

#[test]
fn solver_matches_the_dense_kkt_oracle_on_random_quadratics() {
    for seed in [3_u64, 17, 91] {
        let (quad, raw) = random_instance(seed, 12, 4);
        let x_oracle = kkt_oracle(&quad, &raw);
        let f_oracle = quad.value(x_oracle.view());

        let reduced =
            ptctr::constraints::reduce(raw, RankPolicy::default()).expect("full rank instance");
        let report = solve(&quad, &reduced, Array1::ones(12), &SolverConfig::default())
            .expect("valid configuration");

        assert_eq!(report.status, SolveStatus::Converged, "seed {seed}");
        let err = report
            .x_star
            .iter()
            .zip(x_oracle.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(
            err <= 1e-6,
            "seed {seed}: x differs from the KKT oracle by {err}"
        );
        assert!(
            (report.f_star - f_oracle).abs() <= 1e-8 * (1.0 + f_oracle.abs()),
            "seed {seed}: f {} vs oracle {}",
            report.f_star,
            f_oracle
        );
    }
}

#[test]
fn exact_hessian_seeding_makes_every_accepted_ratio_one() {
    let (quad, raw) = random_instance(7, 10, 3);
    let reduced =
        ptctr::constraints::reduce(raw, RankPolicy::default()).expect("full rank instance");
    let config = SolverConfig {
        initial_b: Some(quad.q.clone()),
        ..SolverConfig::default()
    };
    let mut recorder = RhoRecorder::default();
    let report = solve_with_observer(&quad, &reduced, Array1::ones(10), &config, &mut recorder)
        .expect("valid configuration");

    assert_eq!(report.status, SolveStatus::Converged);
    assert_eq!(
        recorder.iterations_seen, report.iterations,
        "observer sees every iteration"
    );
    assert!(
        !recorder.accepted_rhos.is_empty(),
        "at least one step must be accepted"
    );
    for (k, rho, pred) in recorder.accepted_rhos {
        // Below ~1e-11 the ratio is dominated by cancellation in the
        // actual-reduction difference, not by model quality.
        if pred > 1e-11 {
            assert!(
                (rho - 1.0).abs() <= 1e-3,
                "iteration {k}: exact model must give ρ = 1, got {rho} (pred {pred})"
            );
        }
    }
}

#[test]
fn time_step_follows_the_trust_band_rules_between_iterations() {
    // ex8 is the one benchmark whose run mixes accepted and rejected steps.
    let problem = make_example(ExampleId::Ex8, 120).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let config = SolverConfig::default();
    let report = solve(&problem, &reduced, problem.x0(), &config).expect("valid configuration");

    assert!(
        report.trace.len() >= 2,
        "need consecutive rows to check transitions"
    );
    assert!(
        report.rejected_steps > 0,
        "ex8 should exercise the rejection path"
    );
    for pair in report.trace.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let gap = (1.0 - prev.rho).abs();
        let expected = if gap <= config.eta_1 {
            (prev.dt * config.gamma_1).min(DEFAULT_MAX_DT)
        } else if gap >= config.eta_2 {
            prev.dt * config.gamma_2
        } else {
            prev.dt
        };
        assert!(
            (next.dt - expected).abs() <= 1e-12 * expected.abs(),
            "iteration {}: dt {} then {}, expected {} from ρ = {}",
            prev.k,
            prev.dt,
            next.dt,
            expected,
            prev.rho
        );
    }
}

#[test]
fn trace_counters_and_acceptance_flags_are_consistent() {
    let problem = make_example(ExampleId::Ex2, 60).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let config = SolverConfig::default();
    let report = solve(&problem, &reduced, problem.x0(), &config).expect("valid configuration");

    assert_eq!(report.status, SolveStatus::Converged);
    assert_eq!(report.trace.len(), report.iterations);
    assert_eq!(
        report.accepted_steps + report.rejected_steps,
        report.iterations
    );
    let accepted = report.trace.iter().filter(|r| r.accepted).count();
    assert_eq!(accepted, report.accepted_steps);
    for row in &report.trace {
        assert_eq!(row.accepted, row.rho > config.eta_a, "iteration {}", row.k);
        if row.accepted {
            assert!(
                row.predicted_reduction > 0.0,
                "accepted steps need a model reduction"
            );
        }
    }
    // Final residuals reflect the last iterate.
    assert!(report.kkt_residual <= config.epsilon);
    assert!(report.feasibility_residual <= 1e-9 * (1.0 + 1.0));
}

#[test]
fn iteration_budget_exhaustion_is_reported_not_swallowed() {
    let problem = make_example(ExampleId::Ex5, 40).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");
    let config = SolverConfig {
        max_iterations: 3,
        ..SolverConfig::default()
    };
    let report = solve(&problem, &reduced, problem.x0(), &config).expect("valid configuration");
    assert_eq!(report.status, SolveStatus::IterationLimit);
    assert_eq!(report.iterations, 3);
    assert!(
        report.kkt_residual > config.epsilon,
        "3 iterations cannot finish ex5"
    );
}

#[test]
fn caller_mistakes_surface_as_typed_errors() {
    let problem = make_example(ExampleId::Ex1, 10).expect("example builds");
    let reduced = problem.reduce().expect("reduction succeeds");

    let bad = SolverConfig {
        epsilon: -1.0,
        ..SolverConfig::default()
    };
    let err = solve(&problem, &reduced, problem.x0(), &bad).unwrap_err();
    assert!(matches!(err, SolverError::BadConfig(_)), "got {err}");

    let err = solve(
        &problem,
        &reduced,
        Array1::ones(7),
        &SolverConfig::default(),
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            SolverError::BadInitialPoint {
                got: 7,
                expected: 10
            }
        ),
        "got {err}"
    );
}
