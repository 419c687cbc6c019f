//! Continuation solver with trust-region time-stepping for linearly
//! equality-constrained minimization.
//!
//! This crate solves
//!
//! ```text
//! minimize    f(x)
//! subject to  A x = b
//! ```
//!
//! where `f` is smooth and the constraint data `(A, b)` may be rank-deficient
//! or inconsistent (noisy measurements). The approach follows the projected
//! gradient flow `dx/dt = -P ∇f(x)` (with `P` the orthogonal projector onto
//! the null space of `A`) to its equilibrium, advancing it with an implicit
//! Euler predictor whose step `Δt` is adapted by a trust-region ratio between
//! the actual and the model objective reduction. Curvature is tracked with a
//! BFGS matrix built from projected-gradient differences.
//!
//! # Modules
//!
//! * [`constraints`] — SVD reduction of `A x = b` to an orthonormal system
//!   `V_rᵀ x = b_r`, projections, particular solutions, inconsistency
//!   advisories.
//! * [`solver`] — the continuation solver: positive-definiteness check,
//!   predictor solve, trust ratio, time-step adaptation, BFGS updates,
//!   iteration observers, reports.
//! * [`problems`] — the objective-problem contract and ten block-separable
//!   benchmark generators with analytic gradients and oracles.
//! * [`baselines`] — a quadratic-penalty baseline, its ill-conditioning
//!   diagnostic, and an explicit adaptive gradient-flow integrator.
//! * [`vin`] — a visual-inertial navigation localization simulation that
//!   exercises the solver on rank-deficient, noisy 17-variable frame
//!   problems.
//! * [`linalg`] — small dense symmetric-eigenvalue helpers shared by tests
//!   and diagnostics.
//!
//! # Example
//!
//! ```
//! use ptctr::problems::{make_example, ExampleId};
//! use ptctr::solver::{solve, SolverConfig};
//!
//! let problem = make_example(ExampleId::Ex1, 10).unwrap();
//! let reduced = problem.reduce().unwrap();
//! let report = solve(&problem, &reduced, problem.x0(), &SolverConfig::default()).unwrap();
//! assert!(report.status.is_converged());
//! // Five independent pairs, each with minimum value 1760/121.
//! let expected = 5.0 * 1760.0 / 121.0;
//! assert!((report.f_star - expected).abs() <= 1e-8 * expected);
//! ```

pub mod baselines;
pub mod constraints;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod vin;

pub use baselines::{
    gradient_flow_solve, penalty_conditioning, penalty_solve, ConditioningRow, FlowConfig,
    PenaltyConfig,
};
pub use constraints::{ConstraintError, RankPolicy, RawConstraints, ReducedConstraints};
pub use problems::{make_example, ExampleId, ObjectiveProblem, ProblemError};
pub use solver::{
    solve, solve_with_observer, Objective, SolveReport, SolveStatus, SolverConfig, SolverError,
};
pub use vin::{simulate, NoiseModel, SolverKind, TrajectoryId, VinError, VinParams, VinSummary};
