//! Continuation solver with trust-region time-stepping.
//!
//! The solver follows the projected gradient flow `dx/dt = −P ∇f(x)` — where
//! `P = I − V_r V_rᵀ` projects onto the tangent space of the reduced
//! constraints `V_rᵀ x = b_r` — to its equilibrium. Each iteration takes one
//! implicit-Euler step: with `τ = 1/Δt` and a BFGS curvature model `B`, the
//! predictor solves `(τI + B) d = −p_g` by Cholesky factorization and applies
//! the projected step `s = Pd`, which keeps the iterate exactly feasible.
//!
//! `Δt` is adapted every iteration from the trust ratio
//! `ρ = (f(x_k) − f(x_k + s)) / (q_k(x_k) − q_k(x_k + s))`, where
//! `q_k(x) = f_k + (x − x_k)ᵀ g_k + ½ (x − x_k)ᵀ B_k (x − x_k)` is the local
//! quadratic model. The step is accepted when `ρ > η_a`; `Δt` grows by `γ₁`
//! when the model is accurate (`|1 − ρ| ≤ η₁`), shrinks by `γ₂` when it is
//! poor (`|1 − ρ| ≥ η₂`), and is left alone in between. Because the flow is
//! followed inexactly on purpose, `Δt` can grow to the point where the
//! predictor is effectively a projected quasi-Newton step, giving fast local
//! convergence while the small-`Δt` regime guarantees descent.
//!
//! Before each predictor solve, positive definiteness of both
//! `τI + B − PᵀBP` and `τI + B` is verified; a failed check rejects the
//! iteration outright (`ρ = −1`) so that `Δt` shrinks. The first test is
//! performed on an `r × r` Schur complement that is maintained incrementally
//! across BFGS updates (see [`pd_check`] for the from-scratch reference
//! formulation), the second by the Cholesky factorization that is then
//! reused for the predictor solve.
//!
//! Convergence is declared when `‖p_g‖∞ ≤ ε`. That norm, reported as
//! [`SolveReport::kkt_residual`], equals at a feasible point the ∞-norm of
//! the Lagrangian gradient `∇f(x) − A_rᵀ λ` at the least-squares multiplier
//! estimate, so no multiplier needs to be stored. (Only the *initial* time
//! step is scaled by the 2-norm, `Δt₀ = min(cap, 1/‖p_g0‖₂)`.)

use std::fmt;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, OwnedRepr};
use ndarray_linalg::{CholeskyFactorized, FactorizeC, SolveC, UPLO};
use thiserror::Error;

use crate::constraints::{ConstraintError, ReducedConstraints};

/// Default tolerance on `‖p_g‖∞` for declaring convergence.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Default acceptance threshold: a trial step is accepted iff `ρ > η_a`.
pub const DEFAULT_ETA_A: f64 = 1e-6;
/// Default inner trust band edge: `|1 − ρ| ≤ η₁` grows the time step.
pub const DEFAULT_ETA_1: f64 = 0.25;
/// Default outer trust band edge: `|1 − ρ| ≥ η₂` shrinks the time step.
pub const DEFAULT_ETA_2: f64 = 0.75;
/// Default growth factor applied to `Δt` inside the inner trust band.
pub const DEFAULT_GAMMA_1: f64 = 2.0;
/// Default shrink factor applied to `Δt` outside the outer trust band.
pub const DEFAULT_GAMMA_2: f64 = 0.5;
/// Default cap for the initial time step `Δt₀ = min(cap, 1/‖p_g0‖₂)`.
pub const DEFAULT_INITIAL_DT_CAP: f64 = 1e-2;
/// Default upper clamp on `Δt`; beyond this the predictor is numerically a
/// projected quasi-Newton step and further growth changes nothing.
pub const DEFAULT_MAX_DT: f64 = 1e8;
/// Default iteration budget (accepted and rejected iterations both count).
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
/// Default relative curvature guard: the BFGS update is skipped when
/// `yᵀs ≤ tol·‖y‖₂‖s‖₂`, keeping `B` positive definite.
pub const DEFAULT_CURVATURE_RTOL: f64 = 1e-10;
/// Default floor under the predicted reduction; a model reduction at or
/// below it is treated as a failed step (`ρ = −1`) to avoid dividing by a
/// denormal or zero denominator.
pub const DEFAULT_MODEL_REDUCTION_FLOOR: f64 = 1e-300;
/// Relative feasibility tolerance used when classifying a run as
/// [`SolveStatus::Converged`]: `‖Ax − b̂‖∞ ≤ tol·(1 + ‖b‖∞)`.
pub const FEASIBILITY_RTOL: f64 = 1e-6;

/// Errors from solver misuse (configuration or shape mistakes).
///
/// Numerical breakdowns during a run are *not* errors; they are reported via
/// [`SolveStatus::NumericalFailure`] on an `Ok` report so that partial
/// progress (iterate, counters, trace) is still available to the caller.
#[derive(Debug, Error)]
pub enum SolverError {
    /// A configuration field violates its documented range.
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    /// Objective and constraints disagree on the number of variables.
    #[error("objective has dimension {objective} but constraints have dimension {constraints}")]
    DimensionMismatch {
        objective: usize,
        constraints: usize,
    },
    /// The starting point has the wrong length.
    #[error("initial point has length {got}, expected {expected}")]
    BadInitialPoint { got: usize, expected: usize },
    /// Constraint handling failed (propagated from the reduction layer).
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    /// `τI + B` is not positive definite, so no predictor step exists.
    #[error("matrix (1/dt)I + B is not positive definite; check pd_check before predictor_step")]
    NotPositiveDefinite,
    /// The BFGS curvature `sᵀBs` is not positive, so the quasi-Newton matrix
    /// has lost definiteness and no further update is meaningful.
    #[error("BFGS curvature s'Bs = {0} is not positive; quasi-Newton matrix lost definiteness")]
    IndefiniteCurvature(f64),
    /// Operands passed to a standalone operation have mismatched shapes.
    #[error("operand shapes disagree: {0}")]
    ShapeMismatch(String),
}

/// A smooth objective `f : ℝⁿ → ℝ` with an analytic gradient.
pub trait Objective {
    /// Number of variables.
    fn dim(&self) -> usize;
    /// Objective value at `x`.
    fn value(&self, x: ArrayView1<'_, f64>) -> f64;
    /// Writes `∇f(x)` into `grad` (length [`Objective::dim`]).
    fn gradient_into(&self, x: ArrayView1<'_, f64>, grad: &mut Array1<f64>);
    /// Convenience allocating wrapper around [`Objective::gradient_into`].
    fn gradient(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut grad = Array1::zeros(x.len());
        self.gradient_into(x, &mut grad);
        grad
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient_into(&self, x: ArrayView1<'_, f64>, grad: &mut Array1<f64>) {
        (**self).gradient_into(x, grad)
    }
}

/// Tunable parameters of the solver. [`SolverConfig::default`] reproduces
/// the published constants; every field is validated by [`solve`].
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence tolerance on `‖p_g‖∞` (`> 0`). Default [`DEFAULT_EPSILON`].
    pub epsilon: f64,
    /// Acceptance threshold for `ρ` (`0 < η_a < η₁`). Default [`DEFAULT_ETA_A`].
    pub eta_a: f64,
    /// Inner trust band edge (`η_a < η₁ < η₂`). Default [`DEFAULT_ETA_1`].
    pub eta_1: f64,
    /// Outer trust band edge (`η₁ < η₂ < 1`). Default [`DEFAULT_ETA_2`].
    pub eta_2: f64,
    /// Time-step growth factor (`> 1`). Default [`DEFAULT_GAMMA_1`].
    pub gamma_1: f64,
    /// Time-step shrink factor (`0 < γ₂ < 1`). Default [`DEFAULT_GAMMA_2`].
    pub gamma_2: f64,
    /// Cap on the initial time step (`> 0`). Default [`DEFAULT_INITIAL_DT_CAP`].
    pub initial_dt_cap: f64,
    /// Upper clamp on `Δt` (`≥ initial_dt_cap`). Default [`DEFAULT_MAX_DT`].
    pub max_dt: f64,
    /// Iteration budget (`≥ 1`). Default [`DEFAULT_MAX_ITERATIONS`].
    pub max_iterations: usize,
    /// Relative curvature guard for BFGS (`≥ 0`). Default
    /// [`DEFAULT_CURVATURE_RTOL`].
    pub curvature_rtol: f64,
    /// Floor under the predicted reduction (`≥ 0`). Default
    /// [`DEFAULT_MODEL_REDUCTION_FLOOR`].
    pub model_reduction_floor: f64,
    /// Overrides `Δt₀ = min(initial_dt_cap, 1/‖p_g0‖₂)` when set (`> 0`).
    /// Intended for experiments and tests; `None` by default.
    pub initial_dt: Option<f64>,
    /// Overrides `B₀ = I` when set (must be symmetric `n × n`). Intended for
    /// supplying an exact Hessian in experiments and tests; `None` by default.
    pub initial_b: Option<Array2<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            eta_a: DEFAULT_ETA_A,
            eta_1: DEFAULT_ETA_1,
            eta_2: DEFAULT_ETA_2,
            gamma_1: DEFAULT_GAMMA_1,
            gamma_2: DEFAULT_GAMMA_2,
            initial_dt_cap: DEFAULT_INITIAL_DT_CAP,
            max_dt: DEFAULT_MAX_DT,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            curvature_rtol: DEFAULT_CURVATURE_RTOL,
            model_reduction_floor: DEFAULT_MODEL_REDUCTION_FLOOR,
            initial_dt: None,
            initial_b: None,
        }
    }
}

impl SolverConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::BadConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            ));
        }
        if !(0.0 < self.eta_a
            && self.eta_a < self.eta_1
            && self.eta_1 < self.eta_2
            && self.eta_2 < 1.0)
        {
            return bad(format!(
                "thresholds must satisfy 0 < eta_a < eta_1 < eta_2 < 1, got eta_a={}, eta_1={}, eta_2={}",
                self.eta_a, self.eta_1, self.eta_2
            ));
        }
        if !(self.gamma_1 > 1.0 && self.gamma_1.is_finite()) {
            return bad(format!("gamma_1 must exceed 1, got {}", self.gamma_1));
        }
        if !(0.0 < self.gamma_2 && self.gamma_2 < 1.0) {
            return bad(format!("gamma_2 must lie in (0, 1), got {}", self.gamma_2));
        }
        if !(self.initial_dt_cap > 0.0 && self.initial_dt_cap.is_finite()) {
            return bad(format!(
                "initial_dt_cap must be positive, got {}",
                self.initial_dt_cap
            ));
        }
        if self.max_dt.is_nan() || self.max_dt < self.initial_dt_cap {
            return bad(format!(
                "max_dt must be at least initial_dt_cap, got max_dt={} < {}",
                self.max_dt, self.initial_dt_cap
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".to_string());
        }
        if self.curvature_rtol.is_nan() || self.curvature_rtol < 0.0 {
            return bad(format!(
                "curvature_rtol must be non-negative, got {}",
                self.curvature_rtol
            ));
        }
        if self.model_reduction_floor.is_nan() || self.model_reduction_floor < 0.0 {
            return bad(format!(
                "model_reduction_floor must be non-negative, got {}",
                self.model_reduction_floor
            ));
        }
        if let Some(dt) = self.initial_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("initial_dt must be positive and finite, got {dt}"));
            }
        }
        if let Some(b0) = &self.initial_b {
            if b0.nrows() != b0.ncols() {
                return bad(format!(
                    "initial_b must be square, got {}x{}",
                    b0.nrows(),
                    b0.ncols()
                ));
            }
            let scale = b0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for i in 0..b0.nrows() {
                for j in 0..i {
                    if (b0[[i, j]] - b0[[j, i]]).abs() > 1e-10 * scale {
                        return bad(format!(
                            "initial_b must be symmetric; entries ({i},{j}) and ({j},{i}) differ"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Terminal classification of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// `‖p_g‖∞ ≤ ε` and the iterate is feasible to [`FEASIBILITY_RTOL`].
    Converged,
    /// The iteration budget was exhausted before convergence.
    IterationLimit,
    /// A numerical breakdown occurred (non-finite objective or gradient,
    /// or loss of BFGS definiteness).
    NumericalFailure,
}

impl SolveStatus {
    /// `true` for [`SolveStatus::Converged`].
    pub fn is_converged(self) -> bool {
        matches!(self, SolveStatus::Converged)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::IterationLimit => "IterationLimit",
            SolveStatus::NumericalFailure => "NumericalFailure",
        };
        f.write_str(name)
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy)]
pub struct IterateRecord {
    /// Iteration index (0-based).
    pub k: usize,
    /// Objective value at the start of the iteration.
    pub f: f64,
    /// `‖p_g‖∞` at the start of the iteration.
    pub pg_norm: f64,
    /// Time step used by this iteration (before its adjustment).
    pub dt: f64,
    /// Trust ratio; `−1` is the sentinel for "no trial evaluated" (failed
    /// positive-definiteness check, vanished model reduction, or a
    /// non-finite trial value).
    pub rho: f64,
    /// Whether the step was applied. Always equal to `rho > eta_a`.
    pub accepted: bool,
    /// Model reduction `q_k(x_k) − q_k(x_k + s)`; `0` when no step existed.
    pub predicted_reduction: f64,
    /// Actual reduction `f(x_k) − f(x_k + s)`; `0` when no trial was evaluated.
    pub actual_reduction: f64,
}

/// Outcome of a run: final iterate, residuals, counters, and the trace.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Terminal classification.
    pub status: SolveStatus,
    /// Final iterate.
    pub x_star: Array1<f64>,
    /// Objective value at [`SolveReport::x_star`].
    pub f_star: f64,
    /// `‖p_g(x_star)‖∞` — the first-order optimality residual. At a feasible
    /// point this equals the ∞-norm of the Lagrangian gradient at the
    /// least-squares multiplier, so the multiplier itself is never formed.
    /// `NaN` when the final gradient evaluation was non-finite.
    pub kkt_residual: f64,
    /// `‖A x_star − b̂‖∞` against the consistent relaxation `b̂ = A x_p` of
    /// the constraints (identical to `‖A x_star − b‖∞` when the system is
    /// consistent).
    pub feasibility_residual: f64,
    /// `‖A x_p − b‖₂` — the irreducible gap of the constraint system itself
    /// (zero for consistent systems), copied from the reduction for
    /// reporting convenience.
    pub relaxation_residual: f64,
    /// Whether the run was *close* to the optimality tolerance without
    /// meeting it. Always `false` here; the penalty baseline sets it.
    pub close: bool,
    /// Total iterations (accepted + rejected).
    pub iterations: usize,
    /// Iterations whose step was applied.
    pub accepted_steps: usize,
    /// Iterations whose step was rejected.
    pub rejected_steps: usize,
    /// Gradient evaluations (one per accepted step, plus the initial one).
    pub gradient_evals: usize,
    /// Objective evaluations (one per trial, plus the initial one).
    pub function_evals: usize,
    /// Time step after the final adjustment.
    pub final_dt: f64,
    /// Wall-clock duration of the run in seconds.
    pub elapsed_seconds: f64,
    /// Per-iteration records, in order.
    pub trace: Vec<IterateRecord>,
}

/// Everything an observer may inspect about one iteration.
///
/// `b` is the model matrix `B_k` that produced this iteration's predictor
/// and `predicted_reduction`; the post-update matrix is delivered separately
/// through [`IterationObserver::on_b_updated`].
#[derive(Debug)]
pub struct IterationEvent<'a> {
    /// Iteration index (0-based).
    pub k: usize,
    /// Time step used by this iteration.
    pub dt: f64,
    /// Trust ratio (`−1` sentinel as in [`IterateRecord::rho`]).
    pub rho: f64,
    /// Whether both positive-definiteness tests passed.
    pub pd_ok: bool,
    /// Whether the step was applied.
    pub accepted: bool,
    /// Objective value at the start of the iteration.
    pub f: f64,
    /// Trial objective value (`NaN` when no trial was evaluated).
    pub f_trial: f64,
    /// Model reduction for the projected step (`0` when no step existed).
    pub predicted_reduction: f64,
    /// Actual reduction (`0` when no trial was evaluated).
    pub actual_reduction: f64,
    /// Projected gradient `p_g` at the start of the iteration.
    pub pg: ArrayView1<'a, f64>,
    /// The projected step `s = Pd`, when the predictor ran.
    pub step: Option<ArrayView1<'a, f64>>,
    /// The model matrix `B_k`.
    pub b: &'a Array2<f64>,
}

/// Callback hooks into the iteration loop; all methods default to no-ops.
pub trait IterationObserver {
    /// Called once per iteration, after acceptance is decided but before the
    /// BFGS update and time-step adjustment.
    fn on_iteration(&mut self, _event: &IterationEvent<'_>) {}
    /// Called after each *applied* BFGS update with the new matrix
    /// `B_{k+1}` (skipped updates do not fire).
    fn on_b_updated(&mut self, _b: &Array2<f64>) {}
}

/// The trivial observer.
impl IterationObserver for () {}

/// Outcome of a BFGS update attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsOutcome {
    /// The rank-two update was applied.
    Updated,
    /// The update was skipped by the curvature guard; `B` is unchanged.
    Skipped,
}

type Chol = CholeskyFactorized<OwnedRepr<f64>>;

pub(crate) fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub(crate) fn inf_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `v − V_r (V_rᵀ v)` without forming the projector.
fn project_tangent(v: ArrayView1<'_, f64>, v_r: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut out = v.to_owned();
    if v_r.ncols() > 0 {
        let coeff = v_r.t().dot(&v);
        out.scaled_add(-1.0, &v_r.dot(&coeff));
    }
    out
}

/// `b += coeff · v wᵀ` for a rectangular `b` (`v` spans rows, `w` columns).
pub(crate) fn rank_one_update(
    b: &mut Array2<f64>,
    coeff: f64,
    v: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
) {
    for (i, mut row) in b.rows_mut().into_iter().enumerate() {
        let c = coeff * v[i];
        if c != 0.0 {
            row.scaled_add(c, &w);
        }
    }
}

/// The initial time step `min(cap, 1/‖p_g0‖₂)` (the cap alone if the
/// gradient already vanishes).
pub fn initial_time_step(pg_norm: f64, cap: f64) -> f64 {
    if pg_norm > 0.0 {
        cap.min(1.0 / pg_norm)
    } else {
        cap
    }
}

/// The time-step adjustment applied after every iteration: grow by `γ₁`
/// when `|1 − ρ| ≤ η₁`, keep when `η₁ < |1 − ρ| < η₂`, shrink by `γ₂`
/// otherwise; growth is clamped at `max_dt`.
pub fn adjust_time_step(rho: f64, dt: f64, config: &SolverConfig) -> f64 {
    let gap = (1.0 - rho).abs();
    if gap <= config.eta_1 {
        (config.gamma_1 * dt).min(config.max_dt)
    } else if gap < config.eta_2 {
        dt
    } else {
        config.gamma_2 * dt
    }
}

/// Applies the damped-free BFGS update
/// `B ← B − (Bs)(Bs)ᵀ/(sᵀBs) + yyᵀ/(yᵀs)` in place.
///
/// The update is skipped (returning [`BfgsOutcome::Skipped`]) when the
/// curvature `yᵀs` fails the relative guard `yᵀs > curvature_rtol·‖y‖‖s‖`,
/// which preserves positive definiteness. A non-positive `sᵀBs` means `B`
/// was already indefinite and yields [`SolverError::IndefiniteCurvature`].
pub fn bfgs_update(
    b: &mut Array2<f64>,
    s: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    curvature_rtol: f64,
) -> Result<BfgsOutcome, SolverError> {
    if b.nrows() != b.ncols() || b.nrows() != s.len() || s.len() != y.len() {
        return Err(SolverError::ShapeMismatch(format!(
            "B is {}x{}, s has length {}, y has length {}",
            b.nrows(),
            b.ncols(),
            s.len(),
            y.len()
        )));
    }
    let u = b.dot(&s);
    let applied = apply_bfgs_with_u(b, s, y, &u, curvature_rtol)?;
    Ok(if applied.is_some() {
        BfgsOutcome::Updated
    } else {
        BfgsOutcome::Skipped
    })
}

/// Core of the BFGS update with `u = B s` precomputed. On success returns
/// the rank-two coefficients `(a, β) = (1/sᵀBs, 1/yᵀs)` needed by the
/// incremental Schur-state maintenance, or `None` if the guard skipped.
fn apply_bfgs_with_u(
    b: &mut Array2<f64>,
    s: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    u: &Array1<f64>,
    curvature_rtol: f64,
) -> Result<Option<(f64, f64)>, SolverError> {
    let ys = y.dot(&s);
    if ys <= curvature_rtol * norm2(y) * norm2(s) {
        return Ok(None);
    }
    let sbs = s.dot(u);
    if sbs <= 0.0 {
        return Err(SolverError::IndefiniteCurvature(sbs));
    }
    let a = 1.0 / sbs;
    let beta = 1.0 / ys;
    rank_one_update(b, -a, u.view(), u.view());
    rank_one_update(b, beta, y, y);
    Ok(Some((a, beta)))
}

/// Incrementally maintained ingredients of the reduced positive-definiteness
/// test. With `B_RR = V_rᵀ B V_r`, `Z = (I − V_r V_rᵀ) B V_r`, and
/// `G = ZᵀZ` (exactly positive semidefinite by construction), the matrix
/// `τI + B − PᵀBP` is positive definite iff its `r × r` Schur complement
/// `S = τI_r + B_RR − Δt·G` is (the tangent block is `τI ≻ 0` always).
///
/// Keeping `G` in the Gram form `ZᵀZ` instead of as a general difference
/// matters: for the default `B₀ = I` start, `Z` stays near zero and the
/// `Δt·G` term remains negligible even at the `Δt = 1e8` clamp, where a
/// difference form would amplify rounding in `B` by eight orders of
/// magnitude.
struct SchurState {
    b_rr: Array2<f64>,
    z: Array2<f64>,
    g: Array2<f64>,
}

impl SchurState {
    fn rank(&self) -> usize {
        self.b_rr.nrows()
    }

    /// State for `B = I`: `B_RR = I_r`, `Z = 0`, `G = 0`.
    fn identity(n: usize, r: usize) -> Self {
        Self {
            b_rr: Array2::eye(r),
            z: Array2::zeros((n, r)),
            g: Array2::zeros((r, r)),
        }
    }

    /// Honest `O(n²r)` construction from a dense `B` (reference path; used
    /// for custom `B₀` and by [`pd_check`]).
    fn from_dense(b: &Array2<f64>, v_r: ArrayView2<'_, f64>) -> Self {
        let bv = b.dot(&v_r);
        let b_rr = v_r.t().dot(&bv);
        let z = &bv - &v_r.dot(&b_rr);
        let g = z.t().dot(&z);
        Self { b_rr, z, g }
    }

    /// `S = τ I_r + B_RR − Δt·G`.
    fn reduced_matrix(&self, tau: f64, dt: f64) -> Array2<f64> {
        let mut s = self.g.mapv(|x| -dt * x);
        s += &self.b_rr;
        s.diag_mut().mapv_inplace(|x| x + tau);
        s
    }

    /// Applies the effect of `B += −a·uuᵀ + β·yyᵀ` in `O(nr + r²)`.
    ///
    /// With `q = V_rᵀu`, `t = V_rᵀy`, `z₁ = −a·Pu`, `z₂ = β·Py`:
    /// `B_RR += −a·qqᵀ + β·ttᵀ`, `Z += z₁qᵀ + z₂tᵀ`, and `G = ZᵀZ` expands
    /// to rank-four corrections built from `w₁ = Zᵀz₁`, `w₂ = Zᵀz₂` (old
    /// `Z`) plus the Gram scalars of `z₁, z₂`.
    fn apply_rank_two(
        &mut self,
        v_r: ArrayView2<'_, f64>,
        u: &Array1<f64>,
        y: ArrayView1<'_, f64>,
        a: f64,
        beta: f64,
    ) {
        if self.rank() == 0 {
            return;
        }
        let q = v_r.t().dot(u);
        let t = v_r.t().dot(&y);
        let mut z1 = u - &v_r.dot(&q);
        z1.mapv_inplace(|x| -a * x);
        let mut z2 = &y - &v_r.dot(&t);
        z2.mapv_inplace(|x| beta * x);

        let w1 = self.z.t().dot(&z1);
        let w2 = self.z.t().dot(&z2);
        let z11 = z1.dot(&z1);
        let z12 = z1.dot(&z2);
        let z22 = z2.dot(&z2);

        rank_one_update(&mut self.g, 1.0, q.view(), w1.view());
        rank_one_update(&mut self.g, 1.0, w1.view(), q.view());
        rank_one_update(&mut self.g, 1.0, t.view(), w2.view());
        rank_one_update(&mut self.g, 1.0, w2.view(), t.view());
        rank_one_update(&mut self.g, z11, q.view(), q.view());
        rank_one_update(&mut self.g, z12, q.view(), t.view());
        rank_one_update(&mut self.g, z12, t.view(), q.view());
        rank_one_update(&mut self.g, z22, t.view(), t.view());

        rank_one_update(&mut self.z, 1.0, z1.view(), q.view());
        rank_one_update(&mut self.z, 1.0, z2.view(), t.view());

        rank_one_update(&mut self.b_rr, -a, q.view(), q.view());
        rank_one_update(&mut self.b_rr, beta, t.view(), t.view());
    }
}

/// Runs both positive-definiteness tests. On success returns the Cholesky
/// factorization of `τI + B`, which the caller reuses for the predictor
/// solve.
fn try_factorize_pd(dt: f64, b: &Array2<f64>, schur: &SchurState) -> Option<Chol> {
    let tau = 1.0 / dt;
    if schur.rank() > 0 {
        let s = schur.reduced_matrix(tau, dt);
        let ok: Result<Chol, _> = s.factorizec(UPLO::Lower);
        if ok.is_err() {
            return None;
        }
    }
    let mut m = b.clone();
    m.diag_mut().mapv_inplace(|x| x + tau);
    m.factorizec(UPLO::Lower).ok()
}

/// Whether both `τI + B − PᵀBP` and `τI + B` are positive definite for
/// `τ = 1/Δt`.
///
/// This is the from-scratch reference formulation (it rebuilds the reduced
/// test data in `O(n²r)`); the iteration loop maintains the same quantities
/// incrementally and the two are unit-tested to agree.
///
/// # Panics
///
/// Panics if `b` is not square of the constraint dimension or `dt ≤ 0`
/// (programmer error, as with indexing).
pub fn pd_check(dt: f64, b: &Array2<f64>, constraints: &ReducedConstraints) -> bool {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    assert_eq!(b.nrows(), b.ncols(), "B must be square");
    assert_eq!(
        b.nrows(),
        constraints.n(),
        "B must match the constraint dimension"
    );
    let schur = SchurState::from_dense(b, constraints.v_r());
    try_factorize_pd(dt, b, &schur).is_some()
}

/// Solves `(1/Δt·I + B) d = −p_g` and returns the projected step `s = Pd`.
///
/// Standalone counterpart of the predictor inside [`solve`] (which retains
/// the factorization from its positive-definiteness check instead of
/// refactorizing).
pub fn predictor_step(
    dt: f64,
    b: &Array2<f64>,
    pg: ArrayView1<'_, f64>,
    constraints: &ReducedConstraints,
) -> Result<Array1<f64>, SolverError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(SolverError::BadConfig(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = constraints.n();
    if b.nrows() != b.ncols() || b.nrows() != n || pg.len() != n {
        return Err(SolverError::ShapeMismatch(format!(
            "B is {}x{}, pg has length {}, constraints have dimension {n}",
            b.nrows(),
            b.ncols(),
            pg.len()
        )));
    }
    let tau = 1.0 / dt;
    let mut m = b.clone();
    m.diag_mut().mapv_inplace(|x| x + tau);
    let chol: Chol = m
        .factorizec(UPLO::Lower)
        .map_err(|_| SolverError::NotPositiveDefinite)?;
    let neg_pg = pg.mapv(|x| -x);
    let d = chol
        .solvec(&neg_pg)
        .map_err(|_| SolverError::NotPositiveDefinite)?;
    Ok(project_tangent(d.view(), constraints.v_r()))
}

/// Runs the solver with the trivial observer. See [`solve_with_observer`].
pub fn solve<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    x0: Array1<f64>,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    solve_with_observer(objective, constraints, x0, config, &mut ())
}

/// Runs the continuation solver from `x0` until `‖p_g‖∞ ≤ ε`, the iteration
/// budget runs out, or a numerical breakdown occurs.
///
/// `x0` is first restored to feasibility by the projection
/// `x0 + V_r(b_r − V_rᵀx0)`; every subsequent step moves within the tangent
/// space, so feasibility is maintained throughout.
///
/// Returns `Err` only for misuse (invalid configuration, shape mismatch);
/// numerical breakdowns produce an `Ok` report with
/// [`SolveStatus::NumericalFailure`].
pub fn solve_with_observer<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    x0: Array1<f64>,
    config: &SolverConfig,
    observer: &mut dyn IterationObserver,
) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    config.validate()?;
    let n = objective.dim();
    if n != constraints.n() {
        return Err(SolverError::DimensionMismatch {
            objective: n,
            constraints: constraints.n(),
        });
    }
    if x0.len() != n {
        return Err(SolverError::BadInitialPoint {
            got: x0.len(),
            expected: n,
        });
    }
    if let Some(b0) = &config.initial_b {
        if b0.nrows() != n {
            return Err(SolverError::BadConfig(format!(
                "initial_b is {}x{} but the problem has {n} variables",
                b0.nrows(),
                b0.ncols()
            )));
        }
    }
    let v_r = constraints.v_r();
    let r = constraints.rank();

    // Feasibility restoration of the starting point.
    let mut x = constraints.project_point(x0.view())?;
    let mut f = objective.value(x.view());
    let mut function_evals = 1_usize;
    let mut g = objective.gradient(x.view());
    let mut gradient_evals = 1_usize;

    let finish = |status: SolveStatus,
                  x: Array1<f64>,
                  f: f64,
                  kkt: f64,
                  iterations: usize,
                  accepted_steps: usize,
                  rejected_steps: usize,
                  gradient_evals: usize,
                  function_evals: usize,
                  final_dt: f64,
                  trace: Vec<IterateRecord>| {
        let feasibility_residual = constraints.feasibility_residual_inf(x.view());
        SolveReport {
            status,
            f_star: f,
            kkt_residual: kkt,
            feasibility_residual,
            relaxation_residual: constraints.relaxation_residual(),
            close: false,
            iterations,
            accepted_steps,
            rejected_steps,
            gradient_evals,
            function_evals,
            final_dt,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            trace,
            x_star: x,
        }
    };

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Ok(finish(
            SolveStatus::NumericalFailure,
            x,
            f,
            f64::NAN,
            0,
            0,
            0,
            gradient_evals,
            function_evals,
            0.0,
            Vec::new(),
        ));
    }

    let mut b = match &config.initial_b {
        Some(b0) => b0.clone(),
        None => Array2::eye(n),
    };
    let mut schur = match &config.initial_b {
        Some(_) => SchurState::from_dense(&b, v_r),
        None => SchurState::identity(n, r),
    };

    let mut pg = project_tangent(g.view(), v_r);
    let mut pg_inf = inf_norm(pg.view());
    let mut dt = config
        .initial_dt
        .unwrap_or_else(|| initial_time_step(norm2(pg.view()), config.initial_dt_cap));

    let mut trace: Vec<IterateRecord> = Vec::new();
    let mut iterations = 0_usize;
    let mut accepted_steps = 0_usize;
    let mut rejected_steps = 0_usize;
    // Set on breakdown inside the loop; also marks kkt_residual unusable
    // when the final gradient itself was non-finite.
    let mut breakdown: Option<SolveStatus> = None;
    let mut gradient_is_bad = false;

    while pg_inf > config.epsilon && iterations < config.max_iterations {
        let factor = try_factorize_pd(dt, &b, &schur);
        let pd_ok = factor.is_some();

        let mut rho = -1.0_f64;
        let mut pred = 0.0_f64;
        let mut actual = 0.0_f64;
        let mut f_trial = f64::NAN;
        let mut step: Option<Array1<f64>> = None;
        let mut u_bs: Option<Array1<f64>> = None;
        let mut x_trial: Option<Array1<f64>> = None;

        if let Some(chol) = factor {
            let neg_pg = pg.mapv(|v| -v);
            if let Ok(d) = chol.solvec(&neg_pg) {
                let s = project_tangent(d.view(), v_r);
                let u = b.dot(&s);
                pred = -pg.dot(&s) - 0.5 * s.dot(&u);
                if pred > config.model_reduction_floor {
                    let xt = &x + &s;
                    let ft = objective.value(xt.view());
                    function_evals += 1;
                    f_trial = ft;
                    if ft.is_finite() {
                        actual = f - ft;
                        rho = actual / pred;
                        x_trial = Some(xt);
                    }
                }
                step = Some(s);
                u_bs = Some(u);
            }
        }

        let accepted = rho > config.eta_a;
        observer.on_iteration(&IterationEvent {
            k: iterations,
            dt,
            rho,
            pd_ok,
            accepted,
            f,
            f_trial,
            predicted_reduction: pred,
            actual_reduction: actual,
            pg: pg.view(),
            step: step.as_ref().map(|s| s.view()),
            b: &b,
        });
        trace.push(IterateRecord {
            k: iterations,
            f,
            pg_norm: pg_inf,
            dt,
            rho,
            accepted,
            predicted_reduction: pred,
            actual_reduction: actual,
        });
        iterations += 1;

        if accepted {
            accepted_steps += 1;
            let s = step.expect("accepted step exists");
            let u = u_bs.expect("accepted step has B·s");
            x = x_trial.expect("accepted step has a trial point");
            f = f_trial;
            objective.gradient_into(x.view(), &mut g);
            gradient_evals += 1;
            if g.iter().any(|v| !v.is_finite()) {
                breakdown = Some(SolveStatus::NumericalFailure);
                gradient_is_bad = true;
                break;
            }
            let pg_new = project_tangent(g.view(), v_r);
            let y = &pg_new - &pg;
            match apply_bfgs_with_u(&mut b, s.view(), y.view(), &u, config.curvature_rtol) {
                Ok(Some((a, beta))) => {
                    schur.apply_rank_two(v_r, &u, y.view(), a, beta);
                    observer.on_b_updated(&b);
                }
                Ok(None) => {}
                Err(_) => {
                    pg = pg_new;
                    pg_inf = inf_norm(pg.view());
                    breakdown = Some(SolveStatus::NumericalFailure);
                    break;
                }
            }
            pg = pg_new;
            pg_inf = inf_norm(pg.view());
        } else {
            rejected_steps += 1;
        }

        dt = adjust_time_step(rho, dt, config);
    }

    let kkt = if gradient_is_bad { f64::NAN } else { pg_inf };
    let status = if let Some(s) = breakdown {
        s
    } else if pg_inf <= config.epsilon {
        let feas = constraints.feasibility_residual_inf(x.view());
        let feas_tol = FEASIBILITY_RTOL * (1.0 + inf_norm(constraints.raw().b()));
        if feas <= feas_tol {
            SolveStatus::Converged
        } else {
            // Unreachable for exact projections; kept so the Converged
            // invariant (small KKT *and* feasibility) can never silently lie.
            SolveStatus::NumericalFailure
        }
    } else {
        SolveStatus::IterationLimit
    };

    Ok(finish(
        status,
        x,
        f,
        kkt,
        iterations,
        accepted_steps,
        rejected_steps,
        gradient_evals,
        function_evals,
        dt,
        trace,
    ))
}
