//! Baseline methods for comparison against the continuation solver.
//!
//! * [`penalty_solve`] — a classical quadratic-penalty method: minimize
//!   `P_σ(x) = f(x) + σ‖Ax − b‖²` for a growing sequence of weights `σ`
//!   with a dense inverse-BFGS inner solver and Armijo backtracking.
//! * [`penalty_conditioning`] / [`conditioning_at_point`] — the diagnostic
//!   that makes the penalty method's weakness quantitative: the spectral
//!   condition number of `H_σ = ∇²f + 2σAᵀA`, which grows without bound as
//!   `σ → ∞` whenever `A` has a nontrivial null space.
//! * [`gradient_flow_solve`] — an explicit adaptive second/third-order
//!   Runge–Kutta integrator for the projected gradient flow
//!   `dx/dt = −P∇f(x)`, following the same flow as the continuation solver
//!   but resolving it accurately instead of skipping along it; useful as a
//!   robustness/efficiency baseline.
//!
//! All three report through the shared [`SolveReport`] so the command-line
//! front end and the benchmarks can treat solvers uniformly. Fields that do
//! not apply keep documented sentinel semantics (see each function).

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::constraints::ReducedConstraints;
use crate::linalg::sym_eigenvalues;
use crate::solver::{
    inf_norm, initial_time_step, norm2, rank_one_update, IterateRecord, Objective, SolveReport,
    SolveStatus, SolverError, FEASIBILITY_RTOL,
};

/// Relative step used by [`fd_hessian`] probes.
pub const FD_HESSIAN_STEP: f64 = 1e-5;

/// Errors specific to the conditioning diagnostic.
#[derive(Debug, Error)]
pub enum ConditioningError {
    /// Penalty weights must be finite and non-negative.
    #[error("penalty weight sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
    /// The probe point has the wrong length.
    #[error("probe point has length {got}, expected {expected}")]
    BadProbe { got: usize, expected: usize },
    /// The symmetric eigensolver failed on `H_sigma`.
    #[error("eigendecomposition of the penalty Hessian failed: {0}")]
    Eigen(String),
}

/// Configuration of the quadratic-penalty baseline.
///
/// Defaults mirror a standard textbook setup: unit starting weight grown by
/// 10 per stage, an inner solver pushed to `‖∇P_σ‖∞ ≤ 1e-8`, and the same
/// outer optimality tolerance (`1e-6`) the continuation solver uses.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// First penalty weight (`> 0`). Default `1`.
    pub sigma0: f64,
    /// Multiplicative growth per stage (`> 1`). Default `10`.
    pub growth: f64,
    /// Inner tolerance on `‖∇P_σ‖∞` (`> 0`). Default `1e-8`.
    pub inner_tol: f64,
    /// Outer tolerance on the projected gradient `‖P∇f‖∞` (`> 0`).
    /// Default `1e-6`.
    pub kkt_tol: f64,
    /// Number of penalty stages (`≥ 1`). Default `12`.
    pub max_outer: usize,
    /// Inner-iteration budget per stage (`≥ 1`). Default `400`.
    pub max_inner_iterations: usize,
    /// Armijo sufficient-decrease constant (`0 < c₁ < 1`). Default `1e-4`.
    pub armijo_c1: f64,
    /// Backtracking factor (`0 < β < 1`). Default `0.5`.
    pub backtrack_factor: f64,
    /// Maximum backtracking halvings per line search (`≥ 1`). Default `60`.
    pub max_backtracks: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            growth: 10.0,
            inner_tol: 1e-8,
            kkt_tol: 1e-6,
            max_outer: 12,
            max_inner_iterations: 400,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
        }
    }
}

impl PenaltyConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::BadConfig(msg));
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad(format!(
                "sigma0 must be positive and finite, got {}",
                self.sigma0
            ));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return bad(format!("growth must exceed 1, got {}", self.growth));
        }
        if self.inner_tol.is_nan() || self.inner_tol <= 0.0 {
            return bad(format!(
                "inner_tol must be positive, got {}",
                self.inner_tol
            ));
        }
        if self.kkt_tol.is_nan() || self.kkt_tol <= 0.0 {
            return bad(format!("kkt_tol must be positive, got {}", self.kkt_tol));
        }
        if self.max_outer == 0 || self.max_inner_iterations == 0 || self.max_backtracks == 0 {
            return bad("max_outer, max_inner_iterations, and max_backtracks must be >= 1".into());
        }
        if !(0.0 < self.armijo_c1 && self.armijo_c1 < 1.0) {
            return bad(format!(
                "armijo_c1 must lie in (0, 1), got {}",
                self.armijo_c1
            ));
        }
        if !(0.0 < self.backtrack_factor && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        Ok(())
    }
}

/// Outcome of one unconstrained inner minimization.
struct InnerOutcome {
    x: Array1<f64>,
    iterations: usize,
    function_evals: usize,
    gradient_evals: usize,
    converged: bool,
    numerical_failure: bool,
}

/// Dense inverse-BFGS minimization with Armijo backtracking.
///
/// Stops at `‖g‖∞ ≤ tol_inf`, on the iteration budget, when the line search
/// cannot find decrease, or after three consecutive iterations of
/// relative-epsilon progress (stagnation under severe ill-conditioning —
/// exactly the regime the penalty method enters at large `σ`).
// The scalar knobs mirror PenaltyConfig fields one-to-one; a params struct
// would only restate that config.
#[allow(clippy::too_many_arguments)]
fn minimize_bfgs<F, G>(
    mut value: F,
    mut gradient: G,
    mut x: Array1<f64>,
    tol_inf: f64,
    max_iterations: usize,
    c1: f64,
    backtrack: f64,
    max_backtracks: usize,
) -> InnerOutcome
where
    F: FnMut(ArrayView1<'_, f64>) -> f64,
    G: FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
{
    let n = x.len();
    let mut function_evals = 1_usize;
    let mut gradient_evals = 1_usize;
    let mut f = value(x.view());
    let mut g = gradient(x.view());
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return InnerOutcome {
            x,
            iterations: 0,
            function_evals,
            gradient_evals,
            converged: false,
            numerical_failure: true,
        };
    }

    let mut h = Array2::<f64>::eye(n);
    let mut iterations = 0_usize;
    let mut converged = false;
    let mut numerical_failure = false;
    let mut stagnant = 0_u32;

    while iterations < max_iterations {
        if inf_norm(g.view()) <= tol_inf {
            converged = true;
            break;
        }
        let mut d = h.dot(&g).mapv(|v| -v);
        let mut slope = g.dot(&d);
        if slope >= 0.0 || slope.is_nan() {
            // The inverse model lost definiteness numerically; restart it.
            h = Array2::eye(n);
            d = g.mapv(|v| -v);
            slope = -g.dot(&g);
            if slope == 0.0 {
                converged = true;
                break;
            }
        }

        let mut t = 1.0_f64;
        let mut found: Option<(Array1<f64>, f64)> = None;
        for _ in 0..max_backtracks {
            let mut xt = x.clone();
            xt.scaled_add(t, &d);
            let ft = value(xt.view());
            function_evals += 1;
            if ft.is_finite() && ft <= f + c1 * t * slope {
                found = Some((xt, ft));
                break;
            }
            t *= backtrack;
        }
        let Some((x_new, f_new)) = found else {
            break; // line-search stagnation: no representable decrease left
        };
        let g_new = gradient(x_new.view());
        gradient_evals += 1;
        if g_new.iter().any(|v| !v.is_finite()) {
            numerical_failure = true;
            break;
        }

        let s = &x_new - &x;
        let y = &g_new - &g;
        let ys = y.dot(&s);
        if ys > 1e-10 * norm2(y.view()) * norm2(s.view()) {
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ, expanded into three
            // rank-one corrections around hy = Hy.
            let rho = 1.0 / ys;
            let hy = h.dot(&y);
            let yhy = y.dot(&hy);
            rank_one_update(&mut h, -rho, s.view(), hy.view());
            rank_one_update(&mut h, -rho, hy.view(), s.view());
            rank_one_update(&mut h, rho * rho * yhy + rho, s.view(), s.view());
        }

        if f - f_new <= 1e-16 * (1.0 + f.abs()) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        if stagnant >= 3 {
            break;
        }
    }
    if !converged && inf_norm(g.view()) <= tol_inf {
        converged = true;
    }

    InnerOutcome {
        x,
        iterations,
        function_evals,
        gradient_evals,
        converged,
        numerical_failure,
    }
}

/// Runs the quadratic-penalty baseline.
///
/// Starting from `x0` (used as-is — the penalty method needs no feasible
/// start), each stage minimizes `P_σ(x) = f(x) + σ‖Ax − b‖²` with a dense
/// inverse-BFGS inner solver warm-started from the previous stage, then
/// grows `σ`. The run converges when the projected gradient and the
/// feasibility residual both meet their tolerances; otherwise the best
/// iterate seen (feasibility first, then optimality) is reported with
/// [`SolveStatus::IterationLimit`], and [`SolveReport::close`] is set when
/// that iterate is feasible to tolerance but misses the optimality
/// tolerance — the hallmark failure of the penalty approach on
/// ill-conditioned stages.
///
/// Report conventions specific to this baseline: `iterations` counts inner
/// iterations across all stages, `rejected_steps` is 0, `final_dt` carries
/// the last penalty weight `σ`, and each trace row describes one stage
/// (`k` = stage, `dt` = σ, `pg_norm` = `‖P∇f‖∞` at the stage's end,
/// `accepted` = inner convergence, `rho = −1` as an n/a sentinel).
pub fn penalty_solve<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    x0: Array1<f64>,
    config: &PenaltyConfig,
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

    let a = constraints.raw().a();
    let b = constraints.raw().b();
    let feas_tol = FEASIBILITY_RTOL * (1.0 + inf_norm(b));

    let mut x = x0;
    let mut sigma = config.sigma0;
    let mut total_inner = 0_usize;
    let mut function_evals = 0_usize;
    let mut gradient_evals = 0_usize;
    let mut trace: Vec<IterateRecord> = Vec::new();

    // Best iterate so far: feasible-to-tolerance beats infeasible; within a
    // class, smaller optimality (resp. feasibility) residual wins.
    struct Best {
        x: Array1<f64>,
        f: f64,
        kkt: f64,
        feas: f64,
    }
    let mut best: Option<Best> = None;
    let mut converged = false;
    let mut numerical_failure = false;
    let mut last_sigma = sigma;

    for stage in 0..config.max_outer {
        last_sigma = sigma;
        let stage_sigma = sigma;
        let value_p = |xv: ArrayView1<'_, f64>| {
            let r = &a.dot(&xv) - &b;
            objective.value(xv) + stage_sigma * r.dot(&r)
        };
        let grad_p = |xv: ArrayView1<'_, f64>| {
            let r = &a.dot(&xv) - &b;
            let mut g = objective.gradient(xv);
            g.scaled_add(2.0 * stage_sigma, &a.t().dot(&r));
            g
        };
        let outcome = minimize_bfgs(
            value_p,
            grad_p,
            x,
            config.inner_tol,
            config.max_inner_iterations,
            config.armijo_c1,
            config.backtrack_factor,
            config.max_backtracks,
        );
        x = outcome.x;
        total_inner += outcome.iterations;
        function_evals += outcome.function_evals;
        gradient_evals += outcome.gradient_evals;

        let f_x = objective.value(x.view());
        let g_x = objective.gradient(x.view());
        function_evals += 1;
        gradient_evals += 1;
        if outcome.numerical_failure || !f_x.is_finite() || g_x.iter().any(|v| !v.is_finite()) {
            numerical_failure = true;
            break;
        }
        let kkt = inf_norm(constraints.apply_projector(g_x.view())?.view());
        let feas = constraints.feasibility_residual_inf(x.view());

        trace.push(IterateRecord {
            k: stage,
            f: f_x,
            pg_norm: kkt,
            dt: stage_sigma,
            rho: -1.0,
            accepted: outcome.converged,
            predicted_reduction: 0.0,
            actual_reduction: 0.0,
        });

        let candidate = Best {
            x: x.clone(),
            f: f_x,
            kkt,
            feas,
        };
        let take = match &best {
            None => true,
            Some(inc) => {
                let cand_ok = candidate.feas <= feas_tol;
                let inc_ok = inc.feas <= feas_tol;
                match (cand_ok, inc_ok) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => candidate.kkt < inc.kkt,
                    (false, false) => candidate.feas < inc.feas,
                }
            }
        };
        if take {
            best = Some(candidate);
        }

        if kkt <= config.kkt_tol && feas <= feas_tol {
            converged = true;
            break;
        }
        sigma *= config.growth;
    }

    let best = best.unwrap_or(Best {
        x,
        f: f64::NAN,
        kkt: f64::NAN,
        feas: f64::NAN,
    });
    let status = if converged {
        SolveStatus::Converged
    } else if numerical_failure && !best.f.is_finite() {
        SolveStatus::NumericalFailure
    } else {
        SolveStatus::IterationLimit
    };
    let close =
        status != SolveStatus::Converged && best.feas <= feas_tol && best.kkt > config.kkt_tol;

    Ok(SolveReport {
        status,
        f_star: best.f,
        kkt_residual: best.kkt,
        feasibility_residual: best.feas,
        relaxation_residual: constraints.relaxation_residual(),
        close,
        iterations: total_inner,
        accepted_steps: total_inner,
        rejected_steps: 0,
        gradient_evals,
        function_evals,
        final_dt: last_sigma,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        trace,
        x_star: best.x,
    })
}

/// Central-difference Hessian of `f`, built column-wise from gradient
/// probes with per-coordinate step `step·(1 + |x_i|)` and symmetrized.
pub fn fd_hessian<O: Objective>(objective: &O, x: ArrayView1<'_, f64>, step: f64) -> Array2<f64> {
    let n = x.len();
    let mut h = Array2::zeros((n, n));
    let mut xp = x.to_owned();
    for i in 0..n {
        let hi = step * (1.0 + x[i].abs());
        xp[i] = x[i] + hi;
        let gp = objective.gradient(xp.view());
        xp[i] = x[i] - hi;
        let gm = objective.gradient(xp.view());
        xp[i] = x[i];
        let col = (&gp - &gm) / (2.0 * hi);
        h.column_mut(i).assign(&col);
    }
    // Exact Hessians are symmetric; average out the finite-difference skew.
    let ht = h.t().to_owned();
    h += &ht;
    h.mapv_inplace(|v| 0.5 * v);
    h
}

/// One row of a conditioning sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningRow {
    /// Penalty weight.
    pub sigma: f64,
    /// Spectral condition number `κ₂(H_σ)`; `+∞` when `H_σ` is singular to
    /// working precision.
    pub kappa: f64,
}

/// Condition number of `H_σ = ∇²f(probe) + 2σAᵀA` for each requested `σ`,
/// with the Hessian obtained by central differences of the gradient.
///
/// Rows come back in the given order (which need not be sorted — callers
/// that care about monotonicity should sort first).
pub fn conditioning_at_point<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    probe: ArrayView1<'_, f64>,
    sigmas: &[f64],
) -> Result<Vec<ConditioningRow>, ConditioningError> {
    let n = constraints.n();
    if probe.len() != n {
        return Err(ConditioningError::BadProbe {
            got: probe.len(),
            expected: n,
        });
    }
    for &s in sigmas {
        if !(s.is_finite() && s >= 0.0) {
            return Err(ConditioningError::BadSigma(s));
        }
    }
    let hess_f = fd_hessian(objective, probe, FD_HESSIAN_STEP);
    let a = constraints.raw().a();
    let ata = a.t().dot(&a);
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut h_sigma = ata.mapv(|v| 2.0 * sigma * v);
        h_sigma += &hess_f;
        let eigs =
            sym_eigenvalues(&h_sigma).map_err(|e| ConditioningError::Eigen(e.to_string()))?;
        let max_abs = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min_abs = eigs.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let kappa = if min_abs <= f64::MIN_POSITIVE * max_abs.max(1.0) || max_abs == 0.0 {
            f64::INFINITY
        } else {
            max_abs / min_abs
        };
        rows.push(ConditioningRow { sigma, kappa });
    }
    Ok(rows)
}

/// Condition number of the penalty Hessian along the penalty path: for each
/// `σ` (in the given order), minimizes `P_σ` from the warm-started iterate
/// and evaluates [`conditioning_at_point`] at that minimizer.
///
/// For `σ = 0` the unconstrained objective itself is minimized (penalty
/// disabled), so the row reports `κ₂(∇²f)` at the free minimizer.
pub fn penalty_conditioning<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    x0: Array1<f64>,
    sigmas: &[f64],
    config: &PenaltyConfig,
) -> Result<Vec<ConditioningRow>, SolverError> {
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
    for &s in sigmas {
        if !(s.is_finite() && s >= 0.0) {
            return Err(SolverError::BadConfig(format!(
                "penalty weight sigma must be finite and non-negative, got {s}"
            )));
        }
    }
    let a = constraints.raw().a();
    let b = constraints.raw().b();
    let mut x = x0;
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let value_p = |xv: ArrayView1<'_, f64>| {
            let r = &a.dot(&xv) - &b;
            objective.value(xv) + sigma * r.dot(&r)
        };
        let grad_p = |xv: ArrayView1<'_, f64>| {
            let r = &a.dot(&xv) - &b;
            let mut g = objective.gradient(xv);
            g.scaled_add(2.0 * sigma, &a.t().dot(&r));
            g
        };
        let outcome = minimize_bfgs(
            value_p,
            grad_p,
            x,
            config.inner_tol,
            config.max_inner_iterations,
            config.armijo_c1,
            config.backtrack_factor,
            config.max_backtracks,
        );
        x = outcome.x;
        let mut row = conditioning_at_point(objective, constraints, x.view(), &[sigma])
            .map_err(|e| SolverError::BadConfig(e.to_string()))?;
        rows.append(&mut row);
    }
    Ok(rows)
}

/// Configuration of the explicit gradient-flow baseline.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Relative local-error tolerance (`> 0`). Default `1e-6`.
    pub rtol: f64,
    /// Absolute local-error tolerance (`> 0`). Default `1e-6`.
    pub atol: f64,
    /// Stop once `‖P∇f‖∞` falls below this (`> 0`). Default `1e-6`.
    pub kkt_tol: f64,
    /// Budget of attempted steps (`≥ 1`). Default `100_000`.
    pub max_steps: usize,
    /// Cap on the initial step `h₀ = min(cap, 1/‖p_g0‖₂)` (`> 0`).
    /// Default `1e-2`.
    pub initial_step_cap: f64,
    /// Upper clamp on the step size (`≥ initial_step_cap`). Default `1e6`.
    pub max_step: f64,
    /// Error-controller safety factor (`0 < s < 1`). Default `0.9`.
    pub safety: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-6,
            kkt_tol: 1e-6,
            max_steps: 100_000,
            initial_step_cap: 1e-2,
            max_step: 1e6,
            safety: 0.9,
        }
    }
}

impl FlowConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::BadConfig(msg));
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.kkt_tol > 0.0) {
            return bad(format!(
                "rtol, atol, kkt_tol must be positive, got {}, {}, {}",
                self.rtol, self.atol, self.kkt_tol
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.initial_step_cap > 0.0 && self.initial_step_cap.is_finite()) {
            return bad(format!(
                "initial_step_cap must be positive, got {}",
                self.initial_step_cap
            ));
        }
        if self.max_step.is_nan() || self.max_step < self.initial_step_cap {
            return bad(format!(
                "max_step must be at least initial_step_cap, got {}",
                self.max_step
            ));
        }
        if !(0.0 < self.safety && self.safety < 1.0) {
            return bad(format!("safety must lie in (0, 1), got {}", self.safety));
        }
        Ok(())
    }
}

/// Integrates the projected gradient flow `dx/dt = −P∇f(x)` with an
/// embedded second/third-order Runge–Kutta pair (Bogacki–Shampine
/// coefficients) and a proportional step controller.
///
/// A step is accepted only when the scaled local-error estimate is at most
/// one *and* the objective did not increase, so accepted iterates decrease
/// `f` monotonically. Each accepted iterate is re-projected onto the
/// constraint set to eliminate integration drift (the flow field is
/// tangent, so the correction is at rounding level). The slope at the new
/// iterate is then evaluated afresh rather than reused from the embedded
/// stage, keeping the trajectory exactly on the constraint manifold.
///
/// Report conventions: `iterations` counts attempted steps, `final_dt` is
/// the last step size, and trace rows carry the step size in `dt` and the
/// scaled error estimate in `rho`.
pub fn gradient_flow_solve<O: Objective>(
    objective: &O,
    constraints: &ReducedConstraints,
    x0: Array1<f64>,
    config: &FlowConfig,
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

    let mut function_evals = 0_usize;
    let mut gradient_evals = 0_usize;
    let slope = |xv: ArrayView1<'_, f64>| -> Result<Array1<f64>, SolverError> {
        let g = objective.gradient(xv);
        Ok(constraints.apply_projector(g.view())?.mapv(|v| -v))
    };

    let mut x = constraints.project_point(x0.view())?;
    let mut f = objective.value(x.view());
    function_evals += 1;
    let mut k1 = slope(x.view())?;
    gradient_evals += 1;
    let mut pg_inf = inf_norm(k1.view());

    let finish = |status: SolveStatus,
                  x: Array1<f64>,
                  f: f64,
                  kkt: f64,
                  iterations: usize,
                  accepted: usize,
                  rejected: usize,
                  gradient_evals: usize,
                  function_evals: usize,
                  final_dt: f64,
                  trace: Vec<IterateRecord>| {
        SolveReport {
            status,
            f_star: f,
            kkt_residual: kkt,
            feasibility_residual: constraints.feasibility_residual_inf(x.view()),
            relaxation_residual: constraints.relaxation_residual(),
            close: false,
            iterations,
            accepted_steps: accepted,
            rejected_steps: rejected,
            gradient_evals,
            function_evals,
            final_dt,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            trace,
            x_star: x,
        }
    };

    if !f.is_finite() || k1.iter().any(|v| !v.is_finite()) {
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

    let mut h = initial_time_step(norm2(k1.view()), config.initial_step_cap);
    let mut trace: Vec<IterateRecord> = Vec::new();
    let mut iterations = 0_usize;
    let mut accepted_steps = 0_usize;
    let mut rejected_steps = 0_usize;

    while pg_inf > config.kkt_tol && iterations < config.max_steps {
        // Bogacki–Shampine stages for x' = φ(x).
        let mut x2 = x.clone();
        x2.scaled_add(0.5 * h, &k1);
        let k2 = slope(x2.view())?;
        let mut x3 = x.clone();
        x3.scaled_add(0.75 * h, &k2);
        let k3 = slope(x3.view())?;
        let mut x_prop = x.clone();
        x_prop.scaled_add(h * 2.0 / 9.0, &k1);
        x_prop.scaled_add(h / 3.0, &k2);
        x_prop.scaled_add(h * 4.0 / 9.0, &k3);
        let k4 = slope(x_prop.view())?;
        gradient_evals += 3;

        // Difference between the third-order solution and the embedded
        // second-order one, scaled per component.
        let mut err_sq = 0.0_f64;
        let mut stages_finite = true;
        for i in 0..n {
            let e = h * (-5.0 / 72.0 * k1[i] + k2[i] / 12.0 + k3[i] / 9.0 - k4[i] / 8.0);
            if !e.is_finite() {
                stages_finite = false;
                break;
            }
            let scale = config.atol + config.rtol * x[i].abs().max(x_prop[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = if stages_finite {
            (err_sq / n as f64).sqrt()
        } else {
            f64::INFINITY
        };

        let f_prop = objective.value(x_prop.view());
        function_evals += 1;
        let error_ok = err <= 1.0;
        let descent_ok = f_prop.is_finite() && f_prop <= f;
        let accepted = stages_finite && error_ok && descent_ok;

        trace.push(IterateRecord {
            k: iterations,
            f,
            pg_norm: norm2(k1.view()),
            dt: h,
            rho: err,
            accepted,
            predicted_reduction: 0.0,
            actual_reduction: if accepted { f - f_prop } else { 0.0 },
        });
        iterations += 1;

        if accepted {
            accepted_steps += 1;
            x = constraints.project_point(x_prop.view())?;
            f = objective.value(x.view());
            function_evals += 1;
            k1 = slope(x.view())?;
            gradient_evals += 1;
            if !f.is_finite() || k1.iter().any(|v| !v.is_finite()) {
                return Ok(finish(
                    SolveStatus::NumericalFailure,
                    x,
                    f,
                    f64::NAN,
                    iterations,
                    accepted_steps,
                    rejected_steps,
                    gradient_evals,
                    function_evals,
                    h,
                    trace,
                ));
            }
            pg_inf = inf_norm(k1.view());
            let scale = if err > 0.0 {
                (config.safety * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (h * scale).min(config.max_step);
        } else {
            rejected_steps += 1;
            let scale = if !error_ok && err.is_finite() && err > 0.0 {
                // Never grow on rejection, never collapse faster than 5x.
                (config.safety * err.powf(-1.0 / 3.0)).clamp(0.2, 1.0)
            } else {
                // Non-finite stages or an objective increase at acceptable
                // local error: back off decisively.
                0.5
            };
            h *= scale;
            if h <= 1e-15 {
                return Ok(finish(
                    SolveStatus::IterationLimit,
                    x,
                    f,
                    pg_inf,
                    iterations,
                    accepted_steps,
                    rejected_steps,
                    gradient_evals,
                    function_evals,
                    h,
                    trace,
                ));
            }
        }
    }

    let status = if pg_inf <= config.kkt_tol {
        SolveStatus::Converged
    } else {
        SolveStatus::IterationLimit
    };
    Ok(finish(
        status,
        x,
        f,
        pg_inf,
        iterations,
        accepted_steps,
        rejected_steps,
        gradient_evals,
        function_evals,
        h,
        trace,
    ))
}
