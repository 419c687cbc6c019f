//! Python bindings for the continuation solver.
//!
//! The module mirrors the library's main surface: constraint reduction
//! ([`reduce`]), the benchmark problem registry ([`make_example`]), the
//! continuation solver and the two baselines ([`solve`], [`penalty_solve`],
//! [`gradient_flow_solve`]), the penalty conditioning sweep
//! ([`penalty_conditioning`]), and the localization simulation
//! ([`vin_simulate`]). Vectors and matrices cross the boundary as plain
//! Python lists so the module has no Python-side dependencies.

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ptctr::problems::ObjectiveProblem;
use ptctr::solver::Objective as _;
use ptctr::vin::{self, NoiseModel, SolverKind, TrajectoryId, VinParams};
use ptctr::{
    ExampleId, FlowConfig, PenaltyConfig, RankPolicy, RawConstraints, ReducedConstraints,
    SolveReport, SolverConfig,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_array1(v: Vec<f64>) -> Array1<f64> {
    Array1::from_vec(v)
}

fn to_array2(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err(
            "matrix rows must all have the same length",
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((m, n), flat).map_err(value_error)
}

/// A generated benchmark problem instance.
#[pyclass(name = "Problem", module = "ptctr_py", frozen)]
struct PyProblem {
    inner: ObjectiveProblem,
}

#[pymethods]
impl PyProblem {
    /// Problem id, `"ex1"`..`"ex10"`.
    #[getter]
    fn name(&self) -> String {
        self.inner.id().to_string()
    }

    /// Number of variables.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Number of constraint rows.
    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Reference optimal value, when one is known.
    #[getter]
    fn f_star(&self) -> Option<f64> {
        self.inner.known_optimum().map(|opt| opt.f_star)
    }

    /// The standard starting point.
    fn x0(&self) -> Vec<f64> {
        self.inner.x0().to_vec()
    }

    /// Objective value at `x`.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(x.len())?;
        Ok(self.inner.value(to_array1(x).view()))
    }

    /// Objective gradient at `x`.
    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self.inner.gradient(to_array1(x).view()).to_vec())
    }

    /// Runs constraint preprocessing and returns the reduced system.
    fn reduce(&self) -> PyResult<PyReduced> {
        Ok(PyReduced {
            inner: self.inner.reduce().map_err(value_error)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(name='{}', n={}, m={})",
            self.inner.id(),
            self.inner.n(),
            self.inner.m()
        )
    }
}

impl PyProblem {
    fn check_dim(&self, got: usize) -> PyResult<()> {
        if got != self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "expected a vector of length {}, got {got}",
                self.inner.n()
            )));
        }
        Ok(())
    }
}

/// An orthonormalized constraint system produced by [`reduce`].
#[pyclass(name = "ReducedConstraints", module = "ptctr_py", frozen)]
struct PyReduced {
    inner: ReducedConstraints,
}

#[pymethods]
impl PyReduced {
    /// Numerical rank recovered from the singular values.
    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    /// Number of variables.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Whether the raw right-hand side was consistent with the row space.
    #[getter]
    fn is_consistent(&self) -> bool {
        self.inner.is_consistent()
    }

    /// Distance from the raw right-hand side to the consistent relaxation.
    #[getter]
    fn relaxation_residual(&self) -> f64 {
        self.inner.relaxation_residual()
    }

    /// Singular values of the raw matrix, descending.
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values().to_vec()
    }

    /// The orthonormal reduced rows, as `rank` lists of length `n`.
    fn v_r(&self) -> Vec<Vec<f64>> {
        self.inner
            .v_r()
            .columns()
            .into_iter()
            .map(|col| col.to_vec())
            .collect()
    }

    /// The reduced right-hand side.
    fn b_r(&self) -> Vec<f64> {
        self.inner.b_r().to_vec()
    }

    /// Projects a point onto the solution set of the (relaxed) system.
    fn project_point(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self
            .inner
            .project_point(to_array1(x).view())
            .map_err(value_error)?
            .to_vec())
    }

    /// Applies the null-space projector `P = I − V_r V_rᵀ` to a direction.
    fn apply_projector(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self
            .inner
            .apply_projector(to_array1(v).view())
            .map_err(value_error)?
            .to_vec())
    }

    /// `‖A x − b̂‖∞` against the consistent relaxation `b̂`.
    fn feasibility_residual(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(x.len())?;
        Ok(self.inner.feasibility_residual_inf(to_array1(x).view()))
    }

    fn __repr__(&self) -> String {
        format!(
            "ReducedConstraints(n={}, rank={}, is_consistent={})",
            self.inner.n(),
            self.inner.rank(),
            if self.inner.is_consistent() {
                "True"
            } else {
                "False"
            }
        )
    }
}

impl PyReduced {
    fn check_dim(&self, got: usize) -> PyResult<()> {
        if got != self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "expected a vector of length {}, got {got}",
                self.inner.n()
            )));
        }
        Ok(())
    }
}

/// Result of a solve.
#[pyclass(name = "SolveReport", module = "ptctr_py", frozen)]
struct PySolveReport {
    inner: SolveReport,
}

#[pymethods]
impl PySolveReport {
    /// `"Converged"`, `"IterationLimit"`, or `"NumericalFailure"`.
    #[getter]
    fn status(&self) -> String {
        self.inner.status.to_string()
    }

    /// Whether the run converged.
    #[getter]
    fn converged(&self) -> bool {
        self.inner.status.is_converged()
    }

    /// Whether a non-converged run still reached the near-optimal band.
    #[getter]
    fn close(&self) -> bool {
        self.inner.close
    }

    /// Final objective value.
    #[getter]
    fn f_star(&self) -> f64 {
        self.inner.f_star
    }

    /// Final optimality residual.
    #[getter]
    fn kkt_residual(&self) -> f64 {
        self.inner.kkt_residual
    }

    /// Final feasibility residual.
    #[getter]
    fn feasibility_residual(&self) -> f64 {
        self.inner.feasibility_residual
    }

    /// Total iterations.
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    /// Accepted steps.
    #[getter]
    fn accepted_steps(&self) -> usize {
        self.inner.accepted_steps
    }

    /// Rejected steps.
    #[getter]
    fn rejected_steps(&self) -> usize {
        self.inner.rejected_steps
    }

    /// Wall-clock seconds of the solve.
    #[getter]
    fn elapsed_seconds(&self) -> f64 {
        self.inner.elapsed_seconds
    }

    /// The final iterate.
    fn x(&self) -> Vec<f64> {
        self.inner.x_star.to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(status='{}', f_star={:.12e}, iterations={})",
            self.inner.status, self.inner.f_star, self.inner.iterations
        )
    }
}

/// Builds one of the ten benchmark problems at dimension `n`.
#[pyfunction]
fn make_example(id: &str, n: usize) -> PyResult<PyProblem> {
    let id: ExampleId = id.parse().map_err(value_error)?;
    Ok(PyProblem {
        inner: ptctr::make_example(id, n).map_err(value_error)?,
    })
}

/// Reduces a raw system `A x = b` (given as a list of rows and a list) to an
/// orthonormal consistent system, recovering the numerical rank.
#[pyfunction]
#[pyo3(signature = (a, b, rank_tol=None))]
fn reduce(a: Vec<Vec<f64>>, b: Vec<f64>, rank_tol: Option<f64>) -> PyResult<PyReduced> {
    let raw = RawConstraints::new(to_array2(a)?, to_array1(b)).map_err(value_error)?;
    let policy = match rank_tol {
        Some(tol) => RankPolicy::new(tol).map_err(value_error)?,
        None => RankPolicy::default(),
    };
    let inner = ptctr::constraints::reduce(raw, policy).map_err(value_error)?;
    Ok(PyReduced { inner })
}

fn solver_config(epsilon: Option<f64>, max_iterations: Option<usize>) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(eps) = epsilon {
        config.epsilon = eps;
    }
    if let Some(k) = max_iterations {
        config.max_iterations = k;
    }
    config
}

/// Runs the continuation solver on a generated problem.
#[pyfunction]
#[pyo3(signature = (problem, epsilon=None, max_iterations=None))]
fn solve(
    problem: &PyProblem,
    epsilon: Option<f64>,
    max_iterations: Option<usize>,
) -> PyResult<PySolveReport> {
    let reduced = problem.inner.reduce().map_err(runtime_error)?;
    let config = solver_config(epsilon, max_iterations);
    let report = ptctr::solve(&problem.inner, &reduced, problem.inner.x0(), &config)
        .map_err(runtime_error)?;
    Ok(PySolveReport { inner: report })
}

/// Runs the quadratic-penalty baseline on a generated problem.
#[pyfunction]
fn penalty_solve(problem: &PyProblem) -> PyResult<PySolveReport> {
    let reduced = problem.inner.reduce().map_err(runtime_error)?;
    let report = ptctr::penalty_solve(
        &problem.inner,
        &reduced,
        problem.inner.x0(),
        &PenaltyConfig::default(),
    )
    .map_err(runtime_error)?;
    Ok(PySolveReport { inner: report })
}

/// Runs the explicit gradient-flow baseline on a generated problem.
#[pyfunction]
fn gradient_flow_solve(problem: &PyProblem) -> PyResult<PySolveReport> {
    let reduced = problem.inner.reduce().map_err(runtime_error)?;
    let report = ptctr::gradient_flow_solve(
        &problem.inner,
        &reduced,
        problem.inner.x0(),
        &FlowConfig::default(),
    )
    .map_err(runtime_error)?;
    Ok(PySolveReport { inner: report })
}

/// Sweeps the penalty weight and reports `(sigma, kappa)` pairs, where
/// `kappa` is the condition number of the penalty Hessian at the stage
/// minimizer.
#[pyfunction]
fn penalty_conditioning(id: &str, n: usize, sigmas: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let id: ExampleId = id.parse().map_err(value_error)?;
    let problem = ptctr::make_example(id, n).map_err(value_error)?;
    let reduced = problem.reduce().map_err(runtime_error)?;
    let rows = ptctr::penalty_conditioning(
        &problem,
        &reduced,
        problem.x0(),
        &sigmas,
        &PenaltyConfig::default(),
    )
    .map_err(value_error)?;
    Ok(rows.into_iter().map(|row| (row.sigma, row.kappa)).collect())
}

/// Runs the localization simulation and returns a summary dict with a
/// per-frame `estimates` list.
#[pyfunction]
#[pyo3(signature = (trajectory, frames=7200, seed=None, solver="ptctr"))]
fn vin_simulate<'py>(
    py: Python<'py>,
    trajectory: u8,
    frames: usize,
    seed: Option<u64>,
    solver: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let trajectory = TrajectoryId::try_from(trajectory).map_err(value_error)?;
    let solver: SolverKind = solver.parse().map_err(value_error)?;
    let params = VinParams {
        frames,
        ..VinParams::default()
    };
    let noise = seed.map(NoiseModel::new);
    let summary = vin::simulate(trajectory, &params, noise, solver).map_err(value_error)?;

    let out = PyDict::new(py);
    out.set_item("trajectory", summary.trajectory.to_string())?;
    out.set_item("solver", summary.solver.to_string())?;
    out.set_item("frames", summary.frames)?;
    out.set_item("noisy", summary.noisy)?;
    out.set_item("seed", summary.seed)?;
    out.set_item("max_err_xy", summary.max_err_xy)?;
    out.set_item("mean_err_xy", summary.mean_err_xy)?;
    out.set_item("total_iterations", summary.total_iterations)?;
    out.set_item("failures", summary.failures)?;
    out.set_item("elapsed_seconds", summary.elapsed_seconds)?;
    let estimates = PyList::empty(py);
    for est in &summary.estimates {
        let row = PyDict::new(py);
        row.set_item("frame", est.frame)?;
        row.set_item("true_position", est.true_position)?;
        row.set_item("estimate", est.estimate)?;
        row.set_item("err_xy", est.err_xy)?;
        row.set_item("rank", est.rank)?;
        row.set_item("iterations", est.iterations)?;
        row.set_item("status", est.status.to_string())?;
        estimates.append(row)?;
    }
    out.set_item("estimates", estimates)?;
    Ok(out)
}

/// Python bindings for the continuation solver.
#[pymodule]
fn ptctr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyReduced>()?;
    m.add_class::<PySolveReport>()?;
    m.add_function(wrap_pyfunction!(make_example, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_solve, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_flow_solve, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_conditioning, m)?)?;
    m.add_function(wrap_pyfunction!(vin_simulate, m)?)?;
    m.add("EXAMPLES", ExampleId::ALL.map(|id| id.to_string()))?;
    Ok(())
}
