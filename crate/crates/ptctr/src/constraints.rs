//! Constraint preprocessing: reduce a possibly rank-deficient, possibly
//! inconsistent linear system `A x = b` to an orthonormal system
//! `V_rᵀ x = b_r` via the singular value decomposition.
//!
//! With the thin SVD `A = U Σ Vᵀ` and numerical rank `r`, the retained right
//! singular vectors `V_r` (the first `r` columns of `V`) span the row space
//! of `A`, and
//!
//! ```text
//! b_r[i] = (Uᵀ b)[i] / σ_i ,   i = 1..r
//! ```
//!
//! makes `V_rᵀ x = b_r` equivalent to `A x = b` whenever the original system
//! is consistent. When it is not (noisy data), the reduced system is its
//! least-squares best relaxation and the gap `‖A x_part − b‖₂` is recorded as
//! an advisory.
//!
//! The orthogonal projector onto the feasible tangent space,
//! `P = I − V_r V_rᵀ`, is never materialized: all applications go through
//! `V_r` products at `O(nr)` cost.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{JobSvd, SVDDC};
use thiserror::Error;

/// Errors from constraint validation and reduction.
#[derive(Debug, Error)]
pub enum ConstraintError {
    /// The matrix and right-hand side shapes do not agree.
    #[error("constraint matrix is {m}x{n} but right-hand side has length {b_len}")]
    ShapeMismatch { m: usize, n: usize, b_len: usize },
    /// The constraint matrix has no rows or no columns.
    #[error("constraint matrix must have at least one row and one column")]
    Empty,
    /// A matrix or vector entry is NaN or infinite.
    #[error("constraint data must be finite; found {value} at row {row}, column {col}")]
    NonFinite { value: f64, row: usize, col: usize },
    /// The matrix is identically zero, so no constraint direction exists.
    #[error("degenerate constraints: A is identically zero")]
    Degenerate,
    /// The rank threshold is outside `(0, 1)`.
    #[error("relative rank threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    /// A vector passed to a projection has the wrong length.
    #[error("vector has length {got} but the constraint system has {expected} columns")]
    VectorLength { got: usize, expected: usize },
    /// The LAPACK SVD driver reported a failure.
    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),
}

/// Raw linear equality constraints `A x = b`, possibly noisy.
#[derive(Debug, Clone)]
pub struct RawConstraints {
    a: Array2<f64>,
    b: Array1<f64>,
}

impl RawConstraints {
    /// Validates shapes and finiteness and wraps the data.
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self, ConstraintError> {
        let (m, n) = a.dim();
        if m == 0 || n == 0 {
            return Err(ConstraintError::Empty);
        }
        if b.len() != m {
            return Err(ConstraintError::ShapeMismatch {
                m,
                n,
                b_len: b.len(),
            });
        }
        for ((row, col), &value) in a.indexed_iter() {
            if !value.is_finite() {
                return Err(ConstraintError::NonFinite { value, row, col });
            }
        }
        if let Some((row, &value)) = b.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ConstraintError::NonFinite {
                value,
                row,
                col: usize::MAX,
            });
        }
        Ok(Self { a, b })
    }

    /// Number of constraint rows `m`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of variables `n`.
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// The constraint matrix `A`.
    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    /// The right-hand side `b`.
    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    /// `‖A x − b‖_∞`, the raw constraint residual at `x`.
    pub fn residual_inf(&self, x: ArrayView1<'_, f64>) -> f64 {
        let r = self.a.dot(&x) - &self.b;
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Numerical-rank policy: retain singular values `σ_i > relative_threshold · σ_1`.
///
/// The reduction assumes exact rank is meaningless for noisy data, so rank is
/// decided relative to the largest singular value. The default threshold is
/// `1e-10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPolicy {
    relative_threshold: f64,
}

impl RankPolicy {
    /// A policy with the given relative threshold, which must lie in `(0, 1)`.
    pub fn new(relative_threshold: f64) -> Result<Self, ConstraintError> {
        if !(relative_threshold > 0.0 && relative_threshold < 1.0) {
            return Err(ConstraintError::BadThreshold(relative_threshold));
        }
        Ok(Self { relative_threshold })
    }

    /// The relative threshold in effect.
    pub fn relative_threshold(&self) -> f64 {
        self.relative_threshold
    }
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self {
            relative_threshold: 1e-10,
        }
    }
}

/// Tolerance used to classify a system as consistent: the particular solution
/// must satisfy `‖A x_part − b‖_∞ ≤ 1e-8 (1 + ‖b‖_∞)`.
const CONSISTENCY_RTOL: f64 = 1e-8;

/// The SVD-reduced constraint system `V_rᵀ x = b_r` and the projector it
/// induces.
///
/// Immutable after construction; all operations are pure, so the value is
/// safely shareable across threads.
#[derive(Debug, Clone)]
pub struct ReducedConstraints {
    raw: RawConstraints,
    v_r: Array2<f64>,
    b_r: Array1<f64>,
    singular_values: Array1<f64>,
    x_particular: Array1<f64>,
    relaxation_residual: f64,
    consistent: bool,
}

/// Reduces raw constraints to the orthonormal system `V_rᵀ x = b_r`.
///
/// `V_r` holds the first `r` right singular vectors of `A` and
/// `b_r = Σ_r⁻¹ U_rᵀ b`. Inconsistent systems are silently relaxed to their
/// least-squares reduction; the relaxation gap is recorded in the result.
pub fn reduce(
    raw: RawConstraints,
    policy: RankPolicy,
) -> Result<ReducedConstraints, ConstraintError> {
    let (u, sigma, vt) = raw
        .a
        .svddc(JobSvd::Some)
        .map_err(|e| ConstraintError::SvdFailure(e.to_string()))?;
    let u = u.expect("JobSvd::Some always produces U");
    let vt = vt.expect("JobSvd::Some always produces V^T");

    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return Err(ConstraintError::Degenerate);
    }
    let cutoff = policy.relative_threshold * sigma_max;
    let rank = sigma.iter().take_while(|&&s| s > cutoff).count();
    debug_assert!(
        rank >= 1,
        "sigma_max > cutoff guarantees at least one direction"
    );

    // V_r: n x r, columns are the retained right singular vectors.
    let v_r = vt.slice(ndarray::s![..rank, ..]).t().to_owned();
    let singular_values = sigma.slice(ndarray::s![..rank]).to_owned();
    let u_r = u.slice(ndarray::s![.., ..rank]);
    let mut b_r = u_r.t().dot(&raw.b);
    b_r.iter_mut()
        .zip(singular_values.iter())
        .for_each(|(c, &s)| *c /= s);

    let x_particular = v_r.dot(&b_r);
    let gap = raw.a.dot(&x_particular) - &raw.b;
    let relaxation_residual = gap.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gap_inf = gap.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let b_inf = raw.b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let consistent = gap_inf <= CONSISTENCY_RTOL * (1.0 + b_inf);

    Ok(ReducedConstraints {
        raw,
        v_r,
        b_r,
        singular_values,
        x_particular,
        relaxation_residual,
        consistent,
    })
}

impl ReducedConstraints {
    /// An empty system over `n` variables: rank 0, projector = identity.
    ///
    /// Useful for driving the solver machinery on unconstrained problems and
    /// in tests; `reduce` itself never produces this (an all-zero `A` is an
    /// error there).
    pub fn unconstrained(n: usize) -> Self {
        Self {
            raw: RawConstraints {
                a: Array2::zeros((1, n)),
                b: Array1::zeros(1),
            },
            v_r: Array2::zeros((n, 0)),
            b_r: Array1::zeros(0),
            singular_values: Array1::zeros(0),
            x_particular: Array1::zeros(n),
            relaxation_residual: 0.0,
            consistent: true,
        }
    }

    /// The numerical rank `r` under the policy used at reduction time.
    pub fn rank(&self) -> usize {
        self.v_r.ncols()
    }

    /// Number of variables `n`.
    pub fn n(&self) -> usize {
        self.v_r.nrows()
    }

    /// The retained right singular vectors, an `n × r` matrix with
    /// orthonormal columns.
    pub fn v_r(&self) -> ArrayView2<'_, f64> {
        self.v_r.view()
    }

    /// The reduced right-hand side `b_r = Σ_r⁻¹ U_rᵀ b`.
    pub fn b_r(&self) -> ArrayView1<'_, f64> {
        self.b_r.view()
    }

    /// The retained singular values `σ_1 ≥ … ≥ σ_r > 0`.
    pub fn singular_values(&self) -> ArrayView1<'_, f64> {
        self.singular_values.view()
    }

    /// The raw constraints this reduction came from.
    pub fn raw(&self) -> &RawConstraints {
        &self.raw
    }

    /// The particular solution `x_part = V_r b_r` (minimum-norm least-squares
    /// solution of `A x = b`).
    pub fn x_particular(&self) -> ArrayView1<'_, f64> {
        self.x_particular.view()
    }

    /// Advisory: `‖A x_part − b‖₂`, the least-squares relaxation gap. Zero
    /// (to rounding) for consistent systems.
    pub fn relaxation_residual(&self) -> f64 {
        self.relaxation_residual
    }

    /// Whether the original system is consistent, i.e. the particular
    /// solution satisfies `‖A x_part − b‖_∞ ≤ 1e-8 (1 + ‖b‖_∞)`.
    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// Projects `x0` onto the constraint plane:
    /// `x0 + V_r (b_r − V_rᵀ x0)`.
    ///
    /// Among all reduced-feasible points this minimizes `‖x − x0‖₂`.
    pub fn project_point(&self, x0: ArrayView1<'_, f64>) -> Result<Array1<f64>, ConstraintError> {
        self.check_len(x0.len())?;
        let defect = &self.b_r - &self.v_r.t().dot(&x0);
        Ok(&x0 + &self.v_r.dot(&defect))
    }

    /// Applies the projector `P = I − V_r V_rᵀ` to `v` without materializing
    /// `P`.
    pub fn apply_projector(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>, ConstraintError> {
        self.check_len(v.len())?;
        Ok(&v - &self.v_r.dot(&self.v_r.t().dot(&v)))
    }

    /// `‖x − x_part‖` measured through `A`: the ∞-norm residual of the
    /// consistent relaxation, `‖A x − A x_part‖_∞`.
    ///
    /// Equals `‖A x − b‖_∞` whenever the original system is consistent; for
    /// inconsistent systems the static least-squares gap (see
    /// [`relaxation_residual`](Self::relaxation_residual)) is excluded, so
    /// this measures only what an iterate can control.
    pub fn feasibility_residual_inf(&self, x: ArrayView1<'_, f64>) -> f64 {
        let b_hat = self.raw.a.dot(&self.x_particular);
        let r = self.raw.a.dot(&x) - &b_hat;
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn check_len(&self, got: usize) -> Result<(), ConstraintError> {
        if got != self.n() {
            return Err(ConstraintError::VectorLength {
                got,
                expected: self.n(),
            });
        }
        Ok(())
    }
}
