//! Ten block-separable benchmark problems.
//!
//! Each problem couples a smooth separable objective with per-block linear
//! equality constraints, scales to any dimension `n` divisible by its block
//! size, and carries its canonical starting point. Where the per-block
//! minimization has a closed form (or a root-findable one), the generated
//! problem also carries a [`KnownOptimum`] so tests and reports can compare
//! against an independent reference value.
//!
//! The constraint matrices are built dense. They are extremely sparse in
//! structure, but the downstream SVD reduction works on dense matrices
//! anyway, and the largest generated instance (`3200 × 4800`) is well within
//! memory.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::constraints::{reduce, ConstraintError, RankPolicy, RawConstraints, ReducedConstraints};
use crate::solver::Objective;

/// Errors from problem construction.
#[derive(Debug, Error)]
pub enum ProblemError {
    /// The requested dimension is not a positive multiple of the block size.
    #[error("{id} requires n to be a positive multiple of {divisor}, got {n}")]
    BadDimension {
        id: &'static str,
        divisor: usize,
        n: usize,
    },
    /// An identifier outside `ex1..ex10` was parsed.
    #[error("unknown problem id {0:?}; expected ex1..ex10")]
    UnknownId(String),
    /// A problem selection expression could not be parsed.
    #[error("invalid problem selection {0:?}; use ids (ex3), ranges (ex2..ex5), or comma lists")]
    BadSelection(String),
}

/// Identifier of one of the ten benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
    Ex7,
    Ex8,
    Ex9,
    Ex10,
}

/// Preset dimension classes for benchmark runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionPreset {
    /// The 1000-variable class (1200 for the problems with 3-blocks).
    Medium,
    /// The 5000-variable class (4800 for the problems with 3-blocks).
    Large,
}

impl ExampleId {
    /// All ten identifiers in order.
    pub const ALL: [ExampleId; 10] = [
        ExampleId::Ex1,
        ExampleId::Ex2,
        ExampleId::Ex3,
        ExampleId::Ex4,
        ExampleId::Ex5,
        ExampleId::Ex6,
        ExampleId::Ex7,
        ExampleId::Ex8,
        ExampleId::Ex9,
        ExampleId::Ex10,
    ];

    /// The canonical lowercase name (`"ex1"` … `"ex10"`).
    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Ex1 => "ex1",
            ExampleId::Ex2 => "ex2",
            ExampleId::Ex3 => "ex3",
            ExampleId::Ex4 => "ex4",
            ExampleId::Ex5 => "ex5",
            ExampleId::Ex6 => "ex6",
            ExampleId::Ex7 => "ex7",
            ExampleId::Ex8 => "ex8",
            ExampleId::Ex9 => "ex9",
            ExampleId::Ex10 => "ex10",
        }
    }

    /// 1-based position within [`ExampleId::ALL`].
    pub fn number(self) -> usize {
        Self::ALL
            .iter()
            .position(|&id| id == self)
            .expect("id is in ALL")
            + 1
    }

    /// The block size the dimension must be divisible by.
    pub fn dimension_divisor(self) -> usize {
        match self {
            ExampleId::Ex1 | ExampleId::Ex4 | ExampleId::Ex5 | ExampleId::Ex7 | ExampleId::Ex9 => 2,
            ExampleId::Ex3 | ExampleId::Ex6 | ExampleId::Ex8 | ExampleId::Ex10 => 3,
            ExampleId::Ex2 => 6,
        }
    }

    /// The dimension used by the given preset class.
    pub fn preset_n(self, preset: DimensionPreset) -> usize {
        let pair_sized = self.dimension_divisor() == 2;
        match preset {
            DimensionPreset::Medium => {
                if pair_sized {
                    1000
                } else {
                    1200
                }
            }
            DimensionPreset::Large => {
                if pair_sized {
                    5000
                } else {
                    4800
                }
            }
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExampleId {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExampleId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| ProblemError::UnknownId(s.to_string()))
    }
}

/// Parses a problem selection: a single id (`ex3`), an inclusive range
/// (`ex2..ex5`), or a comma-separated list mixing both (`ex1,ex4..ex6`).
/// Results keep the requested order; duplicates are removed.
pub fn parse_selection(expr: &str) -> Result<Vec<ExampleId>, ProblemError> {
    let mut out: Vec<ExampleId> = Vec::new();
    let mut push = |id: ExampleId| {
        if !out.contains(&id) {
            out.push(id);
        }
    };
    for term in expr.split(',') {
        let term = term.trim();
        if term.is_empty() {
            return Err(ProblemError::BadSelection(expr.to_string()));
        }
        if let Some((lo, hi)) = term.split_once("..") {
            let lo: ExampleId = lo.trim().parse()?;
            let hi: ExampleId = hi.trim().parse()?;
            if hi < lo {
                return Err(ProblemError::BadSelection(expr.to_string()));
            }
            for id in ExampleId::ALL
                .iter()
                .copied()
                .filter(|&id| lo <= id && id <= hi)
            {
                push(id);
            }
        } else {
            push(term.parse()?);
        }
    }
    Ok(out)
}

/// How a reference optimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimumProvenance {
    /// Exact rational/analytic solution of the per-block optimality system.
    ClosedForm,
    /// Per-block optimality system reduced to a scalar root and solved to
    /// full double precision, then composed across blocks.
    NumericalBlockOracle,
    /// Value recorded from a trusted earlier run (no independent formula).
    ReferenceRun,
}

/// An independent reference optimum for a generated problem instance.
#[derive(Debug, Clone)]
pub struct KnownOptimum {
    /// The reference optimal value at the generated dimension.
    pub f_star: f64,
    /// The minimizer, when the per-block solution is known explicitly.
    pub x_star: Option<Array1<f64>>,
    /// How the reference was derived.
    pub provenance: OptimumProvenance,
}

// Frozen per-block reference constants. Each scalar below was obtained by
// solving the per-block KKT system independently of the solver (rational
// arithmetic where possible, otherwise a scalar root polished to full f64
// precision with Newton steps) and is consumed by `known_optimum`.

/// ex1 block optimum: min x² + 10y² s.t. x + y = 4 at (40/11, 4/11).
const EX1_BLOCK_F: f64 = 1760.0 / 121.0;
/// ex2: per 6-variable block (three objective pairs, two constraint rows)
/// the minimum objective contribution, before the global −5 offset.
const EX2_BLOCK_F: f64 = 6.481_007_187_306_163;
/// ex3 block optimum: min ‖x‖² over the two block rows at (16/15, 1/3, −11/15).
const EX3_BLOCK_F: f64 = 402.0 / 225.0;
/// ex4: y solves 3y⁵ + y − 1 = 0, x = 1 − y.
const EX4_Y: f64 = 0.650_519_520_968_459_2;
const EX4_BLOCK_F: f64 = 0.197_917_896_493_257_08;
/// ex5: y solves the pair system for min (x−2)⁴ + 2(y−1)⁶ s.t. x + 4y = 3.
const EX5_Y: f64 = 0.358_407_480_167_217_46;
const EX5_BLOCK_F: f64 = 0.174_860_833_452_116_64;
/// ex6: block minimum of x² + y⁴ + z⁶ over the two block rows.
const EX6_BLOCK_F: f64 = 1.286_191_046_490_560_4;
/// ex7: x solves 2x³ + 3x − 12 = 0, y = 4 − x.
const EX7_X: f64 = 1.544_370_117_023_784_5;
const EX7_BLOCK_F: f64 = 23.778_956_481_105_965;
/// ex9: x solves x³ = 15(4−x)⁵, y = 4 − x.
const EX9_X: f64 = 2.898_290_909_376_824;
const EX9_BLOCK_F: f64 = 88.442_918_566_698_2;
/// ex10 block optimum with multiplier λ = z: stationarity 8x⁷ = λ,
/// 6y⁵ = 2λ, 2z = 2λ on x + 2y + 2z = 1.
const EX10_BLOCK_X: [f64; 3] = [
    0.372_754_859_932_231,
    0.305_623_247_866_294,
    0.007_999_322_167_591,
];
const EX10_BLOCK_F: f64 = 0.001_251_638_705_770_178_9;

/// A generated benchmark instance: objective, constraints, starting point,
/// and optional reference optimum.
#[derive(Debug, Clone)]
pub struct ObjectiveProblem {
    id: ExampleId,
    n: usize,
    constraints: RawConstraints,
    x0: Array1<f64>,
    known: Option<KnownOptimum>,
}

/// Builds the benchmark problem `id` at dimension `n`.
///
/// `n` must be a positive multiple of [`ExampleId::dimension_divisor`].
pub fn make_example(id: ExampleId, n: usize) -> Result<ObjectiveProblem, ProblemError> {
    let divisor = id.dimension_divisor();
    if n == 0 || n % divisor != 0 {
        return Err(ProblemError::BadDimension {
            id: id.name(),
            divisor,
            n,
        });
    }
    let constraints = build_constraints(id, n);
    let x0 = build_x0(id, n);
    let known = known_optimum(id, n);
    Ok(ObjectiveProblem {
        id,
        n,
        constraints,
        x0,
        known,
    })
}

impl ObjectiveProblem {
    /// The identifier this instance was generated from.
    pub fn id(&self) -> ExampleId {
        self.id
    }

    /// The canonical problem name.
    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraint rows.
    pub fn m(&self) -> usize {
        self.constraints.rows()
    }

    /// The raw constraint system.
    pub fn constraints(&self) -> &RawConstraints {
        &self.constraints
    }

    /// The canonical starting point (owned copy).
    pub fn x0(&self) -> Array1<f64> {
        self.x0.clone()
    }

    /// The reference optimum, when one is known.
    pub fn known_optimum(&self) -> Option<&KnownOptimum> {
        self.known.as_ref()
    }

    /// Reduces the constraints with the default rank policy.
    pub fn reduce(&self) -> Result<ReducedConstraints, ConstraintError> {
        self.reduce_with(RankPolicy::default())
    }

    /// Reduces the constraints with an explicit rank policy.
    pub fn reduce_with(&self, policy: RankPolicy) -> Result<ReducedConstraints, ConstraintError> {
        reduce(self.constraints.clone(), policy)
    }
}

impl Objective for ObjectiveProblem {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        match self.id {
            ExampleId::Ex1 => pair_sum(x, |a, b| a * a + 10.0 * b * b),
            ExampleId::Ex2 => pair_sum(x, |a, b| (a - 2.0).powi(2) + 2.0 * (b - 1.0).powi(4)) - 5.0,
            ExampleId::Ex3 => compensated_sum(x.iter().map(|v| v * v)),
            ExampleId::Ex4 => pair_sum(x, |a, b| a * a + b.powi(6)) - 1.0,
            ExampleId::Ex5 => pair_sum(x, |a, b| (a - 2.0).powi(4) + 2.0 * (b - 1.0).powi(6)) - 5.0,
            ExampleId::Ex6 => triple_sum(x, |a, b, c| a * a + b.powi(4) + c.powi(6)),
            ExampleId::Ex7 => pair_sum(x, |a, b| a.powi(4) + 3.0 * b * b),
            ExampleId::Ex8 => triple_sum(x, |a, b, c| {
                a * a + a * a * c * c + 2.0 * a * b + b.powi(4) + 8.0 * b
            }),
            ExampleId::Ex9 => pair_sum(x, |a, b| a.powi(4) + 10.0 * b.powi(6)),
            ExampleId::Ex10 => triple_sum(x, |a, b, c| a.powi(8) + b.powi(6) + c * c),
        }
    }

    fn gradient_into(&self, x: ArrayView1<'_, f64>, grad: &mut Array1<f64>) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(grad.len(), self.n);
        match self.id {
            ExampleId::Ex1 => pair_grad(x, grad, |a, b| (2.0 * a, 20.0 * b)),
            ExampleId::Ex2 => pair_grad(x, grad, |a, b| (2.0 * (a - 2.0), 8.0 * (b - 1.0).powi(3))),
            ExampleId::Ex3 => {
                for (g, v) in grad.iter_mut().zip(x.iter()) {
                    *g = 2.0 * v;
                }
            }
            ExampleId::Ex4 => pair_grad(x, grad, |a, b| (2.0 * a, 6.0 * b.powi(5))),
            ExampleId::Ex5 => pair_grad(x, grad, |a, b| {
                (4.0 * (a - 2.0).powi(3), 12.0 * (b - 1.0).powi(5))
            }),
            ExampleId::Ex6 => triple_grad(x, grad, |a, b, c| {
                (2.0 * a, 4.0 * b.powi(3), 6.0 * c.powi(5))
            }),
            ExampleId::Ex7 => pair_grad(x, grad, |a, b| (4.0 * a.powi(3), 6.0 * b)),
            ExampleId::Ex8 => triple_grad(x, grad, |a, b, c| {
                (
                    2.0 * a + 2.0 * a * c * c + 2.0 * b,
                    2.0 * a + 4.0 * b.powi(3) + 8.0,
                    2.0 * a * a * c,
                )
            }),
            ExampleId::Ex9 => pair_grad(x, grad, |a, b| (4.0 * a.powi(3), 60.0 * b.powi(5))),
            ExampleId::Ex10 => triple_grad(x, grad, |a, b, c| {
                (8.0 * a.powi(7), 6.0 * b.powi(5), 2.0 * c)
            }),
        }
    }
}

/// Compensated (Neumaier) summation over the block terms.
///
/// The example objectives aggregate hundreds of near-identical terms; a
/// naive left fold carries an error of roughly `n·eps·Σ`, which near an
/// optimum is orders of magnitude larger than the per-step reductions the
/// trust ratio has to resolve, and rejection cascades follow. Compensation
/// keeps the value accurate to about one rounding of the exact sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    for term in terms {
        let next = sum + term;
        compensation += if sum.abs() >= term.abs() {
            (sum - next) + term
        } else {
            (term - next) + sum
        };
        sum = next;
    }
    sum + compensation
}

fn pair_sum(x: ArrayView1<'_, f64>, f: impl Fn(f64, f64) -> f64) -> f64 {
    compensated_sum((0..x.len() / 2).map(|i| f(x[2 * i], x[2 * i + 1])))
}

fn triple_sum(x: ArrayView1<'_, f64>, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    compensated_sum((0..x.len() / 3).map(|i| f(x[3 * i], x[3 * i + 1], x[3 * i + 2])))
}

fn pair_grad(x: ArrayView1<'_, f64>, grad: &mut Array1<f64>, f: impl Fn(f64, f64) -> (f64, f64)) {
    for i in 0..x.len() / 2 {
        let (ga, gb) = f(x[2 * i], x[2 * i + 1]);
        grad[2 * i] = ga;
        grad[2 * i + 1] = gb;
    }
}

fn triple_grad(
    x: ArrayView1<'_, f64>,
    grad: &mut Array1<f64>,
    f: impl Fn(f64, f64, f64) -> (f64, f64, f64),
) {
    for i in 0..x.len() / 3 {
        let (ga, gb, gc) = f(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        grad[3 * i] = ga;
        grad[3 * i + 1] = gb;
        grad[3 * i + 2] = gc;
    }
}

/// One constraint row per pair: `c₁·x_{2i−1} + c₂·x_{2i} = rhs`.
fn pair_constraints(n: usize, c1: f64, c2: f64, rhs: f64) -> RawConstraints {
    let m = n / 2;
    let mut a = Array2::zeros((m, n));
    for i in 0..m {
        a[[i, 2 * i]] = c1;
        a[[i, 2 * i + 1]] = c2;
    }
    RawConstraints::new(a, Array1::from_elem(m, rhs)).expect("generated system is well-formed")
}

/// One constraint row per triple: `c₁·x_{3i−2} + c₂·x_{3i−1} + c₃·x_{3i} = rhs`.
fn triple_constraints(n: usize, c: [f64; 3], rhs: f64) -> RawConstraints {
    let m = n / 3;
    let mut a = Array2::zeros((m, n));
    for i in 0..m {
        a[[i, 3 * i]] = c[0];
        a[[i, 3 * i + 1]] = c[1];
        a[[i, 3 * i + 2]] = c[2];
    }
    RawConstraints::new(a, Array1::from_elem(m, rhs)).expect("generated system is well-formed")
}

/// Two constraint rows per triple:
/// `x₁ + 2x₂ + x₃ = 1` and `2x₁ − x₂ − 3x₃ = 4` (block-local indices).
fn double_triple_constraints(n: usize) -> RawConstraints {
    let m = 2 * n / 3;
    let mut a = Array2::zeros((m, n));
    let mut b = Array1::zeros(m);
    for i in 0..n / 3 {
        let (r1, r2) = (2 * i, 2 * i + 1);
        a[[r1, 3 * i]] = 1.0;
        a[[r1, 3 * i + 1]] = 2.0;
        a[[r1, 3 * i + 2]] = 1.0;
        b[r1] = 1.0;
        a[[r2, 3 * i]] = 2.0;
        a[[r2, 3 * i + 1]] = -1.0;
        a[[r2, 3 * i + 2]] = -3.0;
        b[r2] = 4.0;
    }
    RawConstraints::new(a, b).expect("generated system is well-formed")
}

fn build_constraints(id: ExampleId, n: usize) -> RawConstraints {
    match id {
        ExampleId::Ex1 => pair_constraints(n, 1.0, 1.0, 4.0),
        ExampleId::Ex2 => triple_constraints(n, [1.0, 4.0, 2.0], 3.0),
        ExampleId::Ex3 | ExampleId::Ex6 => double_triple_constraints(n),
        ExampleId::Ex4 => pair_constraints(n, 1.0, 1.0, 1.0),
        ExampleId::Ex5 => pair_constraints(n, 1.0, 4.0, 3.0),
        ExampleId::Ex7 => pair_constraints(n, 1.0, 1.0, 4.0),
        ExampleId::Ex8 => triple_constraints(n, [2.0, 5.0, 1.0], 3.0),
        ExampleId::Ex9 => pair_constraints(n, 1.0, 1.0, 4.0),
        ExampleId::Ex10 => triple_constraints(n, [1.0, 2.0, 2.0], 1.0),
    }
}

fn build_x0(id: ExampleId, n: usize) -> Array1<f64> {
    match id {
        ExampleId::Ex1 | ExampleId::Ex9 => Array1::from_elem(n, 2.0),
        ExampleId::Ex2 => {
            let mut x0 = Array1::zeros(n);
            x0[0] = -0.5;
            x0[1] = 1.5;
            x0[2] = 1.0;
            x0
        }
        ExampleId::Ex3 => Array1::from_shape_fn(n, |i| [1.0, 0.5, -1.0][i % 3]),
        ExampleId::Ex4 => Array1::from_elem(n, 1.0),
        ExampleId::Ex5 => Array1::from_shape_fn(n, |i| [-1.0, 1.0][i % 2]),
        ExampleId::Ex6 => {
            let mut x0 = Array1::zeros(n);
            x0[0] = 2.0;
            x0
        }
        ExampleId::Ex7 => {
            let mut x0 = Array1::zeros(n);
            x0[0] = 2.0;
            x0[1] = 2.0;
            x0
        }
        ExampleId::Ex8 => {
            let mut x0 = Array1::zeros(n);
            x0[0] = 1.5;
            x0
        }
        ExampleId::Ex10 => Array1::from_shape_fn(n, |i| [1.0, 0.0, 0.0][i % 3]),
    }
}

/// Tiles a per-block minimizer across the whole vector.
fn tile(block: &[f64], n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| block[i % block.len()])
}

fn known_optimum(id: ExampleId, n: usize) -> Option<KnownOptimum> {
    let pairs = (n / 2) as f64;
    let triples = (n / 3) as f64;
    match id {
        ExampleId::Ex1 => Some(KnownOptimum {
            f_star: pairs * EX1_BLOCK_F,
            x_star: Some(tile(&[40.0 / 11.0, 4.0 / 11.0], n)),
            provenance: OptimumProvenance::ClosedForm,
        }),
        ExampleId::Ex2 => Some(KnownOptimum {
            f_star: (n / 6) as f64 * EX2_BLOCK_F - 5.0,
            x_star: None,
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        ExampleId::Ex3 => Some(KnownOptimum {
            f_star: triples * EX3_BLOCK_F,
            x_star: Some(tile(&[16.0 / 15.0, 1.0 / 3.0, -11.0 / 15.0], n)),
            provenance: OptimumProvenance::ClosedForm,
        }),
        ExampleId::Ex4 => Some(KnownOptimum {
            f_star: pairs * EX4_BLOCK_F - 1.0,
            x_star: Some(tile(&[1.0 - EX4_Y, EX4_Y], n)),
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        ExampleId::Ex5 => Some(KnownOptimum {
            f_star: pairs * EX5_BLOCK_F - 5.0,
            x_star: Some(tile(&[3.0 - 4.0 * EX5_Y, EX5_Y], n)),
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        ExampleId::Ex6 => Some(KnownOptimum {
            f_star: triples * EX6_BLOCK_F,
            x_star: None,
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        ExampleId::Ex7 => Some(KnownOptimum {
            f_star: pairs * EX7_BLOCK_F,
            x_star: Some(tile(&[EX7_X, 4.0 - EX7_X], n)),
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        // The ex8 block objective is bimodal, so the reachable value depends
        // on the full optimization trajectory; no single reference is honest.
        ExampleId::Ex8 => None,
        ExampleId::Ex9 => Some(KnownOptimum {
            f_star: pairs * EX9_BLOCK_F,
            x_star: Some(tile(&[EX9_X, 4.0 - EX9_X], n)),
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
        ExampleId::Ex10 => Some(KnownOptimum {
            f_star: triples * EX10_BLOCK_F,
            x_star: Some(tile(&EX10_BLOCK_X, n)),
            provenance: OptimumProvenance::NumericalBlockOracle,
        }),
    }
}
