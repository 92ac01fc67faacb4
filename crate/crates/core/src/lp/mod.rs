//! Linear programs of the form `min c.v  s.t.  A v >= b,  v >= 0`.
//!
//! The solver works on the dual `max b.y  s.t.  A^T y <= c,  y >= 0`. Columns
//! of `A` with a single positive entry and a non-negative cost (slack-like
//! variables) become simple upper bounds `y_t <= c_j / a_tj` instead of dual
//! rows, so a problem with `d` dense columns and many such columns is solved
//! on a `d`-row tableau. Primal values are read from the dual row prices.

mod simplex;

use std::fmt::Write as _;
use std::io;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use simplex::{BoundedSimplex, Outcome, Tolerances};

pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_FEASIBILITY_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_OPTIMALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("an LP needs at least one variable")]
    NoVariables,
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

/// `min c.v` subject to `A v >= b` and `v >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    cost: Vec<f64>,
    matrix: Array2<f64>,
    rhs: Vec<f64>,
}

impl LpProblem {
    pub fn new(cost: Vec<f64>, matrix: Array2<f64>, rhs: Vec<f64>) -> Result<Self, LpError> {
        if cost.is_empty() {
            return Err(LpError::NoVariables);
        }
        if matrix.ncols() != cost.len() {
            return Err(LpError::DimensionMismatch {
                what: "constraint matrix columns",
                expected: cost.len(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() != rhs.len() {
            return Err(LpError::DimensionMismatch {
                what: "right-hand side",
                expected: matrix.nrows(),
                found: rhs.len(),
            });
        }
        if cost.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("cost"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("constraint matrix"));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("right-hand side"));
        }
        Ok(Self { cost, matrix, rhs })
    }

    /// Builds a problem from row slices; handy for small hand-written LPs.
    pub fn from_rows(cost: Vec<f64>, rows: &[Vec<f64>], rhs: Vec<f64>) -> Result<Self, LpError> {
        let v = cost.len();
        let mut matrix = Array2::zeros((rows.len(), v));
        for (r, row) in rows.iter().enumerate() {
            if row.len() != v {
                return Err(LpError::DimensionMismatch {
                    what: "constraint row length",
                    expected: v,
                    found: row.len(),
                });
            }
            for (j, &a) in row.iter().enumerate() {
                matrix[[r, j]] = a;
            }
        }
        Self::new(cost, matrix, rhs)
    }

    pub fn n_variables(&self) -> usize {
        self.cost.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn objective(&self, values: &[f64]) -> f64 {
        self.cost.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    /// `A v`, skipping zero coefficients.
    pub fn activity(&self, values: &[f64]) -> Vec<f64> {
        self.matrix
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(values)
                    .filter(|(a, _)| **a != 0.0)
                    .map(|(a, v)| a * v)
                    .sum()
            })
            .collect()
    }

    /// Plain-text listing, one constraint per line, for cross-checking with
    /// external solvers.
    pub fn to_standard_form(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# minimize c.v subject to A v >= b, v >= 0");
        let _ = writeln!(out, "variables {}", self.n_variables());
        let _ = writeln!(out, "constraints {}", self.n_constraints());
        let _ = writeln!(out, "minimize {}", join(&self.cost));
        for (row, b) in self.matrix.rows().into_iter().zip(&self.rhs) {
            let _ = writeln!(out, "{} >= {b:?}", join(&row.to_vec()));
        }
        out
    }

    pub fn write_standard_form<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_standard_form().as_bytes())
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
    IterationLimit,
}

/// Evidence for a non-optimal status.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `r >= 0`, `A r >= 0`, `c.r < 0`: the objective falls forever along `r`.
    Ray(Vec<f64>),
    /// `y >= 0`, `A^T y <= 0`, `b.y > 0`: no `v >= 0` satisfies `A v >= b`.
    Farkas(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    /// Constraint multipliers `y`, one per row.
    pub duals: Vec<f64>,
    pub certificate: Option<Certificate>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// `None` means `50 * (V + M)`.
    pub max_iters: Option<usize>,
    pub pivot_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub optimality_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: None,
            pivot_tolerance: DEFAULT_PIVOT_TOLERANCE,
            feasibility_tolerance: DEFAULT_FEASIBILITY_TOLERANCE,
            optimality_tolerance: DEFAULT_OPTIMALITY_TOLERANCE,
        }
    }
}

impl SolverOptions {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            pivot: self.pivot_tolerance,
            feasibility: self.feasibility_tolerance,
            optimality: self.optimality_tolerance,
        }
    }
}

/// Solves with an iteration cap and optimality tolerance; other tolerances
/// keep their defaults.
pub fn solve(problem: &LpProblem, max_iters: usize, tol: f64) -> LpSolution {
    solve_with(
        problem,
        &SolverOptions {
            max_iters: Some(max_iters),
            optimality_tolerance: tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_with(problem: &LpProblem, opts: &SolverOptions) -> LpSolution {
    let max_iters = opts
        .max_iters
        .unwrap_or(50 * (problem.n_variables() + problem.n_constraints()));
    match solve_dual(problem, opts, max_iters) {
        DualResult::Solved(sol) => sol,
        DualResult::DualInfeasible { iterations } => diagnose(problem, opts, max_iters, iterations),
    }
}

enum DualResult {
    Solved(LpSolution),
    DualInfeasible { iterations: usize },
}

/// Column `j` acts as a bound on `y_row` when it has exactly one non-zero,
/// positive entry and a non-negative cost.
fn bound_column(problem: &LpProblem, j: usize) -> Option<(usize, f64)> {
    if problem.cost[j] < 0.0 {
        return None;
    }
    let col = problem.matrix.column(j);
    let mut found = None;
    for (t, &a) in col.iter().enumerate() {
        if a != 0.0 {
            if found.is_some() || a < 0.0 {
                return None;
            }
            found = Some((t, a));
        }
    }
    found
}

fn solve_dual(problem: &LpProblem, opts: &SolverOptions, max_iters: usize) -> DualResult {
    let m = problem.n_constraints();
    let v = problem.n_variables();

    let mut upper = vec![f64::INFINITY; m];
    // Cheapest bound column per row: (column, coefficient).
    let mut best: Vec<Option<(usize, f64)>> = vec![None; m];
    let mut general = Vec::new();
    for j in 0..v {
        match bound_column(problem, j) {
            Some((t, a)) => {
                let u = problem.cost[j] / a;
                if u < upper[t] {
                    upper[t] = u;
                    best[t] = Some((j, a));
                }
            }
            None => general.push(j),
        }
    }

    // Dual rows: A_g^T y <= c_g, minimize -b.y.
    let rows = general.len();
    let mut g = vec![0.0; rows * m];
    for (r, &j) in general.iter().enumerate() {
        for t in 0..m {
            g[r * m + t] = problem.matrix[[t, j]];
        }
    }
    let h: Vec<f64> = general.iter().map(|&j| problem.cost[j]).collect();
    let f: Vec<f64> = problem.rhs.iter().map(|b| -b).collect();
    let bland_after = 10 * (v + m);
    let lp = BoundedSimplex::new(&g, &h, &f, &upper, opts.tolerances(), bland_after);
    let (outcome, iterations) = lp.solve(max_iters);

    let primal = |prices: &[f64]| -> Vec<f64> {
        let mut values = vec![0.0; v];
        for (r, &j) in general.iter().enumerate() {
            values[j] = prices[r].max(0.0);
        }
        let activity = problem.activity(&values);
        for t in 0..m {
            if let Some((j, a)) = best[t] {
                let residual = problem.rhs[t] - activity[t];
                values[j] = residual.max(0.0) / a;
            }
        }
        values
    };

    match outcome {
        Outcome::Optimal { x, row_price } => {
            let values = primal(&row_price);
            DualResult::Solved(LpSolution {
                objective: problem.objective(&values),
                values,
                status: LpStatus::Optimal,
                duals: x,
                certificate: None,
                iterations,
            })
        }
        Outcome::Unbounded { ray } => DualResult::Solved(LpSolution {
            values: vec![0.0; v],
            objective: f64::NAN,
            status: LpStatus::Infeasible,
            duals: vec![0.0; m],
            certificate: Some(Certificate::Farkas(ray)),
            iterations,
        }),
        Outcome::Infeasible => DualResult::DualInfeasible { iterations },
        Outcome::IterationLimit { x, row_price } => {
            let values = primal(&row_price);
            DualResult::Solved(LpSolution {
                objective: problem.objective(&values),
                values,
                status: LpStatus::IterationLimit,
                duals: x,
                certificate: None,
                iterations,
            })
        }
    }
}

/// The dual is infeasible, so the primal is either unbounded or infeasible.
/// Both follow-up problems have zero cost, so their duals start feasible.
fn diagnose(
    problem: &LpProblem,
    opts: &SolverOptions,
    max_iters: usize,
    iterations: usize,
) -> LpSolution {
    let v = problem.n_variables();
    let m = problem.n_constraints();
    let feasibility = LpProblem {
        cost: vec![0.0; v],
        matrix: problem.matrix.clone(),
        rhs: problem.rhs.clone(),
    };
    let feasible = match solve_dual(&feasibility, opts, max_iters) {
        DualResult::Solved(sol) => sol,
        DualResult::DualInfeasible { .. } => unreachable!("zero cost keeps the dual feasible"),
    };
    if feasible.status != LpStatus::Optimal {
        return LpSolution {
            iterations,
            ..feasible
        };
    }

    // Recession direction: A r >= 0, -c.r >= 1, r >= 0.
    let mut matrix = Array2::zeros((m + 1, v));
    matrix
        .slice_mut(ndarray::s![..m, ..])
        .assign(&problem.matrix);
    for j in 0..v {
        matrix[[m, j]] = -problem.cost[j];
    }
    let mut rhs = vec![0.0; m];
    rhs.push(1.0);
    let ray_problem = LpProblem {
        cost: vec![0.0; v],
        matrix,
        rhs,
    };
    let certificate = match solve_dual(&ray_problem, opts, max_iters) {
        DualResult::Solved(sol) if sol.status == LpStatus::Optimal => {
            Some(Certificate::Ray(sol.values))
        }
        _ => None,
    };
    LpSolution {
        objective: f64::NEG_INFINITY,
        values: feasible.values,
        status: LpStatus::Unbounded,
        duals: vec![0.0; m],
        certificate,
        iterations,
    }
}

/// Residuals of a claimed optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `max_t (b_t - A_t v)^+`.
    pub primal_violation: f64,
    /// `max_j (-v_j)^+`.
    pub bound_violation: f64,
    /// Largest of dual infeasibility, complementary slackness, and the
    /// relative duality gap.
    pub duality_residual: f64,
    pub passed: bool,
}

pub fn verify(problem: &LpProblem, solution: &LpSolution, tol: f64) -> VerificationReport {
    let v = &solution.values;
    let y = &solution.duals;
    let activity = problem.activity(v);
    let primal_violation = activity
        .iter()
        .zip(&problem.rhs)
        .map(|(ax, b)| (b - ax).max(0.0))
        .fold(0.0, f64::max);
    let bound_violation = v.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max);

    let mut duality_residual: f64 = 0.0;
    if y.len() == problem.n_constraints() {
        for (&yt, (&ax, &b)) in y.iter().zip(activity.iter().zip(&problem.rhs)) {
            duality_residual = duality_residual.max((-yt).max(0.0));
            duality_residual = duality_residual.max((yt * (ax - b)).abs());
        }
        for (j, (&c, &x)) in problem.cost.iter().zip(v).enumerate() {
            let aty: f64 = problem
                .matrix
                .column(j)
                .iter()
                .zip(y)
                .map(|(a, yt)| a * yt)
                .sum();
            let reduced = c - aty;
            duality_residual = duality_residual.max((-reduced).max(0.0));
            duality_residual = duality_residual.max((x * reduced).abs());
        }
        let primal_obj = problem.objective(v);
        let dual_obj: f64 = problem.rhs.iter().zip(y).map(|(b, yt)| b * yt).sum();
        duality_residual =
            duality_residual.max((primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs()));
    } else {
        duality_residual = f64::INFINITY;
    }

    let passed = solution.status == LpStatus::Optimal
        && primal_violation < tol
        && bound_violation < tol
        && duality_residual < tol;
    VerificationReport {
        primal_violation,
        bound_violation,
        duality_residual,
        passed,
    }
}

#[cfg(test)]
mod tests;
