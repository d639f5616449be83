//! Sequential quadratic programming for sparse nonlinear programs of the form
//!
//! ```text
//!     minimize    f(x)
//!     subject to  c(x) = 0                 (smooth equalities)
//!                 lo_r <= a_r' x <= hi_r   (linear inequality rows)
//!                 lb <= x <= ub            (variable bounds)
//! ```
//!
//! Each major iteration linearizes the equalities, builds a strictly convex
//! quadratic model from the problem's Hessian approximation, eliminates the
//! equality constraints through a nullspace basis, and solves the reduced
//! inequality-constrained QP with a dual active-set method. Steps are
//! globalized by a backtracking line search on an L1 merit function. When a
//! QP subproblem has no feasible point it is re-solved in elastic form
//! (slack-relaxed inequalities); the problem is declared infeasible only if
//! the relaxation cannot push the violation below a floor.
//!
//! Receding-horizon users should pass the previous solution, shifted by one
//! stage, as the initial guess; the solver then typically converges in one
//! or two iterations.

mod dense;
pub mod kkt;
mod qp;
mod reduce;
mod solver;

pub use kkt::{kkt_residuals, KktResiduals};
pub use solver::solve;

/// One entry of a sparse matrix in coordinate form.
#[derive(Clone, Copy, Debug)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, val: f64) -> Self {
        Triplet { row, col, val }
    }
}

/// A two-sided linear inequality `lo <= sum(terms) <= hi`. Either side may be
/// infinite.
#[derive(Clone, Debug)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// Problem callbacks. All slices are sized by the corresponding dimension;
/// Jacobian/Hessian callbacks append triplets to a cleared buffer.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Positive semidefinite model of the Lagrangian Hessian (typically the
    /// Gauss-Newton Hessian of the objective). Entries are full symmetric
    /// (both (i,j) and (j,i) or diagonal), duplicates are summed.
    fn hessian(&self, x: &[f64], out: &mut Vec<Triplet>);

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]);
    fn eq_jacobian(&self, x: &[f64], out: &mut Vec<Triplet>);

    /// Variable bounds; fill with `f64::NEG_INFINITY` / `f64::INFINITY` where
    /// unbounded.
    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]);

    /// Linear inequality rows (may be empty).
    fn linear_rows(&self) -> Vec<LinearRow> {
        Vec::new()
    }

    /// Optional ordered column set making the equality Jacobian lower
    /// triangular (see `reduce`); row `r` pivots on column `basis[r]`.
    fn eq_basis_hint(&self) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
    NumericalError,
}

#[derive(Clone, Debug)]
pub struct SqpOptions {
    /// KKT tolerance for declaring convergence.
    pub tol: f64,
    /// Major (SQP) iteration cap.
    pub max_iter: usize,
    /// Active-set iteration cap per QP subproblem.
    pub qp_max_iter: usize,
    /// Violation floor for declaring infeasibility after elastic relaxation.
    pub elastic_violation_floor: f64,
    /// Linear penalty weight on elastic slacks.
    pub elastic_weight: f64,
    /// Smallest accepted line-search step.
    pub min_step: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            tol: 1e-6,
            max_iter: 50,
            qp_max_iter: 200,
            elastic_violation_floor: 1e-4,
            elastic_weight: 1e4,
            min_step: 1e-6,
        }
    }
}

/// Solution report. Multiplier sign conventions: the Lagrangian is
/// `f + lambda'c + sum_r mu_r * (a_r'x) + sum_i nu_i * x_i` where `mu_r > 0`
/// means the upper side of row `r` is active and `mu_r < 0` the lower side,
/// and likewise `nu_i` for variable bounds.
#[derive(Clone, Debug)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub eq_multipliers: Vec<f64>,
    pub row_multipliers: Vec<f64>,
    pub bound_multipliers: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
}
