//! First-order optimality residuals, computed from problem callbacks and a
//! candidate primal-dual point.

use crate::{LinearRow, NlpProblem, Triplet};

#[derive(Clone, Copy, Debug, Default)]
pub struct KktResiduals {
    /// Infinity norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Worst equality violation and inequality/bound violation.
    pub feasibility: f64,
    /// Worst complementarity product over rows and bounds.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

pub fn kkt_residuals(
    problem: &dyn NlpProblem,
    x: &[f64],
    eq_multipliers: &[f64],
    row_multipliers: &[f64],
    bound_multipliers: &[f64],
) -> KktResiduals {
    let n = problem.num_vars();
    let me = problem.num_eq();
    let rows = problem.linear_rows();

    let mut grad = vec![0.0; n];
    problem.gradient(x, &mut grad);

    let mut jac: Vec<Triplet> = Vec::new();
    problem.eq_jacobian(x, &mut jac);
    for t in &jac {
        grad[t.col] += t.val * eq_multipliers[t.row];
    }
    for (r, row) in rows.iter().enumerate() {
        for &(col, val) in &row.terms {
            grad[col] += val * row_multipliers[r];
        }
    }
    for (i, nu) in bound_multipliers.iter().enumerate() {
        grad[i] += nu;
    }
    let stationarity = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut c = vec![0.0; me];
    problem.eq_constraints(x, &mut c);
    let mut feasibility = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    problem.var_bounds(&mut lo, &mut hi);

    let mut complementarity: f64 = 0.0;
    for (r, row) in rows.iter().enumerate() {
        let v = eval_row(row, x);
        feasibility = feasibility.max(row.lo - v).max(v - row.hi);
        let mu = row_multipliers[r];
        if mu > 0.0 {
            complementarity = complementarity.max(mu * (row.hi - v).abs());
        } else if mu < 0.0 {
            complementarity = complementarity.max(-mu * (v - row.lo).abs());
        }
    }
    for i in 0..n {
        feasibility = feasibility.max(lo[i] - x[i]).max(x[i] - hi[i]);
        let nu = bound_multipliers[i];
        if nu > 0.0 {
            complementarity = complementarity.max(nu * (hi[i] - x[i]).abs());
        } else if nu < 0.0 {
            complementarity = complementarity.max(-nu * (x[i] - lo[i]).abs());
        }
    }

    KktResiduals {
        stationarity,
        feasibility,
        complementarity,
    }
}

pub(crate) fn eval_row(row: &LinearRow, x: &[f64]) -> f64 {
    row.terms.iter().map(|&(c, v)| v * x[c]).sum()
}
