//! Dual active-set solver for strictly convex quadratic programs
//!
//! ```text
//! minimize    1/2 y'G y + g'y
//! subject to  c_k' y >= b_k,  k = 0..m-1
//! ```
//!
//! following Goldfarb & Idnani (1983). The solver starts from the
//! unconstrained minimizer and adds violated constraints one at a time,
//! maintaining the factorizations J = L^{-T} Q and R with Givens updates.

use crate::dense::{axpy, cholesky_in_place, dot, hypot, lower_inverse_transpose, solve_lower, solve_lower_transpose, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalError,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: QpStatus,
    pub y: Vec<f64>,
    /// Nonnegative multiplier per constraint (zero when inactive).
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Inequality rows stored densely, row-major.
pub struct RowSet {
    pub n: usize,
    pub rows: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl RowSet {
    pub fn new(n: usize) -> Self {
        RowSet {
            n,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn push(&mut self, row: &[f64], b: f64) {
        debug_assert_eq!(row.len(), self.n);
        self.rows.extend_from_slice(row);
        self.rhs.push(b);
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }
}

/// Solve the QP. `g_mat` is consumed as workspace (overwritten by its
/// Cholesky factor). A small diagonal regularization should already have
/// been applied by the caller if G may be only semidefinite.
pub fn solve(mut g_mat: Mat, g: &[f64], cons: &RowSet, max_iter: usize) -> QpSolution {
    let n = g.len();
    let m = cons.len();

    if cholesky_in_place(&mut g_mat).is_err() {
        return QpSolution {
            status: QpStatus::NumericalError,
            y: vec![0.0; n],
            multipliers: vec![0.0; m],
            active: Vec::new(),
            iterations: 0,
        };
    }

    // Unconstrained minimizer y = -G^{-1} g.
    let mut y: Vec<f64> = g.iter().map(|v| -v).collect();
    solve_lower(&g_mat, &mut y);
    solve_lower_transpose(&g_mat, &mut y);

    let mut jmat = lower_inverse_transpose(&g_mat);

    // Active-set state.
    let mut active: Vec<usize> = Vec::new();
    let mut is_active = vec![false; m];
    let mut u: Vec<f64> = Vec::new(); // multipliers of active constraints
    let mut rmat = Mat::zeros(n, n); // leading q columns hold R
    let mut d = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut r = vec![0.0; n];

    // Row norms for scale-invariant violation pivoting.
    let row_norm: Vec<f64> = (0..m)
        .map(|k| dot(cons.row(k), cons.row(k)).sqrt().max(1e-300))
        .collect();

    let mut iterations = 0;
    loop {
        // Most violated inactive constraint.
        let mut p = usize::MAX;
        let mut worst = -1e-11;
        for k in 0..m {
            if is_active[k] {
                continue;
            }
            let s = (dot(cons.row(k), &y) - cons.rhs[k]) / row_norm[k];
            if s < worst {
                worst = s;
                p = k;
            }
        }
        if p == usize::MAX {
            let mut multipliers = vec![0.0; m];
            for (idx, &k) in active.iter().enumerate() {
                multipliers[k] = u[idx];
            }
            return QpSolution {
                status: QpStatus::Optimal,
                y,
                multipliers,
                active,
                iterations,
            };
        }

        iterations += 1;
        if iterations > max_iter {
            return QpSolution {
                status: QpStatus::IterationLimit,
                y,
                multipliers: vec![0.0; m],
                active,
                iterations,
            };
        }

        let n_plus = cons.row(p).to_vec();
        let mut slack = dot(&n_plus, &y) - cons.rhs[p];
        let mut u_plus = 0.0;

        // Inner loop: take primal/dual steps until constraint p is satisfied
        // or shown incompatible.
        loop {
            let q = active.len();

            // d = J' n+, z = J2 d2, r = R^{-1} d1
            jmat.tr_mul_vec(&n_plus, &mut d);
            z.fill(0.0);
            for c in q..n {
                axpy(d[c], jmat.col(c), &mut z);
            }
            for i in 0..q {
                r[i] = d[i];
            }
            for i in (0..q).rev() {
                let rii = rmat.get(i, i);
                r[i] /= rii;
                for k in 0..i {
                    r[k] -= r[i] * rmat.get(k, i);
                }
            }

            // Dual step length t1 and blocking constraint.
            let mut t1 = f64::INFINITY;
            let mut blocking = usize::MAX;
            for i in 0..q {
                if r[i] > 1e-12 {
                    let t = u[i] / r[i];
                    if t < t1 {
                        t1 = t;
                        blocking = i;
                    }
                }
            }

            // Primal step length t2.
            let z_norm2 = dot(&z, &z);
            let (t2, ztn) = if z_norm2 <= 1e-22 {
                (f64::INFINITY, 0.0)
            } else {
                let ztn = dot(&z, &n_plus);
                (-slack / ztn, ztn)
            };

            if !t1.is_finite() && !t2.is_finite() {
                return QpSolution {
                    status: QpStatus::Infeasible,
                    y,
                    multipliers: vec![0.0; m],
                    active,
                    iterations,
                };
            }

            let t = t1.min(t2);

            if t2.is_finite() {
                axpy(t, &z, &mut y);
            }
            for i in 0..q {
                u[i] -= t * r[i];
            }
            u_plus += t;
            if t2.is_finite() {
                slack += t * ztn;
            }

            if t2 <= t1 {
                // Full step: add p to the active set.
                active.push(p);
                is_active[p] = true;
                u.push(u_plus);
                // Rotate d's tail into position q, updating J.
                for i in (q + 1..n).rev() {
                    if d[i] == 0.0 {
                        continue;
                    }
                    if d[i - 1] == 0.0 {
                        d[i - 1] = d[i];
                        d[i] = 0.0;
                        let (a, b) = jmat.col_pair_mut(i - 1, i);
                        a.swap_with_slice(b);
                    } else {
                        let h = hypot(d[i - 1], d[i]).copysign(d[i - 1]);
                        let gc = d[i - 1] / h;
                        let gs = d[i] / h;
                        let nu = d[i] / (d[i - 1] + h);
                        d[i - 1] = h;
                        d[i] = 0.0;
                        let (a, b) = jmat.col_pair_mut(i - 1, i);
                        for (ai, bi) in a.iter_mut().zip(b.iter_mut()) {
                            let tmp = gc * *ai + gs * *bi;
                            *bi = nu * (*ai + tmp) - *bi;
                            *ai = tmp;
                        }
                    }
                }
                let qn = active.len();
                for i in 0..qn {
                    rmat.set(i, qn - 1, d[i]);
                }
                break;
            }

            // Partial step: drop the blocking constraint and retry.
            is_active[active[blocking]] = false;
            drop_constraint(blocking, &mut active, &mut u, &mut rmat, &mut jmat);
        }
    }
}

/// Remove active constraint at position `idx`, restoring R to upper
/// triangular form and rotating J accordingly.
fn drop_constraint(idx: usize, active: &mut Vec<usize>, u: &mut Vec<f64>, rmat: &mut Mat, jmat: &mut Mat) {
    let q = active.len();
    active.remove(idx);
    u.remove(idx);
    // Shift columns of R left.
    for c in idx + 1..q {
        for r in 0..=c {
            let v = rmat.get(r, c);
            rmat.set(r, c - 1, v);
        }
    }
    for r in 0..q {
        rmat.set(r, q - 1, 0.0);
    }
    // Re-triangularize: zero the subdiagonal entries idx..q-2.
    for i in idx..q - 1 {
        let a = rmat.get(i, i);
        let b = rmat.get(i + 1, i);
        if b == 0.0 {
            continue;
        }
        let (gc, gs) = if a == 0.0 {
            (0.0, 1.0)
        } else {
            let h = hypot(a, b).copysign(a);
            (a / h, b / h)
        };
        for c in i..q - 1 {
            let x = rmat.get(i, c);
            let y = rmat.get(i + 1, c);
            rmat.set(i, c, gc * x + gs * y);
            rmat.set(i + 1, c, -gs * x + gc * y);
        }
        let (ca, cb) = jmat.col_pair_mut(i, i + 1);
        for (ai, bi) in ca.iter_mut().zip(cb.iter_mut()) {
            let x = *ai;
            let y = *bi;
            *ai = gc * x + gs * y;
            *bi = -gs * x + gc * y;
        }
    }
}
