//! Nullspace elimination of the linearized equality constraints.
//!
//! The QP subproblem's equalities `J p = -c` are removed by writing
//! `p = Z y + p0` with `J Z = 0` and `J p0 = -c`. Problems may supply a
//! *triangular basis hint*: an ordered set of columns such that the equality
//! Jacobian restricted to those columns is lower triangular with nonzero
//! diagonal (true for multiple-shooting transcriptions, where the states of
//! each stage are determined by the previous stage and the inputs). With the
//! hint, elimination is a sparse forward substitution; without it a dense
//! column-pivoted QR is used.

use crate::dense::{qr_col_pivot, Mat, PivotedQr};
use crate::Triplet;

pub struct Reduction {
    pub me: usize,
    /// Reduced dimension (n - me).
    pub nf: usize,
    pub basis: Vec<usize>,
    /// Nullspace basis, n x nf.
    pub z: Mat,
    /// Particular solution of J p = -c.
    pub p0: Vec<f64>,
    backend: Backend,
}

enum Backend {
    /// Sparse columns of the basic submatrix: cols[pivot] = [(row, val)],
    /// rows >= pivot, diagonal first.
    Triangular { cols: Vec<Vec<(usize, f64)>> },
    Qr(PivotedQr),
}

pub enum ReduceError {
    RankDeficient,
}

const PIVOT_TOL: f64 = 1e-10;

pub fn reduce(
    n: usize,
    me: usize,
    jac: &[Triplet],
    c: &[f64],
    basis_hint: Option<&[usize]>,
) -> Result<Reduction, ReduceError> {
    if me == 0 {
        let mut z = Mat::zeros(n, n);
        for i in 0..n {
            z.set(i, i, 1.0);
        }
        return Ok(Reduction {
            me,
            nf: n,
            basis: Vec::new(),
            z,
            p0: vec![0.0; n],
            backend: Backend::Triangular { cols: Vec::new() },
        });
    }

    if let Some(hint) = basis_hint {
        if hint.len() == me {
            if let Some(r) = try_triangular(n, me, jac, c, hint) {
                return Ok(r);
            }
        }
    }
    qr_fallback(n, me, jac, c)
}

fn try_triangular(n: usize, me: usize, jac: &[Triplet], c: &[f64], hint: &[usize]) -> Option<Reduction> {
    // pivot_of[col] = Some(row position in the basis ordering)
    let mut pivot_of = vec![usize::MAX; n];
    for (pos, &col) in hint.iter().enumerate() {
        if col >= n || pivot_of[col] != usize::MAX {
            return None;
        }
        pivot_of[col] = pos;
    }

    // Split each row into basic and nonbasic parts, verifying triangularity.
    let mut nonbasic: Vec<usize> = Vec::with_capacity(n - me);
    let mut nonbasic_idx = vec![usize::MAX; n];
    for col in 0..n {
        if pivot_of[col] == usize::MAX {
            nonbasic_idx[col] = nonbasic.len();
            nonbasic.push(col);
        }
    }

    let mut row_basic: Vec<Vec<(usize, f64)>> = vec![Vec::new(); me];
    let mut row_nonbasic: Vec<Vec<(usize, f64)>> = vec![Vec::new(); me];
    let mut diag = vec![0.0; me];
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); me];
    for t in jac {
        if t.row >= me || t.col >= n {
            return None;
        }
        let p = pivot_of[t.col];
        if p == usize::MAX {
            row_nonbasic[t.row].push((nonbasic_idx[t.col], t.val));
        } else {
            if p > t.row {
                return None; // entry above the pivot row: not lower triangular
            }
            if p == t.row {
                diag[t.row] += t.val;
            }
            row_basic[t.row].push((p, t.val));
            cols[p].push((t.row, t.val));
        }
    }
    for d in &diag {
        if d.abs() < PIVOT_TOL {
            return None;
        }
    }

    let nf = n - me;
    let mut z = Mat::zeros(n, nf);
    let mut xb = vec![0.0; me];

    // Particular solution: forward substitution with rhs -c.
    for r in 0..me {
        let mut s = -c[r];
        for &(p, v) in &row_basic[r] {
            if p < r {
                s -= v * xb[p];
            }
        }
        xb[r] = s / diag[r];
    }
    let mut p0 = vec![0.0; n];
    for (pos, &col) in hint.iter().enumerate() {
        p0[col] = xb[pos];
    }

    // Nullspace columns: one forward substitution per nonbasic variable.
    for j in 0..nf {
        for x in xb.iter_mut() {
            *x = 0.0;
        }
        for r in 0..me {
            let mut s = 0.0;
            for &(nb, v) in &row_nonbasic[r] {
                if nb == j {
                    s -= v;
                }
            }
            for &(p, v) in &row_basic[r] {
                if p < r {
                    s -= v * xb[p];
                }
            }
            xb[r] = s / diag[r];
        }
        let col = z.col_mut(j);
        for (pos, &bcol) in hint.iter().enumerate() {
            col[bcol] = xb[pos];
        }
        col[nonbasic[j]] = 1.0;
    }

    Some(Reduction {
        me,
        nf,
        basis: hint.to_vec(),
        z,
        p0,
        backend: Backend::Triangular { cols },
    })
}

fn qr_fallback(n: usize, me: usize, jac: &[Triplet], c: &[f64]) -> Result<Reduction, ReduceError> {
    let mut dense = Mat::zeros(me, n);
    for t in jac {
        dense.add(t.row, t.col, t.val);
    }
    let f = qr_col_pivot(&dense);
    let basis: Vec<usize> = f.perm[..me].to_vec();
    let nonbasic: Vec<usize> = f.perm[me..].to_vec();
    let nf = n - me;

    // Particular solution.
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut w = f.q_transpose_mul(&neg_c);
    f.solve_r11(&mut w).map_err(|_| ReduceError::RankDeficient)?;
    let mut p0 = vec![0.0; n];
    for (i, &col) in basis.iter().enumerate() {
        p0[col] = w[i];
    }

    // Z columns: [-R11^{-1} R12 e_j ; e_j] in permuted coordinates.
    let mut z = Mat::zeros(n, nf);
    for j in 0..nf {
        let mut rhs = vec![0.0; me];
        for r in 0..me {
            rhs[r] = -f.qr.get(r, me + j);
        }
        f.solve_r11(&mut rhs).map_err(|_| ReduceError::RankDeficient)?;
        let col = z.col_mut(j);
        for (i, &bcol) in basis.iter().enumerate() {
            col[bcol] = rhs[i];
        }
        col[nonbasic[j]] = 1.0;
    }

    Ok(Reduction {
        me,
        nf,
        basis,
        z,
        p0,
        backend: Backend::Qr(f),
    })
}

impl Reduction {
    /// Solve J' lambda = -resid, using only the basic components of `resid`
    /// (the nonbasic components vanish at a reduced-space optimum).
    pub fn equality_multipliers(&self, resid: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Triangular { cols } => {
                let me = self.me;
                let mut lam = vec![0.0; me];
                for pos in (0..me).rev() {
                    let mut s = -resid[self.basis[pos]];
                    let mut diag = 0.0;
                    for &(row, v) in &cols[pos] {
                        if row == pos {
                            diag += v;
                        } else {
                            s -= v * lam[row];
                        }
                    }
                    lam[pos] = s / diag;
                }
                lam
            }
            Backend::Qr(f) => {
                let me = self.me;
                let mut v = vec![0.0; me];
                for (i, &col) in self.basis.iter().enumerate() {
                    v[i] = -resid[col];
                }
                if f.solve_r11_transpose(&mut v).is_err() {
                    return vec![0.0; me];
                }
                let mut w = v.clone();
                w.resize(me, 0.0);
                f.q_mul(&w)
            }
        }
    }
}
