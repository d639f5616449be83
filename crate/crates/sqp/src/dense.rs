//! Small dense linear-algebra kernels used by the QP solver and the
//! equality-constraint reduction. Column-major storage throughout.

/// Dense column-major matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.nrows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.nrows + r] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.nrows + r] += v;
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.nrows..(c + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.nrows..(c + 1) * self.nrows]
    }

    /// Two distinct columns borrowed mutably at once (for Givens sweeps).
    pub fn col_pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert!(a < b);
        let n = self.nrows;
        let (left, right) = self.data.split_at_mut(b * n);
        (&mut left[a * n..(a + 1) * n], &mut right[..n])
    }

    /// y = A' v (per-column dot products).
    pub fn tr_mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(c), v);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// In-place Cholesky of a symmetric positive definite matrix; on success the
/// lower triangle holds L with A = L L'. Fails on a non-positive pivot.
pub fn cholesky_in_place(a: &mut Mat) -> Result<(), ()> {
    let n = a.nrows;
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let l = a.get(j, k);
            d -= l * l;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(());
        }
        let d = d.sqrt();
        a.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= a.get(i, k) * a.get(j, k);
            }
            a.set(i, j, s / d);
        }
    }
    Ok(())
}

/// Solve L x = b with L lower triangular (from `cholesky_in_place`), in place.
pub fn solve_lower(l: &Mat, b: &mut [f64]) {
    let n = l.nrows;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * b[k];
        }
        b[i] = s / l.get(i, i);
    }
}

/// Solve L' x = b with L lower triangular, in place.
pub fn solve_lower_transpose(l: &Mat, b: &mut [f64]) {
    let n = l.nrows;
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l.get(k, i) * b[k];
        }
        b[i] = s / l.get(i, i);
    }
}

/// Build J = L^{-T} (upper triangular) from the Cholesky factor L.
pub fn lower_inverse_transpose(l: &Mat) -> Mat {
    let n = l.nrows;
    let mut j = Mat::zeros(n, n);
    // Column c of J solves L' x = e_c; backward substitution touches rows <= c.
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        solve_lower_transpose(l, &mut e);
        j.col_mut(c).copy_from_slice(&e);
    }
    j
}

pub fn hypot(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a.abs() < b.abs() {
        (a.abs(), b.abs())
    } else {
        (b.abs(), a.abs())
    };
    if hi == 0.0 {
        return 0.0;
    }
    let r = lo / hi;
    hi * (1.0 + r * r).sqrt()
}

/// Householder QR with column pivoting of an `m x n` matrix (m <= n expected).
/// Returns (factors, column permutation). The upper triangle of the factored
/// matrix holds R; the Householder vectors live below the diagonal with the
/// scalar parts in `tau`.
pub struct PivotedQr {
    pub qr: Mat,
    pub tau: Vec<f64>,
    pub perm: Vec<usize>,
    pub rank_rows: usize,
}

pub fn qr_col_pivot(a: &Mat) -> PivotedQr {
    let m = a.nrows;
    let n = a.ncols;
    let mut qr = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let k = m.min(n);
    let mut tau = vec![0.0; k];
    let mut col_norms: Vec<f64> = (0..n).map(|c| dot(qr.col(c), qr.col(c))).collect();

    for step in 0..k {
        // Pivot: bring the column with the largest remaining norm to `step`.
        let mut best = step;
        let mut best_norm = -1.0;
        for c in step..n {
            if col_norms[c] > best_norm {
                best_norm = col_norms[c];
                best = c;
            }
        }
        if best != step {
            perm.swap(step, best);
            col_norms.swap(step, best);
            let (a_col, b_col) = if step < best {
                qr.col_pair_mut(step, best)
            } else {
                unreachable!()
            };
            a_col.swap_with_slice(b_col);
        }

        // Householder vector for column `step`, rows step..m.
        let mut alpha = 0.0;
        for r in step..m {
            let v = qr.get(r, step);
            alpha += v * v;
        }
        let alpha = alpha.sqrt();
        let x0 = qr.get(step, step);
        let beta = if x0 >= 0.0 { -alpha } else { alpha };
        if alpha == 0.0 {
            tau[step] = 0.0;
            continue;
        }
        let v0 = x0 - beta;
        tau[step] = -v0 / beta;
        qr.set(step, step, beta);
        for r in step + 1..m {
            let v = qr.get(r, step) / v0;
            qr.set(r, step, v);
        }
        // Apply the reflector to the trailing columns.
        for c in step + 1..n {
            let mut s = qr.get(step, c);
            for r in step + 1..m {
                s += qr.get(r, step) * qr.get(r, c);
            }
            s *= tau[step];
            let upd = qr.get(step, c) - s;
            qr.set(step, c, upd);
            for r in step + 1..m {
                let v = qr.get(r, c) - s * qr.get(r, step);
                qr.set(r, c, v);
            }
            col_norms[c] = (col_norms[c] - upd * upd).max(0.0);
        }
        col_norms[step] = 0.0;
    }

    PivotedQr {
        qr,
        tau,
        perm,
        rank_rows: k,
    }
}

impl PivotedQr {
    /// y = Q' b.
    pub fn q_transpose_mul(&self, b: &[f64]) -> Vec<f64> {
        let m = self.qr.nrows;
        let mut y = b.to_vec();
        for step in 0..self.rank_rows {
            if self.tau[step] == 0.0 {
                continue;
            }
            let mut s = y[step];
            for r in step + 1..m {
                s += self.qr.get(r, step) * y[r];
            }
            s *= self.tau[step];
            y[step] -= s;
            for r in step + 1..m {
                y[r] -= s * self.qr.get(r, step);
            }
        }
        y
    }

    /// y = Q b (apply reflectors in reverse).
    pub fn q_mul(&self, b: &[f64]) -> Vec<f64> {
        let m = self.qr.nrows;
        let mut y = b.to_vec();
        for step in (0..self.rank_rows).rev() {
            if self.tau[step] == 0.0 {
                continue;
            }
            let mut s = y[step];
            for r in step + 1..m {
                s += self.qr.get(r, step) * y[r];
            }
            s *= self.tau[step];
            y[step] -= s;
            for r in step + 1..m {
                y[r] -= s * self.qr.get(r, step);
            }
        }
        y
    }

    /// Solve R11 x = b (R11 = leading m x m upper triangle), in place.
    pub fn solve_r11(&self, b: &mut [f64]) -> Result<(), ()> {
        let m = self.rank_rows;
        for i in (0..m).rev() {
            let d = self.qr.get(i, i);
            if d.abs() < 1e-12 {
                return Err(());
            }
            let mut s = b[i];
            for k in i + 1..m {
                s -= self.qr.get(i, k) * b[k];
            }
            b[i] = s / d;
        }
        Ok(())
    }

    /// Solve R11' x = b, in place.
    pub fn solve_r11_transpose(&self, b: &mut [f64]) -> Result<(), ()> {
        let m = self.rank_rows;
        for i in 0..m {
            let d = self.qr.get(i, i);
            if d.abs() < 1e-12 {
                return Err(());
            }
            let mut s = b[i];
            for k in 0..i {
                s -= self.qr.get(k, i) * b[k];
            }
            b[i] = s / d;
        }
        Ok(())
    }
}
