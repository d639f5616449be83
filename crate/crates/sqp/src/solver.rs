//! SQP driver: Gauss-Newton quadratic models, nullspace-reduced dual
//! active-set QP subproblems, L1 merit line search, damped BFGS fallback.

use crate::dense::{dot, norm_inf, Mat};
use crate::kkt::{eval_row, kkt_residuals};
use crate::qp::{self, QpStatus, RowSet};
use crate::reduce::reduce;
use crate::{LinearRow, NlpProblem, NlpSolution, SolveStatus, SqpOptions, Triplet};

#[derive(Clone, Copy)]
enum Side {
    Lo,
    Hi,
}

#[derive(Clone, Copy)]
enum Source {
    Bound(usize),
    Row(usize),
}

pub fn solve(problem: &dyn NlpProblem, x0: &[f64], opts: &SqpOptions) -> NlpSolution {
    let n = problem.num_vars();
    let me = problem.num_eq();
    let rows = problem.linear_rows();
    let basis_hint = problem.eq_basis_hint();

    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    problem.var_bounds(&mut lo, &mut hi);

    // Start from the guess clipped into the bounds.
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| v.max(lo[i]).min(hi[i]))
        .collect();

    let mut grad = vec![0.0; n];
    let mut c = vec![0.0; me];
    let mut jac: Vec<Triplet> = Vec::new();
    let mut hess: Vec<Triplet> = Vec::new();

    let mut merit_weight = 1.0f64;
    let mut stall_count = 0usize;
    let mut bfgs: Option<Mat> = None;
    let mut prev_lagrangian_grad: Option<(Vec<f64>, Vec<f64>)> = None; // (x, grad L)

    let fail = |status: SolveStatus, x: Vec<f64>, it: usize, obj: f64| NlpSolution {
        x,
        eq_multipliers: vec![0.0; me],
        row_multipliers: vec![0.0; rows.len()],
        bound_multipliers: vec![0.0; n],
        objective: obj,
        status,
        iterations: it,
        kkt_residual: f64::INFINITY,
    };

    for it in 1..=opts.max_iter {
        let f = problem.objective(&x);
        problem.gradient(&x, &mut grad);
        problem.eq_constraints(&x, &mut c);
        jac.clear();
        problem.eq_jacobian(&x, &mut jac);
        if !f.is_finite()
            || grad.iter().any(|v| !v.is_finite())
            || c.iter().any(|v| !v.is_finite())
            || jac.iter().any(|t| !t.val.is_finite())
        {
            return fail(SolveStatus::NumericalError, x, it, f);
        }

        let red = match reduce(n, me, &jac, &c, basis_hint.as_deref()) {
            Ok(r) => r,
            Err(_) => return fail(SolveStatus::NumericalError, x, it, f),
        };
        let nf = red.nf;

        // Quadratic model: Gauss-Newton Hessian or BFGS matrix.
        hess.clear();
        let h_dense: Option<&Mat> = match &bfgs {
            Some(b) => Some(b),
            None => {
                problem.hessian(&x, &mut hess);
                None
            }
        };

        // W = H Z, hp = H p0
        let mut w = Mat::zeros(n, nf);
        let mut hp = vec![0.0; n];
        match h_dense {
            Some(b) => {
                for j in 0..nf {
                    let zc = red.z.col(j);
                    let wc = w.col_mut(j);
                    for r in 0..n {
                        let mut s = 0.0;
                        for k in 0..n {
                            s += b.get(r, k) * zc[k];
                        }
                        wc[r] = s;
                    }
                }
                for r in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += b.get(r, k) * red.p0[k];
                    }
                    hp[r] = s;
                }
            }
            None => {
                for t in &hess {
                    for j in 0..nf {
                        let v = red.z.get(t.col, j);
                        if v != 0.0 {
                            w.add(t.row, j, t.val * v);
                        }
                    }
                    hp[t.row] += t.val * red.p0[t.col];
                }
            }
        }

        let mut h_r = Mat::zeros(nf, nf);
        for j in 0..nf {
            let wc = w.col(j);
            for i in 0..nf {
                h_r.set(i, j, dot(red.z.col(i), wc));
            }
        }
        let mut max_diag = 0.0f64;
        for i in 0..nf {
            max_diag = max_diag.max(h_r.get(i, i).abs());
        }
        let reg = 1e-12 * (1.0 + max_diag);
        for i in 0..nf {
            h_r.add(i, i, reg);
        }

        let gp: Vec<f64> = (0..n).map(|i| hp[i] + grad[i]).collect();
        let mut g_r = vec![0.0; nf];
        red.z.tr_mul_vec(&gp, &mut g_r);

        // Reduced one-sided inequality rows.
        let mut cons = RowSet::new(nf);
        let mut provenance: Vec<(Source, Side)> = Vec::new();
        let mut zrow = vec![0.0; nf];
        let mut immediate_infeasible = false;
        for i in 0..n {
            if lo[i] == f64::NEG_INFINITY && hi[i] == f64::INFINITY {
                continue;
            }
            for j in 0..nf {
                zrow[j] = red.z.get(i, j);
            }
            let base = x[i] + red.p0[i];
            push_sides(
                &mut cons,
                &mut provenance,
                Source::Bound(i),
                &zrow,
                base,
                lo[i],
                hi[i],
                &mut immediate_infeasible,
            );
        }
        let mut arow = vec![0.0; nf];
        for (r, row) in rows.iter().enumerate() {
            for v in arow.iter_mut() {
                *v = 0.0;
            }
            let mut base = 0.0;
            for &(col, val) in &row.terms {
                for j in 0..nf {
                    arow[j] += val * red.z.get(col, j);
                }
                base += val * (x[col] + red.p0[col]);
            }
            push_sides(
                &mut cons,
                &mut provenance,
                Source::Row(r),
                &arow,
                base,
                row.lo,
                row.hi,
                &mut immediate_infeasible,
            );
        }

        // Solve the reduced QP, falling back to the elastic relaxation.
        let mut qs = if immediate_infeasible {
            qp::QpSolution {
                status: QpStatus::Infeasible,
                y: vec![0.0; nf],
                multipliers: vec![0.0; cons.len()],
                active: Vec::new(),
                iterations: 0,
            }
        } else {
            qp::solve(h_r.clone(), &g_r, &cons, opts.qp_max_iter)
        };

        if qs.status == QpStatus::Infeasible {
            let m = cons.len();
            let nfe = nf + m;
            let mut h_e = Mat::zeros(nfe, nfe);
            for j in 0..nf {
                for i in 0..nf {
                    h_e.set(i, j, h_r.get(i, j));
                }
            }
            let wt = opts.elastic_weight;
            for k in 0..m {
                h_e.set(nf + k, nf + k, wt);
            }
            let mut g_e = vec![0.0; nfe];
            g_e[..nf].copy_from_slice(&g_r);
            for k in 0..m {
                g_e[nf + k] = opts.elastic_weight;
            }
            let mut cons_e = RowSet::new(nfe);
            let mut buf = vec![0.0; nfe];
            for k in 0..m {
                for v in buf.iter_mut() {
                    *v = 0.0;
                }
                buf[..nf].copy_from_slice(cons.row(k));
                buf[nf + k] = 1.0;
                cons_e.push(&buf, cons.rhs[k]);
            }
            for k in 0..m {
                for v in buf.iter_mut() {
                    *v = 0.0;
                }
                buf[nf + k] = 1.0;
                cons_e.push(&buf, 0.0);
            }
            let qe = qp::solve(h_e, &g_e, &cons_e, opts.qp_max_iter * 2 + 2 * m);
            if qe.status != QpStatus::Optimal {
                return fail(SolveStatus::Infeasible, x, it, f);
            }
            let worst = qe.y[nf..].iter().fold(0.0f64, |a, &b| a.max(b));
            if worst > opts.elastic_violation_floor {
                return fail(SolveStatus::Infeasible, x, it, f);
            }
            qs = qp::QpSolution {
                status: QpStatus::Optimal,
                y: qe.y[..nf].to_vec(),
                multipliers: qe.multipliers[..m].to_vec(),
                active: qe.active.iter().copied().filter(|&k| k < m).collect(),
                iterations: qe.iterations,
            };
        } else if qs.status != QpStatus::Optimal {
            return fail(SolveStatus::MaxIterations, x, it, f);
        }

        // Full-space step and multiplier recovery.
        let mut dx = red.p0.clone();
        for j in 0..nf {
            let zc = red.z.col(j);
            let yj = qs.y[j];
            for i in 0..n {
                dx[i] += yj * zc[i];
            }
        }

        let mut resid = vec![0.0; n];
        match h_dense {
            Some(b) => {
                for r in 0..n {
                    let mut s = grad[r];
                    for k in 0..n {
                        s += b.get(r, k) * dx[k];
                    }
                    resid[r] = s;
                }
            }
            None => {
                resid.copy_from_slice(&grad);
                for t in &hess {
                    resid[t.row] += t.val * dx[t.col];
                }
            }
        }
        let mut row_mult = vec![0.0; rows.len()];
        let mut bound_mult = vec![0.0; n];
        for (k, &(source, side)) in provenance.iter().enumerate() {
            let u = qs.multipliers[k];
            if u == 0.0 {
                continue;
            }
            let signed = match side {
                Side::Lo => -u,
                Side::Hi => u,
            };
            match source {
                Source::Bound(i) => {
                    bound_mult[i] += signed;
                    resid[i] += signed;
                }
                Source::Row(r) => {
                    row_mult[r] += signed;
                    for &(col, val) in &rows[r].terms {
                        resid[col] += signed * val;
                    }
                }
            }
        }
        let lambda = red.equality_multipliers(&resid);

        let res = kkt_residuals(problem, &x, &lambda, &row_mult, &bound_mult);
        if res.max() <= opts.tol {
            return NlpSolution {
                objective: problem.objective(&x),
                x,
                eq_multipliers: lambda,
                row_multipliers: row_mult,
                bound_multipliers: bound_mult,
                status: SolveStatus::Converged,
                iterations: it,
                kkt_residual: res.max(),
            };
        }

        // L1 merit line search.
        let mult_inf = norm_inf(&lambda)
            .max(norm_inf(&row_mult))
            .max(norm_inf(&bound_mult));
        merit_weight = merit_weight.max(1.05 * mult_inf + 1e-2);

        let viol0 = violation_l1(problem, &rows, &lo, &hi, &x, &mut c);
        let merit0 = problem.objective(&x) + merit_weight * viol0;
        let descent = dot(&grad, &dx) - merit_weight * viol0;

        let mut alpha = 1.0;
        let mut accepted = false;
        let mut x_trial = vec![0.0; n];
        while alpha >= opts.min_step {
            for i in 0..n {
                x_trial[i] = x[i] + alpha * dx[i];
            }
            let trial_viol = violation_l1(problem, &rows, &lo, &hi, &x_trial, &mut c);
            let trial_merit = problem.objective(&x_trial) + merit_weight * trial_viol;
            if trial_merit <= merit0 + 1e-4 * alpha * descent.min(0.0) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        if !accepted {
            stall_count += 1;
            if bfgs.is_none() {
                // Gauss-Newton stalled; continue with a damped BFGS model.
                let mut b = Mat::zeros(n, n);
                problem.hessian(&x, &mut hess);
                for t in &hess {
                    b.add(t.row, t.col, t.val);
                }
                for i in 0..n {
                    b.add(i, i, 1e-6 * (1.0 + max_diag));
                }
                bfgs = Some(b);
                prev_lagrangian_grad = None;
                continue;
            }
            if stall_count >= 3 {
                let obj = problem.objective(&x);
                return fail(SolveStatus::MaxIterations, x, it, obj);
            }
            continue;
        }
        stall_count = 0;

        for i in 0..n {
            x[i] += alpha * dx[i];
        }

        // A full Newton step often lands on the optimum; certifying it here
        // saves the extra QP solve a re-check next iteration would cost.
        if alpha == 1.0 {
            let res_new = kkt_residuals(problem, &x, &lambda, &row_mult, &bound_mult);
            if res_new.max() <= opts.tol {
                return NlpSolution {
                    objective: problem.objective(&x),
                    x,
                    eq_multipliers: lambda,
                    row_multipliers: row_mult,
                    bound_multipliers: bound_mult,
                    status: SolveStatus::Converged,
                    iterations: it,
                    kkt_residual: res_new.max(),
                };
            }
        }

        // Damped BFGS update when the fallback model is active.
        if let Some(b) = bfgs.as_mut() {
            let mut gl = vec![0.0; n];
            problem.gradient(&x, &mut gl);
            jac.clear();
            problem.eq_jacobian(&x, &mut jac);
            for t in &jac {
                gl[t.col] += t.val * lambda[t.row];
            }
            for (r, row) in rows.iter().enumerate() {
                for &(col, val) in &row.terms {
                    gl[col] += val * row_mult[r];
                }
            }
            for i in 0..n {
                gl[i] += bound_mult[i];
            }
            if let Some((px, pg)) = prev_lagrangian_grad.take() {
                bfgs_update(b, &px, &x, &pg, &gl);
            }
            prev_lagrangian_grad = Some((x.clone(), gl));
        }
    }

    let obj = problem.objective(&x);
    fail(SolveStatus::MaxIterations, x, opts.max_iter, obj)
}

#[allow(clippy::too_many_arguments)]
fn push_sides(
    cons: &mut RowSet,
    provenance: &mut Vec<(Source, Side)>,
    source: Source,
    row: &[f64],
    base: f64,
    lo: f64,
    hi: f64,
    immediate_infeasible: &mut bool,
) {
    let scale = norm_inf(row);
    if scale < 1e-13 {
        // The reduced direction cannot move this quantity; check feasibility
        // of the fixed value.
        if base < lo - 1e-9 || base > hi + 1e-9 {
            *immediate_infeasible = true;
        }
        return;
    }
    if lo.is_finite() {
        cons.push(row, lo - base);
        provenance.push((source, Side::Lo));
    }
    if hi.is_finite() {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        cons.push(&neg, base - hi);
        provenance.push((source, Side::Hi));
    }
}

fn violation_l1(
    problem: &dyn NlpProblem,
    rows: &[LinearRow],
    lo: &[f64],
    hi: &[f64],
    x: &[f64],
    c_buf: &mut [f64],
) -> f64 {
    problem.eq_constraints(x, c_buf);
    let mut v: f64 = c_buf.iter().map(|v| v.abs()).sum();
    for row in rows {
        let val = eval_row(row, x);
        v += (row.lo - val).max(0.0) + (val - row.hi).max(0.0);
    }
    for i in 0..x.len() {
        v += (lo[i] - x[i]).max(0.0) + (x[i] - hi[i]).max(0.0);
    }
    v
}

fn bfgs_update(b: &mut Mat, x_old: &[f64], x_new: &[f64], g_old: &[f64], g_new: &[f64]) {
    let n = x_old.len();
    let s: Vec<f64> = (0..n).map(|i| x_new[i] - x_old[i]).collect();
    let y: Vec<f64> = (0..n).map(|i| g_new[i] - g_old[i]).collect();
    let mut bs = vec![0.0; n];
    for r in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            acc += b.get(r, k) * s[k];
        }
        bs[r] = acc;
    }
    let sbs = dot(&s, &bs);
    if sbs <= 1e-14 {
        return;
    }
    let sy = dot(&s, &y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r: Vec<f64> = (0..n).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
    let sr = dot(&s, &r);
    if sr <= 1e-14 {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            let v = b.get(i, j) - bs[i] * bs[j] / sbs + r[i] * r[j] / sr;
            b.set(i, j, v);
        }
    }
}
