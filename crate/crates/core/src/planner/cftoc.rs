//! Direct multiple-shooting transcription of the mode-dependent planning
//! problem. States, inputs and cruise slacks are all decision variables;
//! the discretized vehicle dynamics enter as nonlinear equality constraints
//! with analytic Jacobians. The gap state is an affine function of the ego's
//! longitudinal position given the communicated reference forecast, so its
//! tracking cost is expressed directly on `s` and the gap sequence is
//! reconstructed after the solve.

use super::{CftocInputs, Plan, PlanStatus, PlannerParams};
use crate::dynamics::{AugmentedState, ControlInput};
use crate::fsm::PlannerMode;
use sqp::{LinearRow, NlpProblem, NlpSolution, SolveStatus, SqpOptions, Triplet};

pub struct CftocProblem {
    inputs: CftocInputs,
    params: PlannerParams,
    /// Per-stage curvature, length N.
    kappa: Vec<f64>,
    n: usize,
    has_slack: bool,
    rows: Vec<LinearRow>,
}

impl CftocProblem {
    pub(super) fn new(inputs: CftocInputs, params: PlannerParams, kappa: Vec<f64>) -> Self {
        let n = params.horizon;
        let has_slack = inputs.acc_upper.is_some();
        let mut p = CftocProblem {
            inputs,
            params,
            kappa,
            n,
            has_slack,
            rows: Vec::new(),
        };
        p.rows = p.build_rows();
        p
    }

    #[inline]
    pub fn state_index(&self, k: usize, coord: usize) -> usize {
        4 * k + coord
    }

    #[inline]
    pub fn input_index(&self, k: usize, coord: usize) -> usize {
        4 * (self.n + 1) + 2 * k + coord
    }

    #[inline]
    pub fn slack_index(&self, k: usize) -> usize {
        4 * (self.n + 1) + 2 * self.n + k
    }

    pub fn mode(&self) -> PlannerMode {
        self.inputs.mode
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn has_slack(&self) -> bool {
        self.has_slack
    }

    pub fn solver_options(&self) -> &SqpOptions {
        &self.params.solver
    }

    pub fn linear_row_count(&self) -> usize {
        self.rows.len()
    }

    /// Input-rate rows for k >= 1 and the cruise-control rows; the k = 0
    /// input rate is folded into the first input's bounds.
    fn build_rows(&self) -> Vec<LinearRow> {
        let mut rows = Vec::new();
        let (ra_min, ra_max) = self.params.a_rate_step;
        let (rd_min, rd_max) = self.params.delta_rate_step;
        for k in 1..self.n {
            rows.push(LinearRow {
                terms: vec![(self.input_index(k, 0), 1.0), (self.input_index(k - 1, 0), -1.0)],
                lo: ra_min,
                hi: ra_max,
            });
            rows.push(LinearRow {
                terms: vec![(self.input_index(k, 1), 1.0), (self.input_index(k - 1, 1), -1.0)],
                lo: rd_min,
                hi: rd_max,
            });
        }
        if let Some(acc) = &self.inputs.acc_upper {
            for k in 0..=self.n {
                rows.push(LinearRow {
                    terms: vec![(self.state_index(k, 0), 1.0), (self.slack_index(k), -1.0)],
                    lo: f64::NEG_INFINITY,
                    hi: acc[k],
                });
            }
        }
        rows
    }

    /// Initial decision vector: the shifted previous plan when provided,
    /// otherwise a coasting rollout at the current speed.
    pub fn initial_guess(&self, warm: Option<&Plan>) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        match warm {
            Some(p) if p.states.len() == self.n + 1 && p.inputs.len() == self.n => {
                for k in 0..=self.n {
                    let z = p.states[k].base;
                    x[self.state_index(k, 0)] = z.s;
                    x[self.state_index(k, 1)] = z.e_y;
                    x[self.state_index(k, 2)] = z.e_psi;
                    x[self.state_index(k, 3)] = z.v;
                }
                for k in 0..self.n {
                    x[self.input_index(k, 0)] = p.inputs[k].a;
                    x[self.input_index(k, 1)] = p.inputs[k].delta_f;
                }
                if self.has_slack {
                    for k in 0..=self.n {
                        x[self.slack_index(k)] = p.slacks.get(k).copied().unwrap_or(0.0).max(0.0);
                    }
                }
                // Re-anchor the first state on the measurement.
                x[self.state_index(0, 0)] = self.inputs.ego.s;
                x[self.state_index(0, 1)] = self.inputs.ego.e_y;
                x[self.state_index(0, 2)] = self.inputs.ego.e_psi;
                x[self.state_index(0, 3)] = self.inputs.ego.v;
            }
            _ => {
                let z0 = self.inputs.ego;
                for k in 0..=self.n {
                    let t = k as f64 * self.params.dt;
                    x[self.state_index(k, 0)] = z0.s + t * z0.v;
                    x[self.state_index(k, 1)] = z0.e_y;
                    x[self.state_index(k, 2)] = 0.0;
                    x[self.state_index(k, 3)] = z0.v;
                }
                x[self.state_index(0, 2)] = z0.e_psi;
            }
        }
        x
    }

    /// Convert a solver result into a plan, reconstructing the gap sequence
    /// from the reference forecast.
    pub fn extract_plan(&self, sol: &NlpSolution, solve_ms: f64) -> Plan {
        let status = match sol.status {
            SolveStatus::Converged => PlanStatus::Converged,
            SolveStatus::Infeasible => PlanStatus::Infeasible,
            SolveStatus::MaxIterations | SolveStatus::NumericalError => PlanStatus::MaxIter,
        };
        let mut states = Vec::with_capacity(self.n + 1);
        for k in 0..=self.n {
            let base = crate::dynamics::VehicleState {
                s: sol.x[self.state_index(k, 0)],
                e_y: sol.x[self.state_index(k, 1)],
                e_psi: sol.x[self.state_index(k, 2)],
                v: sol.x[self.state_index(k, 3)],
            };
            let d = match &self.inputs.gap_ref {
                Some(g) => g.reference_s[k.min(g.reference_s.len() - 1)] - base.s,
                None => f64::INFINITY,
            };
            states.push(AugmentedState { base, d });
        }
        let inputs = (0..self.n)
            .map(|k| ControlInput {
                a: sol.x[self.input_index(k, 0)],
                delta_f: sol.x[self.input_index(k, 1)],
            })
            .collect();
        let slacks = if self.has_slack {
            (0..=self.n).map(|k| sol.x[self.slack_index(k)]).collect()
        } else {
            vec![0.0; self.n + 1]
        };
        Plan {
            states,
            inputs,
            slacks,
            mode: self.inputs.mode,
            solve_status: status,
            solve_ms,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
        }
    }

    /// Replay the plan through the discrete dynamics and report the largest
    /// per-stage defect (dynamic-feasibility audit).
    pub fn dynamics_defect(&self, plan: &Plan) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.n {
            let z = plan.states[k].base;
            let u = plan.inputs[k];
            if let Ok(next) = crate::dynamics::cav_step_unsaturated(
                &z,
                &u,
                self.kappa[k],
                &self.params.vehicle,
                self.params.dt,
            ) {
                let got = plan.states[k + 1].base;
                worst = worst
                    .max((next.s - got.s).abs())
                    .max((next.e_y - got.e_y).abs())
                    .max((next.e_psi - got.e_psi).abs())
                    .max((next.v - got.v).abs());
            } else {
                worst = f64::INFINITY;
            }
        }
        worst
    }

    fn gr_s_target(&self, k: usize) -> Option<f64> {
        self.inputs
            .gap_ref
            .as_ref()
            .map(|g| g.reference_s[k.min(g.reference_s.len() - 1)] - g.target)
    }
}

impl NlpProblem for CftocProblem {
    fn num_vars(&self) -> usize {
        4 * (self.n + 1) + 2 * self.n + if self.has_slack { self.n + 1 } else { 0 }
    }

    fn num_eq(&self) -> usize {
        4 * (self.n + 1)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let w = &self.params.weights;
        let mut obj = 0.0;
        for k in 0..=self.n {
            let ey = x[self.state_index(k, 1)] - self.inputs.e_y_ref;
            let psi = x[self.state_index(k, 2)];
            let v = x[self.state_index(k, 3)] - self.inputs.v_ref;
            obj += w.c_y * ey * ey + w.c_psi * psi * psi + w.c_v * v * v;
            if let Some(target) = self.gr_s_target(k) {
                let ds = x[self.state_index(k, 0)] - target;
                obj += w.q_d * ds * ds;
            }
            if self.has_slack {
                obj += w.c_s * x[self.slack_index(k)];
            }
        }
        let mut prev = (self.inputs.u_prev.a, self.inputs.u_prev.delta_f);
        for k in 0..self.n {
            let a = x[self.input_index(k, 0)];
            let d = x[self.input_index(k, 1)];
            obj += w.w_accel * a * a + w.w_steer * d * d;
            let da = a - prev.0;
            let dd = d - prev.1;
            obj += w.w_accel_rate * da * da + w.w_steer_rate * dd * dd;
            prev = (a, d);
        }
        obj
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let w = &self.params.weights;
        grad.fill(0.0);
        for k in 0..=self.n {
            grad[self.state_index(k, 1)] = 2.0 * w.c_y * (x[self.state_index(k, 1)] - self.inputs.e_y_ref);
            grad[self.state_index(k, 2)] = 2.0 * w.c_psi * x[self.state_index(k, 2)];
            grad[self.state_index(k, 3)] = 2.0 * w.c_v * (x[self.state_index(k, 3)] - self.inputs.v_ref);
            if let Some(target) = self.gr_s_target(k) {
                grad[self.state_index(k, 0)] = 2.0 * w.q_d * (x[self.state_index(k, 0)] - target);
            }
            if self.has_slack {
                grad[self.slack_index(k)] = w.c_s;
            }
        }
        for k in 0..self.n {
            let ia = self.input_index(k, 0);
            let id = self.input_index(k, 1);
            grad[ia] += 2.0 * w.w_accel * x[ia];
            grad[id] += 2.0 * w.w_steer * x[id];
            let (pa, pd) = if k == 0 {
                (self.inputs.u_prev.a, self.inputs.u_prev.delta_f)
            } else {
                (x[self.input_index(k - 1, 0)], x[self.input_index(k - 1, 1)])
            };
            grad[ia] += 2.0 * w.w_accel_rate * (x[ia] - pa);
            grad[id] += 2.0 * w.w_steer_rate * (x[id] - pd);
            if k > 0 {
                grad[self.input_index(k - 1, 0)] -= 2.0 * w.w_accel_rate * (x[ia] - pa);
                grad[self.input_index(k - 1, 1)] -= 2.0 * w.w_steer_rate * (x[id] - pd);
            }
        }
    }

    fn hessian(&self, _x: &[f64], out: &mut Vec<Triplet>) {
        let w = &self.params.weights;
        for k in 0..=self.n {
            out.push(Triplet::new(self.state_index(k, 1), self.state_index(k, 1), 2.0 * w.c_y));
            out.push(Triplet::new(self.state_index(k, 2), self.state_index(k, 2), 2.0 * w.c_psi));
            out.push(Triplet::new(self.state_index(k, 3), self.state_index(k, 3), 2.0 * w.c_v));
            if self.inputs.gap_ref.is_some() {
                out.push(Triplet::new(self.state_index(k, 0), self.state_index(k, 0), 2.0 * w.q_d));
            }
            if self.has_slack {
                // Curvature model for the linear slack cost; keeps the
                // reduced Hessian strictly convex without altering the
                // objective or its gradient.
                out.push(Triplet::new(self.slack_index(k), self.slack_index(k), w.c_s));
            }
        }
        for k in 0..self.n {
            let ia = self.input_index(k, 0);
            let id = self.input_index(k, 1);
            out.push(Triplet::new(ia, ia, 2.0 * w.w_accel + 2.0 * w.w_accel_rate));
            out.push(Triplet::new(id, id, 2.0 * w.w_steer + 2.0 * w.w_steer_rate));
            if k + 1 < self.n {
                let ja = self.input_index(k + 1, 0);
                let jd = self.input_index(k + 1, 1);
                out.push(Triplet::new(ia, ia, 2.0 * w.w_accel_rate));
                out.push(Triplet::new(id, id, 2.0 * w.w_steer_rate));
                out.push(Triplet::new(ia, ja, -2.0 * w.w_accel_rate));
                out.push(Triplet::new(ja, ia, -2.0 * w.w_accel_rate));
                out.push(Triplet::new(id, jd, -2.0 * w.w_steer_rate));
                out.push(Triplet::new(jd, id, -2.0 * w.w_steer_rate));
            }
        }
    }

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        let dt = self.params.dt;
        let len = self.params.vehicle.length();
        out[0] = x[self.state_index(0, 0)] - self.inputs.ego.s;
        out[1] = x[self.state_index(0, 1)] - self.inputs.ego.e_y;
        out[2] = x[self.state_index(0, 2)] - self.inputs.ego.e_psi;
        out[3] = x[self.state_index(0, 3)] - self.inputs.ego.v;
        for k in 0..self.n {
            let s = x[self.state_index(k, 0)];
            let ey = x[self.state_index(k, 1)];
            let psi = x[self.state_index(k, 2)];
            let v = x[self.state_index(k, 3)];
            let a = x[self.input_index(k, 0)];
            let del = x[self.input_index(k, 1)];
            let kap = self.kappa[k];
            let denom = 1.0 - ey * kap;
            let cp = psi.cos();
            let sp = psi.sin();
            let r = 4 + 4 * k;
            out[r] = x[self.state_index(k + 1, 0)] - (s + dt * v * cp / denom);
            out[r + 1] = x[self.state_index(k + 1, 1)] - (ey + dt * v * sp);
            out[r + 2] = x[self.state_index(k + 1, 2)]
                - (psi + dt * v * (del.tan() / len - kap * cp / denom));
            out[r + 3] = x[self.state_index(k + 1, 3)] - (v + dt * a);
        }
    }

    fn eq_jacobian(&self, x: &[f64], out: &mut Vec<Triplet>) {
        let dt = self.params.dt;
        let len = self.params.vehicle.length();
        for c in 0..4 {
            out.push(Triplet::new(c, self.state_index(0, c), 1.0));
        }
        for k in 0..self.n {
            let ey = x[self.state_index(k, 1)];
            let psi = x[self.state_index(k, 2)];
            let v = x[self.state_index(k, 3)];
            let del = x[self.input_index(k, 1)];
            let kap = self.kappa[k];
            let denom = 1.0 - ey * kap;
            let denom2 = denom * denom;
            let cp = psi.cos();
            let sp = psi.sin();
            let r = 4 + 4 * k;

            // d residual_r / d z_{k+1} = I
            for c in 0..4 {
                out.push(Triplet::new(r + c, self.state_index(k + 1, c), 1.0));
            }
            // d residual / d z_k = -A_k
            // s row
            out.push(Triplet::new(r, self.state_index(k, 0), -1.0));
            out.push(Triplet::new(r, self.state_index(k, 1), -dt * v * cp * kap / denom2));
            out.push(Triplet::new(r, self.state_index(k, 2), dt * v * sp / denom));
            out.push(Triplet::new(r, self.state_index(k, 3), -dt * cp / denom));
            // e_y row
            out.push(Triplet::new(r + 1, self.state_index(k, 1), -1.0));
            out.push(Triplet::new(r + 1, self.state_index(k, 2), -dt * v * cp));
            out.push(Triplet::new(r + 1, self.state_index(k, 3), -dt * sp));
            // e_psi row
            out.push(Triplet::new(r + 2, self.state_index(k, 1), dt * v * kap * kap * cp / denom2));
            out.push(Triplet::new(r + 2, self.state_index(k, 2), -1.0 - dt * v * kap * sp / denom));
            out.push(Triplet::new(r + 2, self.state_index(k, 3), -dt * (del.tan() / len - kap * cp / denom)));
            // v row
            out.push(Triplet::new(r + 3, self.state_index(k, 3), -1.0));
            // d residual / d u_k = -B_k
            let sec = 1.0 / del.cos();
            out.push(Triplet::new(r + 2, self.input_index(k, 1), -dt * v * sec * sec / len));
            out.push(Triplet::new(r + 3, self.input_index(k, 0), -dt));
        }
    }

    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.fill(f64::NEG_INFINITY);
        hi.fill(f64::INFINITY);
        let p = &self.params;
        for k in 0..=self.n {
            let iy = self.state_index(k, 1);
            lo[iy] = -p.e_y_bound;
            hi[iy] = p.e_y_bound;
            let iv = self.state_index(k, 3);
            lo[iv] = p.v_bounds.0;
            hi[iv] = p.v_bounds.1;
            if let Some(c) = &self.inputs.corridor {
                let is = self.state_index(k, 0);
                lo[is] = c.lo[k];
                hi[is] = c.hi[k];
            }
            if self.has_slack {
                lo[self.slack_index(k)] = 0.0;
            }
        }
        for k in 0..self.n {
            let ia = self.input_index(k, 0);
            let id = self.input_index(k, 1);
            lo[ia] = p.a_bounds.0;
            hi[ia] = p.a_bounds.1;
            lo[id] = p.delta_bounds.0;
            hi[id] = p.delta_bounds.1;
        }
        // First-step input rates relative to the previously applied input.
        let ia = self.input_index(0, 0);
        let id = self.input_index(0, 1);
        lo[ia] = lo[ia].max(self.inputs.u_prev.a + p.a_rate_step.0);
        hi[ia] = hi[ia].min(self.inputs.u_prev.a + p.a_rate_step.1);
        lo[id] = lo[id].max(self.inputs.u_prev.delta_f + p.delta_rate_step.0);
        hi[id] = hi[id].min(self.inputs.u_prev.delta_f + p.delta_rate_step.1);
        // Terminal set: end the horizon inside the target-lane band.
        if self.inputs.mode == PlannerMode::LaneChange {
            let iy = self.state_index(self.n, 1);
            lo[iy] = lo[iy].max(self.inputs.e_y_ref - p.terminal_e_y_band);
            hi[iy] = hi[iy].min(self.inputs.e_y_ref + p.terminal_e_y_band);
            let ip = self.state_index(self.n, 2);
            lo[ip] = -p.terminal_e_psi_band;
            hi[ip] = p.terminal_e_psi_band;
        }
    }

    fn linear_rows(&self) -> Vec<LinearRow> {
        self.rows.clone()
    }

    fn eq_basis_hint(&self) -> Option<Vec<usize>> {
        Some((0..4 * (self.n + 1)).collect())
    }
}
