//! Receding-horizon path planning. Each tick every controlled vehicle builds
//! a mode-dependent constrained finite-time optimal control problem and
//! solves it with the SQP solver: lane keeping and gap regulation track the
//! current lane center (with a slack-relaxed cruise constraint against the
//! preceding vehicle), lane changing tracks the target lane center inside a
//! longitudinal corridor between the target-lane rear and front vehicles and
//! must reach the target-lane band by the end of the horizon.

mod cftoc;

pub use cftoc::CftocProblem;

use crate::config::{PlannerWeights, SimConfig};
use crate::dynamics::{AugmentedState, ControlInput, VehicleParams, VehicleState};
use crate::fsm::PlannerMode;
use crate::geometry::{LaneId, RoadGeometry};
use serde::{Deserialize, Serialize};
use sqp::SqpOptions;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObstacleKind {
    /// Expectation trajectory of an uncontrolled vehicle.
    NpcMean,
    /// Exact communicated plan of another controlled vehicle.
    CavExact,
    /// Another vehicle's plan projected onto its target lane.
    VirtualCav,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObstacleForecast {
    pub kind: ObstacleKind,
    pub vehicle_id: usize,
    pub lane: LaneId,
    /// Center-of-gravity longitudinal positions over the horizon (N+1).
    pub s: Vec<f64>,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// The unit of V2V exchange: one planner solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plan {
    pub states: Vec<AugmentedState>,
    pub inputs: Vec<ControlInput>,
    pub slacks: Vec<f64>,
    pub mode: PlannerMode,
    pub solve_status: PlanStatus,
    /// Wall-clock solve time [ms]; zero unless timing is enabled.
    pub solve_ms: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl Plan {
    pub fn s_sequence(&self) -> Vec<f64> {
        self.states.iter().map(|a| a.base.s).collect()
    }

    /// Receding-horizon shift: drop the first element, duplicate the last.
    pub fn shifted(&self) -> Plan {
        let mut p = self.clone();
        if p.states.len() > 1 {
            p.states.remove(0);
            p.states.push(*p.states.last().unwrap());
        }
        if p.inputs.len() > 1 {
            p.inputs.remove(0);
            p.inputs.push(*p.inputs.last().unwrap());
        }
        if p.slacks.len() > 1 {
            p.slacks.remove(0);
            p.slacks.push(*p.slacks.last().unwrap());
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct PlannerParams {
    pub horizon: usize,
    pub dt: f64,
    pub weights: PlannerWeights,
    pub d_safe: f64,
    pub a_bounds: (f64, f64),
    pub delta_bounds: (f64, f64),
    /// Per-step input-rate bounds.
    pub a_rate_step: (f64, f64),
    pub delta_rate_step: (f64, f64),
    pub v_bounds: (f64, f64),
    /// Road-boundary bound on |e_y|.
    pub e_y_bound: f64,
    pub terminal_e_y_band: f64,
    pub terminal_e_psi_band: f64,
    /// Robustness margin scale: beta * sigma, applied as margin*sqrt(k)*dt
    /// on expectation constraints against uncontrolled traffic.
    pub tightening: f64,
    /// Nominal vehicle length embedded in d_safe.
    pub nominal_length: f64,
    pub vehicle: VehicleParams,
    pub solver: SqpOptions,
}

impl PlannerParams {
    pub fn from_config(cfg: &SimConfig, road: &RoadGeometry) -> Self {
        let (ra_min, ra_max, rd_min, rd_max) = cfg.step_rate_bounds();
        PlannerParams {
            horizon: cfg.horizon,
            dt: cfg.dt,
            weights: cfg.weights,
            d_safe: cfg.d_safe(),
            a_bounds: (cfg.a_min, cfg.a_max),
            delta_bounds: (cfg.delta_min, cfg.delta_max),
            a_rate_step: (ra_min, ra_max),
            delta_rate_step: (rd_min, rd_max),
            v_bounds: (cfg.v_min, cfg.v_max),
            e_y_bound: road.boundary_half_width(cfg.vehicle_width),
            terminal_e_y_band: cfg.terminal_e_y_band,
            terminal_e_psi_band: cfg.terminal_e_psi_band,
            tightening: cfg.tightening_beta * cfg.sigma_sq.sqrt(),
            nominal_length: cfg.l_f + cfg.l_r,
            vehicle: cfg.vehicle_params(),
            solver: SqpOptions {
                tol: cfg.solver_tol,
                max_iter: cfg.solver_max_iter,
                qp_max_iter: cfg.qp_max_iter,
                ..SqpOptions::default()
            },
        }
    }

    /// Required center-of-gravity clearance between two vehicles: the safe
    /// distance embeds one nominal vehicle length, so only excess length
    /// beyond nominal widens the margin.
    pub fn cg_clearance(&self, other_length: f64) -> f64 {
        self.d_safe + (other_length + self.vehicle.length()) / 2.0 - self.nominal_length
    }
}

/// Longitudinal corridor the ego must stay inside during a lane change,
/// already adjusted for clearances and robustness margins.
#[derive(Clone, Debug)]
pub struct CorridorBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Reference sequence for the gap state and its tracking target.
#[derive(Clone, Debug)]
pub struct GapReference {
    /// Predicted longitudinal positions of the reference vehicle (N+1).
    pub reference_s: Vec<f64>,
    pub target: f64,
}

/// Forecasts of lane-changing vehicles projected onto the target lane;
/// other planners treat them as real target-lane traffic.
pub fn make_virtual_vehicles(
    plans: &[(usize, PlannerMode, Vec<f64>, f64)],
    target_lane: LaneId,
    ego_id: usize,
) -> Vec<ObstacleForecast> {
    plans
        .iter()
        .filter(|(id, mode, _, _)| *id != ego_id && *mode == PlannerMode::LaneChange)
        .map(|(id, _, s, length)| ObstacleForecast {
            kind: ObstacleKind::VirtualCav,
            vehicle_id: *id,
            lane: target_lane,
            s: s.clone(),
            length: *length,
        })
        .collect()
}

/// Nearest obstacle ahead of / behind the ego position in a lane, judged by
/// the first horizon sample. Ties go to the rear.
pub fn split_front_rear<'a>(
    obstacles: &'a [ObstacleForecast],
    lane: LaneId,
    ego_s: f64,
) -> (Option<&'a ObstacleForecast>, Option<&'a ObstacleForecast>) {
    let mut front: Option<&ObstacleForecast> = None;
    let mut rear: Option<&ObstacleForecast> = None;
    for o in obstacles {
        if o.lane != lane || o.s.is_empty() {
            continue;
        }
        if o.s[0] > ego_s {
            if front.map_or(true, |f| o.s[0] < f.s[0]) {
                front = Some(o);
            }
        } else if rear.map_or(true, |r| o.s[0] > r.s[0]) {
            rear = Some(o);
        }
    }
    (front, rear)
}

/// Corridor construction for a lane change between optional rear and front
/// forecasts. Robustness tightening applies only to stochastic forecasts.
pub fn corridor_between(
    rear: Option<&ObstacleForecast>,
    front: Option<&ObstacleForecast>,
    params: &PlannerParams,
) -> CorridorBounds {
    let n = params.horizon;
    let mut lo = vec![f64::NEG_INFINITY; n + 1];
    let mut hi = vec![f64::INFINITY; n + 1];
    for k in 0..=n {
        let tight = params.tightening * (k as f64).sqrt() * params.dt;
        if let Some(r) = rear {
            let t = if r.kind == ObstacleKind::NpcMean { tight } else { 0.0 };
            lo[k] = r.s[k.min(r.s.len() - 1)] + params.cg_clearance(r.length) + t;
        }
        if let Some(f) = front {
            let t = if f.kind == ObstacleKind::NpcMean { tight } else { 0.0 };
            hi[k] = f.s[k.min(f.s.len() - 1)] - params.cg_clearance(f.length) - t;
        }
    }
    CorridorBounds { lo, hi }
}

/// Upper bounds for the slack-relaxed cruise constraint against a preceding
/// vehicle: `s_k - eps_k <= front_k - clearance`.
pub fn acc_upper_bounds(front: &ObstacleForecast, params: &PlannerParams) -> Vec<f64> {
    let n = params.horizon;
    (0..=n)
        .map(|k| {
            let tight = if front.kind == ObstacleKind::NpcMean {
                params.tightening * (k as f64).sqrt() * params.dt
            } else {
                0.0
            };
            front.s[k.min(front.s.len() - 1)] - params.cg_clearance(front.length) - tight
        })
        .collect()
}

/// Slack allowed when testing the feasibility flag. Optimal plans ride the
/// corridor boundary exactly, so a strict test would flap on the
/// centimeter-scale drift between consecutive forecasts; the planner itself
/// still enforces the unrelaxed margins.
pub const PRECHECK_TOLERANCE: f64 = 0.15;

/// Geometric feasibility pre-check: the ego's anticipated longitudinal path
/// must keep at least the safe clearance to the target-lane rear and front
/// forecasts over the whole horizon.
pub fn corridor_precheck(ego_s: &[f64], corridor: &CorridorBounds) -> bool {
    for (k, &s) in ego_s.iter().enumerate() {
        if s < corridor.lo[k.min(corridor.lo.len() - 1)] - PRECHECK_TOLERANCE
            || s > corridor.hi[k.min(corridor.hi.len() - 1)] + PRECHECK_TOLERANCE
        {
            return false;
        }
    }
    true
}

/// Inputs for one CFTOC construction.
#[derive(Clone, Debug)]
pub struct CftocInputs {
    pub mode: PlannerMode,
    pub ego: VehicleState,
    pub u_prev: ControlInput,
    /// Lateral target: current lane center in LK/GR, target lane in LC.
    pub e_y_ref: f64,
    pub v_ref: f64,
    pub corridor: Option<CorridorBounds>,
    pub acc_upper: Option<Vec<f64>>,
    pub gap_ref: Option<GapReference>,
}

/// Assemble the mode's optimization problem. Stage curvatures are sampled
/// along a constant-speed projection of the ego (exact on piecewise-constant
/// roads away from breakpoints).
pub fn build_cftoc(inputs: &CftocInputs, params: &PlannerParams, road: &RoadGeometry) -> CftocProblem {
    let n = params.horizon;
    let mut kappa = Vec::with_capacity(n);
    let mut s_proj = inputs.ego.s;
    for _ in 0..n {
        let s_clamped = s_proj.clamp(road.s_range.0, road.s_range.1);
        kappa.push(road.curvature_at(s_clamped).unwrap_or(0.0));
        s_proj += params.dt * inputs.ego.v;
    }
    CftocProblem::new(inputs.clone(), params.clone(), kappa)
}

/// Solve a built problem, optionally warm-started from a shifted previous
/// plan. Solver failures are reported in the plan status, never panicked.
pub fn plan(problem: &CftocProblem, warm_start: Option<&Plan>, measure_timing: bool) -> Plan {
    let x0 = problem.initial_guess(warm_start);
    let t0 = if measure_timing { Some(Instant::now()) } else { None };
    let sol = sqp::solve(problem, &x0, problem.solver_options());
    let solve_ms = t0.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
    problem.extract_plan(&sol, solve_ms)
}
