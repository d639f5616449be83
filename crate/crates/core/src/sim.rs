//! Deterministic closed-loop world: a 20 Hz tick that freezes a snapshot,
//! steps every CAV's behavior machine, solves the mode planners against the
//! previous tick's communicated plans, advances uncontrolled traffic with
//! the car-following model, integrates all plants, commits the new plans to
//! the V2V mailbox, and audits collisions.

use crate::config::SimConfig;
use crate::dynamics::{cav_step, npc_predict_mean, ControlInput, VehicleState};
use crate::fsm::{
    compute_fsm_inputs, desired_gaps, fsm_step, CavRole, CavView, FormationSpec, FsmInputs,
    Occupant, PlannerMode, PredicateParams, Strategy,
};
use crate::geometry::LaneId;
use crate::npc::eidm_accel;
use crate::planner::{
    acc_upper_bounds, build_cftoc, corridor_between, corridor_precheck, make_virtual_vehicles,
    plan, split_front_rear, CftocInputs, GapReference, ObstacleForecast, ObstacleKind, Plan,
    PlanStatus, PlannerParams,
};
use crate::scenario::{Scenario, VehicleKindSpec};
use crate::trace::TraceRow;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleKind {
    Cav,
    Npc,
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub id: usize,
    pub kind: VehicleKind,
    pub role: Option<CavRole>,
    pub state: VehicleState,
    pub lane: LaneId,
    pub mode: PlannerMode,
    pub length: f64,
    pub width: f64,
    /// Last applied longitudinal acceleration (read by followers' heuristics).
    pub applied_accel: f64,
    pub applied_input: ControlInput,
    /// Lane-change completion latch.
    pub complete: bool,
    /// Feasibility feedback computed during the previous planning phase.
    pub planner_feasible: bool,
}

#[derive(Clone, Debug)]
pub struct World {
    pub road: crate::geometry::RoadGeometry,
    pub vehicles: Vec<Vehicle>,
    /// Vehicle ids of the platoon, front-most (facilitator) first.
    pub platoon: Vec<usize>,
    pub original_lane: LaneId,
    pub target_lane: LaneId,
    pub v_ref: f64,
    /// Most recent plan per vehicle id (the V2V medium).
    pub mailbox: Vec<Option<Plan>>,
    /// Warm starts for lane-change feasibility probes.
    probe_plans: Vec<Option<Plan>>,
    pub tick: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub tick: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    /// Mode sequence (deduplicated) per platoon vehicle.
    pub mode_sequences: Vec<Vec<PlannerMode>>,
    /// First time [s] each platoon vehicle's completion latched.
    pub completion_times: Vec<Option<f64>>,
    /// First time [s] all platoon vehicles were complete.
    pub platoon_complete_time: Option<f64>,
    pub platoon_completed: bool,
    pub collisions: Vec<CollisionEvent>,
    pub planner_failures: usize,
    pub planner_solves: usize,
    pub solve_ms: Vec<f64>,
    pub ticks: usize,
}

impl SimResult {
    pub fn mean_solve_ms(&self) -> f64 {
        if self.solve_ms.is_empty() {
            0.0
        } else {
            self.solve_ms.iter().sum::<f64>() / self.solve_ms.len() as f64
        }
    }

    pub fn median_solve_ms(&self) -> f64 {
        if self.solve_ms.is_empty() {
            return 0.0;
        }
        let mut v = self.solve_ms.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub strategy: Strategy,
    pub duration: f64,
    /// Record wall-clock solve times (off by default so traces and reports
    /// are bit-reproducible).
    pub measure_timing: bool,
    /// Stop the run at the first collision instead of recording and
    /// continuing.
    pub halt_on_collision: bool,
}

impl SimOptions {
    pub fn new(strategy: Strategy, duration: f64) -> Self {
        SimOptions {
            strategy,
            duration,
            measure_timing: false,
            halt_on_collision: false,
        }
    }
}

impl World {
    pub fn from_scenario(scenario: &Scenario, cfg: &SimConfig) -> World {
        let mut vehicles = Vec::new();
        let mut platoon: Vec<(usize, usize)> = Vec::new();
        for (id, spec) in scenario.vehicles.iter().enumerate() {
            let (kind, role) = match spec.kind {
                VehicleKindSpec::Cav { platoon_index } => {
                    platoon.push((platoon_index, id));
                    let role = if platoon_index == 0 {
                        CavRole::Facilitator
                    } else {
                        CavRole::Follower(platoon_index)
                    };
                    (VehicleKind::Cav, Some(role))
                }
                VehicleKindSpec::Npc => (VehicleKind::Npc, None),
            };
            vehicles.push(Vehicle {
                id,
                kind,
                role,
                state: VehicleState::new(spec.s, spec.e_y, spec.e_psi, spec.v),
                lane: LaneId(spec.lane),
                mode: PlannerMode::LaneKeeping,
                length: spec.l_f + spec.l_r,
                width: spec.width,
                applied_accel: 0.0,
                applied_input: ControlInput::zero(),
                complete: false,
                planner_feasible: false,
            });
        }
        platoon.sort();
        let platoon: Vec<usize> = platoon.into_iter().map(|(_, id)| id).collect();

        // Seed the mailbox with constant-speed holds so the first tick has
        // forecasts to plan against.
        let n = cfg.horizon;
        let mailbox = vehicles
            .iter()
            .map(|v| {
                let states = (0..=n)
                    .map(|k| crate::dynamics::AugmentedState {
                        base: VehicleState::new(
                            v.state.s + k as f64 * cfg.dt * v.state.v,
                            v.state.e_y,
                            0.0,
                            v.state.v,
                        ),
                        d: f64::INFINITY,
                    })
                    .collect();
                Some(Plan {
                    states,
                    inputs: vec![ControlInput::zero(); n],
                    slacks: vec![0.0; n + 1],
                    mode: PlannerMode::LaneKeeping,
                    solve_status: PlanStatus::Converged,
                    solve_ms: 0.0,
                    iterations: 0,
                    kkt_residual: 0.0,
                })
            })
            .collect();

        World {
            road: scenario.road.clone(),
            vehicles,
            probe_plans: vec![None; scenario.vehicles.len()],
            platoon,
            original_lane: LaneId(scenario.original_lane),
            target_lane: LaneId(scenario.target_lane),
            v_ref: scenario.v_ref,
            mailbox,
            tick: 0,
        }
    }

    fn predicate_params(&self, cfg: &SimConfig) -> PredicateParams {
        PredicateParams {
            tl_offset: self.road.lane_offset(self.target_lane).unwrap_or(0.0),
            ol_offset: self.road.lane_offset(self.original_lane).unwrap_or(0.0),
            lane_width: self.road.lane_width,
            complete_e_y_band: cfg.complete_e_y_band,
            complete_e_psi_band: cfg.complete_e_psi_band,
            complete_reset_band: cfg.complete_reset_band,
            r_satisfied_tolerance: cfg.r_satisfied_tolerance,
        }
    }

    pub fn fsm_inputs(&self, cfg: &SimConfig, spec: &FormationSpec) -> FsmInputs {
        let p = self.predicate_params(cfg);
        let cavs: Vec<CavView> = self
            .platoon
            .iter()
            .map(|&id| {
                let v = &self.vehicles[id];
                CavView {
                    state: v.state,
                    width: v.width,
                    was_complete: v.complete,
                    planner_feasible: v.planner_feasible,
                }
            })
            .collect();
        let others: Vec<Occupant> = self
            .vehicles
            .iter()
            .filter(|v| v.kind == VehicleKind::Npc)
            .map(|v| Occupant {
                s: v.state.s,
                e_y: v.state.e_y,
                width: v.width,
            })
            .collect();
        compute_fsm_inputs(&cavs, &others, spec, &p)
    }

    /// Forecast set seen by one CAV: mean predictions for every NPC, exact
    /// shifted plans for other CAVs, and virtual vehicles per the conflict
    /// prevention rule.
    fn obstacles_for(&self, ego_id: usize, npc_means: &[Option<Vec<f64>>]) -> Vec<ObstacleForecast> {
        let ego_mode = self.vehicles[ego_id].mode;
        let mut out = Vec::new();
        for v in &self.vehicles {
            if v.id == ego_id {
                continue;
            }
            match v.kind {
                VehicleKind::Npc => {
                    if let Some(s_seq) = &npc_means[v.id] {
                        out.push(ObstacleForecast {
                            kind: ObstacleKind::NpcMean,
                            vehicle_id: v.id,
                            lane: v.lane,
                            s: s_seq.clone(),
                            length: v.length,
                        });
                    }
                }
                VehicleKind::Cav => {
                    if let Some(p) = &self.mailbox[v.id] {
                        let shifted = p.shifted();
                        out.push(ObstacleForecast {
                            kind: ObstacleKind::CavExact,
                            vehicle_id: v.id,
                            lane: v.lane,
                            s: shifted.s_sequence(),
                            length: v.length,
                        });
                    }
                }
            }
        }
        // Virtual vehicles: lane changers always reserve their target-lane
        // slot; while the ego itself is still lane keeping, the mailbox
        // plans of other lane-keeping platoon members are projected too so
        // that a simultaneous entry is mutually consistent.
        let mut candidates: Vec<(usize, PlannerMode, Vec<f64>, f64)> = Vec::new();
        for &pid in &self.platoon {
            if pid == ego_id {
                continue;
            }
            let v = &self.vehicles[pid];
            if v.lane == self.target_lane {
                continue; // already target-lane traffic via its exact plan
            }
            let project = v.mode == PlannerMode::LaneChange
                || (ego_mode == PlannerMode::LaneKeeping && v.mode == PlannerMode::LaneKeeping);
            if !project {
                continue;
            }
            if let Some(p) = &self.mailbox[pid] {
                let shifted = p.shifted();
                candidates.push((pid, PlannerMode::LaneChange, shifted.s_sequence(), v.length));
            }
        }
        out.extend(make_virtual_vehicles(&candidates, self.target_lane, ego_id));
        out
    }

    /// Ego's anticipated longitudinal path for pre-checks: the shifted
    /// previous plan when available, else a constant-speed projection.
    fn ego_projection(&self, id: usize, cfg: &SimConfig) -> Vec<f64> {
        if let Some(p) = &self.mailbox[id] {
            let shifted = p.shifted();
            if shifted.states.len() == cfg.horizon + 1 {
                return shifted.s_sequence();
            }
        }
        let v = &self.vehicles[id];
        (0..=cfg.horizon)
            .map(|k| v.state.s + k as f64 * cfg.dt * v.state.v)
            .collect()
    }
}

/// Outcome of one CAV's planning phase.
struct PlanOutcome {
    plan: Plan,
    input: ControlInput,
    feasible_flag: bool,
    probe_plan: Option<Plan>,
    failed: bool,
    solves: usize,
    solve_ms: Vec<f64>,
}

/// What happened during one tick.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub collisions: Vec<CollisionEvent>,
    pub planner_solves: usize,
    pub planner_failures: usize,
    pub solve_ms: Vec<f64>,
}

/// Advance the world by one control period.
pub fn step(world: &mut World, cfg: &SimConfig, params: &PlannerParams, opts: &SimOptions) -> StepReport {
    let spec = desired_gaps(world.platoon.len().max(2), cfg.d_safe()).expect("valid formation");

    // (1)-(2) Freeze the snapshot, evaluate coordination signals, step all
    // machines, latch completions and reassign lanes.
    let inputs = world.fsm_inputs(cfg, &spec);
    for (pi, &id) in world.platoon.iter().enumerate() {
        let role = world.vehicles[id].role.expect("platoon vehicle has a role");
        let mode = world.vehicles[id].mode;
        let next = fsm_step(mode, role, pi, &inputs, opts.strategy);
        world.vehicles[id].mode = next;
        let was = world.vehicles[id].complete;
        let now = inputs.lc_complete[pi];
        if now && !was {
            world.vehicles[id].lane = world.target_lane;
        } else if was && !now {
            let e_y = world.vehicles[id].state.e_y;
            world.vehicles[id].lane = world.road.nearest_lane(e_y);
        }
        world.vehicles[id].complete = now;
    }

    // (3) Planning phase against the frozen mailbox.
    let npc_means: Vec<Option<Vec<f64>>> = world
        .vehicles
        .iter()
        .map(|v| {
            if v.kind == VehicleKind::Npc {
                npc_predict_mean(&v.state, &world.road, cfg.horizon, cfg.dt)
                    .ok()
                    .map(|traj| traj.iter().map(|z| z.s).collect())
            } else {
                None
            }
        })
        .collect();

    let platoon = world.platoon.clone();
    let mut outcomes: Vec<(usize, PlanOutcome)> = Vec::with_capacity(platoon.len());
    for &id in &platoon {
        let outcome = plan_one(world, id, cfg, params, opts, &spec, &npc_means);
        outcomes.push((id, outcome));
    }

    // (4) Car-following accelerations for uncontrolled traffic.
    let npc_accels: Vec<Option<f64>> = world
        .vehicles
        .iter()
        .map(|v| {
            if v.kind != VehicleKind::Npc {
                return None;
            }
            Some(npc_acceleration(world, v, cfg))
        })
        .collect();

    // (5) Plant integration.
    let limits = cfg.cav_speed_limits();
    for (id, outcome) in &outcomes {
        let v = &mut world.vehicles[*id];
        let kappa = world.road.curvature_at(v.state.s.clamp(world.road.s_range.0, world.road.s_range.1)).unwrap_or(0.0);
        if let Ok(next) = cav_step(&v.state, &outcome.input, kappa, &cfg.vehicle_params(), cfg.dt, limits) {
            v.state = next;
        }
        v.applied_input = outcome.input;
        v.applied_accel = outcome.input.a;
    }
    for v in world.vehicles.iter_mut() {
        if v.kind != VehicleKind::Npc {
            continue;
        }
        let a = npc_accels[v.id].unwrap_or(0.0);
        let kappa = world
            .road
            .curvature_at(v.state.s.clamp(world.road.s_range.0, world.road.s_range.1))
            .unwrap_or(0.0);
        let denom = 1.0 - v.state.e_y * kappa;
        v.state.s += cfg.dt * v.state.v / denom;
        v.state.v = (v.state.v + cfg.dt * a).clamp(0.0, cfg.v_max);
        v.applied_accel = a;
        v.applied_input = ControlInput::new(a, 0.0);
    }

    // (6) Commit plans and feasibility flags to the mailbox.
    let mut report = StepReport::default();
    for (id, outcome) in outcomes {
        world.vehicles[id].planner_feasible = outcome.feasible_flag;
        world.probe_plans[id] = outcome.probe_plan;
        world.mailbox[id] = Some(outcome.plan);
        report.planner_solves += outcome.solves;
        if outcome.failed {
            report.planner_failures += 1;
        }
        report.solve_ms.extend(outcome.solve_ms);
    }

    // (7) Collision audit.
    report.collisions = check_collisions(world);
    world.tick += 1;
    report
}

fn npc_acceleration(world: &World, v: &Vehicle, cfg: &SimConfig) -> f64 {
    // Leader: nearest vehicle ahead whose lateral footprint overlaps this
    // vehicle's lane band.
    let lane_center = world.road.lane_offset(v.lane).unwrap_or(0.0);
    let mut leader: Option<&Vehicle> = None;
    for o in &world.vehicles {
        if o.id == v.id || o.state.s <= v.state.s {
            continue;
        }
        if crate::fsm::overlaps_lane(o.state.e_y, o.width, lane_center, world.road.lane_width) {
            if leader.map_or(true, |l| o.state.s < l.state.s) {
                leader = Some(o);
            }
        }
    }
    let p = cfg.eidm_params(world.v_ref);
    match leader {
        None => eidm_accel(v.state.v, f64::INFINITY, 0.0, 0.0, &p).unwrap_or(0.0),
        Some(l) => {
            let gap = l.state.s - v.state.s - (l.length + v.length) / 2.0;
            if gap <= 0.0 {
                return -8.0; // contact; emergency brake, collision is audited
            }
            let dv = v.state.v - l.state.v;
            eidm_accel(v.state.v, gap, dv, l.applied_accel, &p).unwrap_or(-8.0)
        }
    }
}

fn plan_one(
    world: &World,
    id: usize,
    cfg: &SimConfig,
    params: &PlannerParams,
    opts: &SimOptions,
    spec: &FormationSpec,
    npc_means: &[Option<Vec<f64>>],
) -> PlanOutcome {
    let v = &world.vehicles[id];
    let mode = v.mode;
    let obstacles = world.obstacles_for(id, npc_means);
    let assigned_offset = world.road.lane_offset(v.lane).unwrap_or(0.0);
    let tl_offset = world.road.lane_offset(world.target_lane).unwrap_or(0.0);
    let platoon_index = world.platoon.iter().position(|&p| p == id).unwrap();

    let mut solves = 0usize;
    let mut solve_ms = Vec::new();
    let mut failed = false;

    // Control problem for the active mode.
    let cftoc_inputs = match mode {
        PlannerMode::LaneChange => {
            let (front, rear) = split_front_rear(&obstacles, world.target_lane, v.state.s);
            let corridor = corridor_between(rear, front, params);
            CftocInputs {
                mode,
                ego: v.state,
                u_prev: v.applied_input,
                e_y_ref: tl_offset,
                v_ref: world.v_ref,
                corridor: Some(corridor),
                acc_upper: None,
                gap_ref: None,
            }
        }
        PlannerMode::LaneKeeping | PlannerMode::GapRegulation => {
            let (front, _) = split_front_rear(&obstacles, v.lane, v.state.s);
            let acc_upper = front.map(|f| acc_upper_bounds(f, params));
            let gap_ref = if mode == PlannerMode::GapRegulation {
                gap_reference(world, id, platoon_index, spec, &obstacles)
            } else {
                None
            };
            CftocInputs {
                mode,
                ego: v.state,
                u_prev: v.applied_input,
                e_y_ref: assigned_offset,
                v_ref: world.v_ref,
                corridor: None,
                acc_upper,
                gap_ref,
            }
        }
    };

    let problem = build_cftoc(&cftoc_inputs, params, &world.road);
    let warm = world.mailbox[id].as_ref().map(|p| p.shifted());
    let mut new_plan = plan(&problem, warm.as_ref(), opts.measure_timing);
    solves += 1;
    if opts.measure_timing {
        solve_ms.push(new_plan.solve_ms);
    }

    // Fallback: hold the shifted previous plan, else brake straight.
    let input = if new_plan.solve_status == PlanStatus::Converged {
        new_plan.inputs[0]
    } else {
        failed = true;
        match &warm {
            Some(w) if w.solve_status == PlanStatus::Converged => {
                new_plan.states = w.states.clone();
                new_plan.inputs = w.inputs.clone();
                new_plan.slacks = w.slacks.clone();
                w.inputs[0]
            }
            _ => ControlInput::new(params.a_bounds.0, 0.0),
        }
    };

    // Lane-change feasibility for the next tick.
    let (front, rear) = split_front_rear(&obstacles, world.target_lane, v.state.s);
    let lc_corridor = corridor_between(rear, front, params);
    let projection = world.ego_projection(id, cfg);
    let precheck = corridor_precheck(&projection, &lc_corridor);
    if !precheck && mode == PlannerMode::LaneChange && std::env::var("LANESIM_DEBUG").is_ok() {
        for k in 0..=cfg.horizon {
            if projection[k] < lc_corridor.lo[k] || projection[k] > lc_corridor.hi[k] {
                eprintln!(
                    "tick {} cav{id} precheck fail k={k}: lo {:.2} s {:.2} hi {:.2} (front {:?} rear {:?})",
                    world.tick,
                    lc_corridor.lo[k],
                    projection[k],
                    lc_corridor.hi[k],
                    front.map(|f| f.vehicle_id),
                    rear.map(|r| r.vehicle_id),
                );
                break;
            }
        }
    }

    let mut probe_plan = None;
    let feasible_flag = if v.complete {
        false
    } else if mode == PlannerMode::LaneChange {
        precheck && new_plan.solve_status == PlanStatus::Converged
    } else if !precheck {
        false
    } else {
        let probe_inputs = CftocInputs {
            mode: PlannerMode::LaneChange,
            ego: v.state,
            u_prev: v.applied_input,
            e_y_ref: tl_offset,
            v_ref: world.v_ref,
            corridor: Some(lc_corridor),
            acc_upper: None,
            gap_ref: None,
        };
        let probe_problem = build_cftoc(&probe_inputs, params, &world.road);
        let probe_warm = world.probe_plans[id].as_ref().map(|p| p.shifted());
        let probe = plan(&probe_problem, probe_warm.as_ref(), opts.measure_timing);
        solves += 1;
        if opts.measure_timing {
            solve_ms.push(probe.solve_ms);
        }
        let ok = probe.solve_status == PlanStatus::Converged;
        probe_plan = ok.then_some(probe);
        ok
    };

    PlanOutcome {
        plan: new_plan,
        input,
        feasible_flag,
        probe_plan,
        failed,
        solves,
        solve_ms,
    }
}

/// Reference forecast for the gap state: the facilitator regulates against
/// the preceding target-lane vehicle, followers against the facilitator's
/// communicated plan.
///
/// Follower staging targets place follower `i` one formation slot per
/// already-queued vehicle behind the facilitator (`i * d_safe` for the
/// 0-based index), so each entry keeps the safe clearance to the previously
/// entered vehicle and every corridor boundary is approached from its
/// feasible side.
fn gap_reference(
    world: &World,
    id: usize,
    platoon_index: usize,
    spec: &FormationSpec,
    obstacles: &[ObstacleForecast],
) -> Option<GapReference> {
    let v = &world.vehicles[id];
    if platoon_index == 0 {
        let (front, _) = split_front_rear(obstacles, world.target_lane, v.state.s);
        front.map(|f| GapReference {
            reference_s: f.s.clone(),
            target: spec.d1_des,
        })
    } else {
        let fac_id = world.platoon[0];
        world.mailbox[fac_id].as_ref().map(|p| GapReference {
            reference_s: p.shifted().s_sequence(),
            target: platoon_index as f64 * spec.d_safe,
        })
    }
}

/// Axis-aligned footprint overlap in Frenet coordinates over all pairs.
pub fn check_collisions(world: &World) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    let n = world.vehicles.len();
    for i in 0..n {
        for j in i + 1..n {
            let a = &world.vehicles[i];
            let b = &world.vehicles[j];
            if (a.state.s - b.state.s).abs() < (a.length + b.length) / 2.0
                && (a.state.e_y - b.state.e_y).abs() < (a.width + b.width) / 2.0
            {
                events.push(CollisionEvent {
                    tick: world.tick,
                    a: i,
                    b: j,
                });
            }
        }
    }
    events
}

/// Run a scenario closed loop for `duration` seconds.
pub fn run(scenario: &Scenario, cfg: &SimConfig, opts: &SimOptions) -> SimResult {
    let mut world = World::from_scenario(scenario, cfg);
    let params = PlannerParams::from_config(cfg, &world.road);
    let ticks = (opts.duration / cfg.dt).ceil() as usize;

    let mut trace = Vec::with_capacity((ticks + 1) * world.vehicles.len());
    let mut collisions: Vec<CollisionEvent> = Vec::new();
    let mut planner_failures = 0usize;
    let mut planner_solves = 0usize;
    let mut solve_ms = Vec::new();
    let mut completion_times: Vec<Option<f64>> = vec![None; world.platoon.len()];
    let mut platoon_complete_time = None;
    let mut mode_sequences: Vec<Vec<PlannerMode>> =
        vec![vec![PlannerMode::LaneKeeping]; world.platoon.len()];

    for tick in 0..ticks {
        record_trace(&mut trace, &world, cfg);
        let report = step(&mut world, cfg, &params, opts);
        planner_failures += report.planner_failures;
        planner_solves += report.planner_solves;
        solve_ms.extend(report.solve_ms);
        collisions.extend(report.collisions.iter().copied());

        for (pi, &id) in world.platoon.iter().enumerate() {
            let mode = world.vehicles[id].mode;
            if *mode_sequences[pi].last().unwrap() != mode {
                mode_sequences[pi].push(mode);
            }
            if world.vehicles[id].complete && completion_times[pi].is_none() {
                completion_times[pi] = Some((tick + 1) as f64 * cfg.dt);
            }
        }
        if platoon_complete_time.is_none() && completion_times.iter().all(|t| t.is_some()) {
            platoon_complete_time = Some((tick + 1) as f64 * cfg.dt);
        }
        if opts.halt_on_collision && !collisions.is_empty() {
            break;
        }
    }
    record_trace(&mut trace, &world, cfg);

    SimResult {
        trace,
        mode_sequences,
        platoon_completed: platoon_complete_time.is_some(),
        completion_times,
        platoon_complete_time,
        collisions,
        planner_failures,
        planner_solves,
        solve_ms,
        ticks: world.tick,
    }
}

fn record_trace(trace: &mut Vec<TraceRow>, world: &World, cfg: &SimConfig) {
    for v in &world.vehicles {
        let (status, slack_max, ms) = match (&v.kind, &world.mailbox[v.id]) {
            (VehicleKind::Cav, Some(p)) if world.tick > 0 => (
                match p.solve_status {
                    PlanStatus::Converged => "converged",
                    PlanStatus::MaxIter => "max_iter",
                    PlanStatus::Infeasible => "infeasible",
                },
                p.slacks.iter().fold(0.0f64, |m, &s| m.max(s)),
                p.solve_ms,
            ),
            _ => ("-", 0.0, 0.0),
        };
        trace.push(TraceRow {
            tick: world.tick,
            time_s: world.tick as f64 * cfg.dt,
            vehicle_id: v.id,
            kind: match v.kind {
                VehicleKind::Cav => "cav".into(),
                VehicleKind::Npc => "npc".into(),
            },
            role: match v.role {
                Some(CavRole::Facilitator) => "facilitator".into(),
                Some(CavRole::Follower(i)) => format!("follower{}", i + 1),
                None => "-".into(),
            },
            lane: v.lane.0,
            mode: if v.kind == VehicleKind::Cav {
                v.mode.short().into()
            } else {
                "-".into()
            },
            s: v.state.s,
            e_y: v.state.e_y,
            e_psi: v.state.e_psi,
            v: v.state.v,
            a: v.applied_input.a,
            delta_f: v.applied_input.delta_f,
            slack_max,
            solve_status: status.into(),
            solve_ms: ms,
        });
    }
}
