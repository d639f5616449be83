//! Planner-level behavior: derivative correctness against central finite
//! differences, mode-dependent problem structure, and closed-form bounds on
//! optimal plans.

use lanesim_core::config::SimConfig;
use lanesim_core::dynamics::{ControlInput, VehicleState};
use lanesim_core::fsm::PlannerMode;
use lanesim_core::geometry::{LaneId, RoadGeometry};
use lanesim_core::planner::{
    build_cftoc, corridor_between, plan, CftocInputs, CorridorBounds, GapReference,
    ObstacleForecast, ObstacleKind, PlannerParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqp::NlpProblem;

fn setup() -> (SimConfig, RoadGeometry, PlannerParams) {
    let cfg = SimConfig::default();
    let road = RoadGeometry::straight(2, cfg.lane_width, LaneId(0));
    let params = PlannerParams::from_config(&cfg, &road);
    (cfg, road, params)
}

fn lk_inputs(ego: VehicleState, v_ref: f64) -> CftocInputs {
    CftocInputs {
        mode: PlannerMode::LaneKeeping,
        ego,
        u_prev: ControlInput::zero(),
        e_y_ref: 0.0,
        v_ref,
        corridor: None,
        acc_upper: None,
        gap_ref: None,
    }
}

fn npc_forecast(id: usize, lane: usize, s0: f64, v: f64, n: usize, dt: f64) -> ObstacleForecast {
    ObstacleForecast {
        kind: ObstacleKind::NpcMean,
        vehicle_id: id,
        lane: LaneId(lane),
        s: (0..=n).map(|k| s0 + k as f64 * dt * v).collect(),
        length: 4.47,
    }
}

/// Random interior decision vector near a plausible trajectory. Keeping the
/// longitudinal states near the gap target keeps the objective value small,
/// so central differences are not swamped by cancellation noise.
fn random_point(
    problem: &impl NlpProblem,
    rng: &mut ChaCha8Rng,
    ego: &VehicleState,
    s_anchor: &[f64],
) -> Vec<f64> {
    let n = problem.num_vars();
    let mut x = vec![0.0; n];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = match i {
            _ if i < 4 * 41 => match i % 4 {
                0 => s_anchor[i / 4] + rng.gen_range(-1.0..1.0),
                1 => ego.e_y + rng.gen_range(-0.5..0.5),
                2 => rng.gen_range(-0.15..0.15),
                3 => ego.v + rng.gen_range(-1.0..1.0),
                _ => unreachable!(),
            },
            _ => rng.gen_range(-0.2..0.2),
        };
    }
    x
}

#[test]
fn analytic_derivatives_match_central_differences() {
    let (cfg, road, params) = setup();
    let mut curved = road.clone();
    curved.curvature = vec![lanesim_core::geometry::CurvatureSegment {
        start: -1e4,
        end: 1e4,
        kappa: 0.002,
    }];
    let ego = VehicleState::new(10.0, 0.3, 0.02, 15.0);
    let n = cfg.horizon;

    // A gap-regulation problem exercises every objective term; the cruise
    // rows exercise the slack coupling.
    let front = npc_forecast(9, 0, 60.0, 14.0, n, cfg.dt);
    let inputs = CftocInputs {
        mode: PlannerMode::GapRegulation,
        ego,
        u_prev: ControlInput::new(0.1, 0.01),
        e_y_ref: 0.0,
        v_ref: 15.0,
        corridor: None,
        acc_upper: Some(lanesim_core::planner::acc_upper_bounds(&front, &params)),
        gap_ref: Some(GapReference {
            reference_s: front.s.clone(),
            target: 19.41,
        }),
    };
    let problem = build_cftoc(&inputs, &params, &curved);

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let nv = problem.num_vars();
    let me = problem.num_eq();
    let s_anchor: Vec<f64> = front.s.iter().map(|s| s - 19.41).collect();

    for _ in 0..20 {
        let x = random_point(&problem, &mut rng, &ego, &s_anchor);

        // Gradient check (the objective is quadratic, so a larger step
        // costs no truncation error and suppresses rounding noise).
        let h = 1e-5;
        let mut grad = vec![0.0; nv];
        problem.gradient(&x, &mut grad);
        let mut xp = x.clone();
        for i in 0..nv {
            xp[i] = x[i] + h;
            let fp = problem.objective(&xp);
            xp[i] = x[i] - h;
            let fm = problem.objective(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            let scale = 1.0 + grad[i].abs().max(fd.abs());
            assert!(
                (grad[i] - fd).abs() <= 1e-5 * scale,
                "grad[{i}] {} vs fd {}",
                grad[i],
                fd
            );
        }
        let h = 1e-6;

        // Equality Jacobian check (dense reconstruction).
        let mut jac = Vec::new();
        problem.eq_jacobian(&x, &mut jac);
        let mut dense = vec![0.0; me * nv];
        for t in &jac {
            dense[t.row * nv + t.col] += t.val;
        }
        let mut cp = vec![0.0; me];
        let mut cm = vec![0.0; me];
        for i in 0..nv {
            xp[i] = x[i] + h;
            problem.eq_constraints(&xp, &mut cp);
            xp[i] = x[i] - h;
            problem.eq_constraints(&xp, &mut cm);
            xp[i] = x[i];
            for r in 0..me {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                let an = dense[r * nv + i];
                let scale = 1.0 + an.abs().max(fd.abs());
                assert!(
                    (an - fd).abs() <= 1e-5 * scale,
                    "jac[{r},{i}] {an} vs fd {fd}"
                );
            }
        }
    }
}

#[test]
fn lane_change_problem_has_terminal_band_and_no_cruise_rows() {
    let (cfg, road, params) = setup();
    let n = cfg.horizon;
    let rear = npc_forecast(1, 1, -20.0, 15.0, n, cfg.dt);
    let front = npc_forecast(2, 1, 40.0, 15.0, n, cfg.dt);
    let corridor = corridor_between(Some(&rear), Some(&front), &params);
    let inputs = CftocInputs {
        mode: PlannerMode::LaneChange,
        ego: VehicleState::new(0.0, 0.0, 0.0, 15.0),
        u_prev: ControlInput::zero(),
        e_y_ref: 3.8,
        v_ref: 15.0,
        corridor: Some(corridor),
        acc_upper: None,
        gap_ref: None,
    };
    let problem = build_cftoc(&inputs, &params, &road);
    assert!(!problem.has_slack());
    // Only input-rate rows: 2 per stage for k = 1..N.
    assert_eq!(problem.linear_row_count(), 2 * (n - 1));
    let mut lo = vec![0.0; problem.num_vars()];
    let mut hi = vec![0.0; problem.num_vars()];
    problem.var_bounds(&mut lo, &mut hi);
    let iy = problem.state_index(n, 1);
    assert!((lo[iy] - (3.8 - cfg.terminal_e_y_band)).abs() < 1e-12);
    assert!((hi[iy] - (3.8 + cfg.terminal_e_y_band)).abs() < 1e-12);
    let ip = problem.state_index(n, 2);
    assert_eq!(hi[ip], cfg.terminal_e_psi_band);
    // Corridor bounds land on the longitudinal states.
    let is = problem.state_index(n / 2, 0);
    assert!(lo[is].is_finite() && hi[is].is_finite());
}

#[test]
fn lane_keeping_on_empty_road_has_no_slack_variables() {
    let (cfg, road, params) = setup();
    let problem = build_cftoc(&lk_inputs(VehicleState::new(0.0, 0.0, 0.0, 15.0), 15.0), &params, &road);
    assert!(!problem.has_slack());
    assert_eq!(problem.linear_row_count(), 2 * (cfg.horizon - 1));
    assert_eq!(problem.num_vars(), 4 * 41 + 2 * 40);
}

#[test]
fn lane_keeping_accelerates_toward_reference_within_reachable_bound() {
    let (cfg, road, params) = setup();
    let ego = VehicleState::new(0.0, 0.0, 0.0, 20.0);
    let problem = build_cftoc(&lk_inputs(ego, 25.0), &params, &road);
    let p = plan(&problem, None, false);
    assert_eq!(p.solve_status, lanesim_core::planner::PlanStatus::Converged);
    // Monotone nondecreasing planned speed toward the reference.
    for w in p.states.windows(2) {
        assert!(w[1].base.v >= w[0].base.v - 1e-9);
    }
    // Terminal speed within 0.5 m/s of the reachable bound under the input
    // and input-rate limits (the acceleration must ramp at 2 m/s^3 from 0
    // before saturating at a_max, which costs about a meter per second of
    // the unconstrained N*dt*a_max bound).
    let mut a = 0.0f64;
    let mut reachable = 20.0f64;
    for _ in 0..cfg.horizon {
        a = (a + cfg.a_rate_max * cfg.dt).min(cfg.a_max);
        reachable = (reachable + cfg.dt * a).min(25.0);
    }
    let v_n = p.states.last().unwrap().base.v;
    assert!(
        (v_n - reachable).abs() <= 0.5,
        "terminal speed {v_n} vs reachable {reachable}"
    );
    let _ = params;
}

#[test]
fn lane_change_through_roomy_gap_reaches_target_band_with_margin() {
    let (cfg, road, params) = setup();
    let n = cfg.horizon;
    let d_safe = cfg.d_safe();
    // Symmetric gap of 3 d_safe around the ego in the target lane.
    let rear = npc_forecast(1, 1, -1.5 * d_safe - 4.47, 15.0, n, cfg.dt);
    let front = npc_forecast(2, 1, 1.5 * d_safe + 4.47, 15.0, n, cfg.dt);
    let corridor = corridor_between(Some(&rear), Some(&front), &params);
    let ego = VehicleState::new(0.0, 0.0, 0.0, 15.0);
    let inputs = CftocInputs {
        mode: PlannerMode::LaneChange,
        ego,
        u_prev: ControlInput::zero(),
        e_y_ref: 3.8,
        v_ref: 15.0,
        corridor: Some(corridor.clone()),
        acc_upper: None,
        gap_ref: None,
    };
    let problem = build_cftoc(&inputs, &params, &road);
    let p = plan(&problem, None, false);
    assert_eq!(p.solve_status, lanesim_core::planner::PlanStatus::Converged);
    let terminal = p.states.last().unwrap().base;
    assert!((terminal.e_y - 3.8).abs() <= cfg.terminal_e_y_band + 1e-6);
    // All corridor constraints hold strictly inside the gap.
    for (k, st) in p.states.iter().enumerate() {
        assert!(st.base.s >= corridor.lo[k] - 1e-6);
        assert!(st.base.s <= corridor.hi[k] + 1e-6);
    }
    // Dynamic feasibility: replay through the discrete dynamics.
    assert!(problem.dynamics_defect(&p) <= 1e-6, "defect {}", problem.dynamics_defect(&p));
}

#[test]
fn fully_occupied_target_lane_is_infeasible() {
    let (cfg, road, params) = setup();
    let n = cfg.horizon;
    // Front and rear closer than the corridor can admit.
    let rear = npc_forecast(1, 1, -5.0, 15.0, n, cfg.dt);
    let front = npc_forecast(2, 1, 5.0, 15.0, n, cfg.dt);
    let corridor = corridor_between(Some(&rear), Some(&front), &params);
    let inputs = CftocInputs {
        mode: PlannerMode::LaneChange,
        ego: VehicleState::new(0.0, 0.0, 0.0, 15.0),
        u_prev: ControlInput::zero(),
        e_y_ref: 3.8,
        v_ref: 15.0,
        corridor: Some(corridor),
        acc_upper: None,
        gap_ref: None,
    };
    let problem = build_cftoc(&inputs, &params, &road);
    let p = plan(&problem, None, false);
    assert_eq!(p.solve_status, lanesim_core::planner::PlanStatus::Infeasible);
}

#[test]
fn distant_leader_keeps_all_slacks_at_zero() {
    let (cfg, road, params) = setup();
    let n = cfg.horizon;
    let front = npc_forecast(7, 0, 150.0, 15.0, n, cfg.dt);
    let inputs = CftocInputs {
        mode: PlannerMode::LaneKeeping,
        ego: VehicleState::new(0.0, 0.0, 0.0, 15.0),
        u_prev: ControlInput::zero(),
        e_y_ref: 0.0,
        v_ref: 15.0,
        corridor: None,
        acc_upper: Some(lanesim_core::planner::acc_upper_bounds(&front, &params)),
        gap_ref: None,
    };
    let problem = build_cftoc(&inputs, &params, &road);
    assert!(problem.has_slack());
    let p = plan(&problem, None, false);
    assert_eq!(p.solve_status, lanesim_core::planner::PlanStatus::Converged);
    for (k, s) in p.slacks.iter().enumerate() {
        assert!(s.abs() <= 1e-7, "slack[{k}] = {s}");
    }
}

#[test]
fn gap_cost_vanishes_when_gap_sits_at_target() {
    // Identical problems except for the gap term; with the reference moving
    // exactly so the gap stays at its target along the lane-keeping optimum,
    // both must return the same input sequence.
    let (cfg, road, params) = setup();
    let ego = VehicleState::new(0.0, 0.0, 0.0, 15.0);
    let lk_problem = build_cftoc(&lk_inputs(ego, 15.0), &params, &road);
    let lk_plan = plan(&lk_problem, None, false);
    assert_eq!(lk_plan.solve_status, lanesim_core::planner::PlanStatus::Converged);

    let target = 19.41;
    let reference: Vec<f64> = lk_plan.states.iter().map(|st| st.base.s + target).collect();
    let gr_inputs = CftocInputs {
        mode: PlannerMode::GapRegulation,
        ego,
        u_prev: ControlInput::zero(),
        e_y_ref: 0.0,
        v_ref: 15.0,
        corridor: None,
        acc_upper: None,
        gap_ref: Some(GapReference {
            reference_s: reference,
            target,
        }),
    };
    let gr_problem = build_cftoc(&gr_inputs, &params, &road);
    let gr_plan = plan(&gr_problem, None, false);
    assert_eq!(gr_plan.solve_status, lanesim_core::planner::PlanStatus::Converged);
    for (a, b) in lk_plan.inputs.iter().zip(&gr_plan.inputs) {
        assert!((a.a - b.a).abs() < 1e-5, "{} vs {}", a.a, b.a);
        assert!((a.delta_f - b.delta_f).abs() < 1e-5);
    }
    let _ = cfg;
}

#[test]
fn resolving_an_optimal_plan_converges_immediately() {
    let (_cfg, road, params) = setup();
    let ego = VehicleState::new(0.0, 0.2, 0.01, 18.0);
    let problem = build_cftoc(&lk_inputs(ego, 20.0), &params, &road);
    let first = plan(&problem, None, false);
    assert_eq!(first.solve_status, lanesim_core::planner::PlanStatus::Converged);
    let again = plan(&problem, Some(&first), false);
    assert_eq!(again.solve_status, lanesim_core::planner::PlanStatus::Converged);
    assert!(again.iterations <= 2, "took {} iterations", again.iterations);
}

#[test]
fn shifted_warm_start_reduces_iterations_over_a_tracking_sequence() {
    // Roll a lane-keeping sequence for 60 ticks; compare median iteration
    // counts of shift-warm-started solves vs cold starts on the same
    // problems.
    let (cfg, road, params) = setup();
    let mut ego = VehicleState::new(0.0, 0.4, 0.0, 14.0);
    let mut prev: Option<lanesim_core::planner::Plan> = None;
    let mut u_prev = ControlInput::zero();
    let mut warm_iters = Vec::new();
    let mut cold_iters = Vec::new();
    for _ in 0..60 {
        let mut inputs = lk_inputs(ego, 16.0);
        inputs.u_prev = u_prev;
        let problem = build_cftoc(&inputs, &params, &road);
        let warm = prev.as_ref().map(|p: &lanesim_core::planner::Plan| p.shifted());
        let p_warm = plan(&problem, warm.as_ref(), false);
        let p_cold = plan(&problem, None, false);
        warm_iters.push(p_warm.iterations);
        cold_iters.push(p_cold.iterations);
        u_prev = p_warm.inputs[0];
        ego = lanesim_core::dynamics::cav_step(
            &ego,
            &u_prev,
            0.0,
            &cfg.vehicle_params(),
            cfg.dt,
            cfg.cav_speed_limits(),
        )
        .unwrap();
        prev = Some(p_warm);
    }
    let median = |v: &mut Vec<usize>| {
        v.sort_unstable();
        v[v.len() / 2]
    };
    let mw = median(&mut warm_iters);
    let mc = median(&mut cold_iters);
    assert!(mw <= mc, "warm median {mw} vs cold median {mc}");
    assert!(mw <= 2, "warm-started solves should be near-instant, got {mw}");
}

#[test]
fn corridor_tightening_margin_is_off_by_default() {
    let (cfg, road, params) = setup();
    assert_eq!(params.tightening, 0.0);
    // With a nonzero beta the corridor shrinks over the horizon.
    let mut cfg2 = cfg;
    cfg2.tightening_beta = 1.0;
    let params2 = PlannerParams::from_config(&cfg2, &road);
    let n = cfg2.horizon;
    let rear = npc_forecast(1, 1, -30.0, 15.0, n, cfg2.dt);
    let front = npc_forecast(2, 1, 30.0, 15.0, n, cfg2.dt);
    let c0: CorridorBounds = corridor_between(Some(&rear), Some(&front), &params);
    let c1: CorridorBounds = corridor_between(Some(&rear), Some(&front), &params2);
    assert!(c1.hi[n] < c0.hi[n]);
    assert!(c1.lo[n] > c0.lo[n]);
    assert_eq!(c1.hi[0], c0.hi[0]);
}
