//! Per-vehicle behavior coordination: planner modes, the desired-formation
//! distances that shape the platoon, the predicate computation feeding each
//! machine, and the mode-transition logic for both the baseline
//! (simultaneous, opportunistic) and the proposed (facilitator-led) strategy.
//!
//! Completion and feasibility are treated as independent signals. Re-entry
//! guards (`!complete`) keep the machines absorbed in lane keeping after the
//! platoon maneuver finishes, so a completed platoon never re-triggers.

use crate::dynamics::VehicleState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FsmError {
    #[error("platoon needs at least 2 vehicles, got {0}")]
    PlatoonTooSmall(usize),
    #[error("safe distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlannerMode {
    LaneKeeping,
    LaneChange,
    GapRegulation,
}

impl PlannerMode {
    pub fn short(&self) -> &'static str {
        match self {
            PlannerMode::LaneKeeping => "LK",
            PlannerMode::LaneChange => "LC",
            PlannerMode::GapRegulation => "GR",
        }
    }
}

/// Role within the platoon. Vehicles are indexed from the front; the
/// facilitator is always the front-most vehicle (index 0 in code).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CavRole {
    Facilitator,
    /// 0-based platoon index (>= 1).
    Follower(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Baseline,
    Proposed,
}

/// Desired formation distances derived from the platoon size and the safe
/// spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub n: usize,
    pub d_safe: f64,
    /// Free space the facilitator holds to its preceding vehicle.
    pub d1_des: f64,
    /// Desired signed distance to the facilitator per follower, front to
    /// back (entry `i` is for platoon index `i + 1`).
    pub di_des: Vec<f64>,
}

impl FormationSpec {
    /// Desired gap for a 0-based platoon index.
    pub fn desired_for(&self, index: usize) -> f64 {
        if index == 0 {
            self.d1_des
        } else {
            self.di_des[index - 1]
        }
    }
}

/// `d1_des = n * d_safe`, `di_des = (n - i) * d_safe` for i = 2..n
/// (1-based platoon indices).
pub fn desired_gaps(n: usize, d_safe: f64) -> Result<FormationSpec, FsmError> {
    if n < 2 {
        return Err(FsmError::PlatoonTooSmall(n));
    }
    if d_safe <= 0.0 {
        return Err(FsmError::NonPositiveDistance(d_safe));
    }
    let di_des = (2..=n).map(|i| (n - i) as f64 * d_safe).collect();
    Ok(FormationSpec {
        n,
        d_safe,
        d1_des: n as f64 * d_safe,
        di_des,
    })
}

/// Boolean and distance signals driving all machines for one tick.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FsmInputs {
    pub lc_feasible: Vec<bool>,
    pub lc_complete: Vec<bool>,
    pub r_satisfied: Vec<bool>,
    /// Signed gaps: index 0 is the facilitator headway, others are distances
    /// to the facilitator.
    pub d: Vec<f64>,
    pub delta_s_tl: f64,
    pub delta_s_ol: f64,
    /// Completion of every follower.
    pub lc_complete_platoon: bool,
    /// Completion of the whole platoon including the facilitator.
    pub lc_complete_all: bool,
}

impl FsmInputs {
    pub fn all_feasible(&self) -> bool {
        self.lc_feasible.iter().all(|&b| b)
    }

    pub fn all_r_satisfied(&self) -> bool {
        self.r_satisfied.iter().skip(1).all(|&b| b)
    }
}

/// Per-CAV kinematic view used to evaluate the predicates.
#[derive(Clone, Copy, Debug)]
pub struct CavView {
    pub state: VehicleState,
    pub width: f64,
    /// Completion latch from the previous tick (hysteresis input).
    pub was_complete: bool,
    /// Feasibility feedback from the previous planning phase.
    pub planner_feasible: bool,
}

/// Any other vehicle that can precede the facilitator.
#[derive(Clone, Copy, Debug)]
pub struct Occupant {
    pub s: f64,
    pub e_y: f64,
    pub width: f64,
}

pub struct PredicateParams {
    pub tl_offset: f64,
    pub ol_offset: f64,
    pub lane_width: f64,
    pub complete_e_y_band: f64,
    pub complete_e_psi_band: f64,
    pub complete_reset_band: f64,
    pub r_satisfied_tolerance: f64,
}

/// Lateral-footprint overlap test between a vehicle and a lane band.
pub fn overlaps_lane(e_y: f64, width: f64, lane_center: f64, lane_width: f64) -> bool {
    (e_y - lane_center).abs() < (lane_width + width) / 2.0
}

/// Completion predicate with hysteresis: set inside the tight band, reset
/// only if the vehicle genuinely leaves the target lane again.
pub fn lane_change_complete(state: &VehicleState, was_complete: bool, p: &PredicateParams) -> bool {
    let dy = (state.e_y - p.tl_offset).abs();
    if was_complete {
        dy <= p.complete_reset_band
    } else {
        dy <= p.complete_e_y_band && state.e_psi.abs() <= p.complete_e_psi_band
    }
}

/// Evaluate the coordination signals from a frozen snapshot.
///
/// `cavs` are ordered by platoon index (front-most first); `others` holds
/// every non-platoon vehicle. Headways use center-of-gravity distances and
/// are `+inf` when a lane has no preceding vehicle.
pub fn compute_fsm_inputs(
    cavs: &[CavView],
    others: &[Occupant],
    spec: &FormationSpec,
    p: &PredicateParams,
) -> FsmInputs {
    assert!(!cavs.is_empty(), "a platoon must have a facilitator");
    let fac = &cavs[0];

    let preceding = |lane_center: f64| -> f64 {
        let mut best = f64::INFINITY;
        for o in others {
            if o.s > fac.state.s && overlaps_lane(o.e_y, o.width, lane_center, p.lane_width) {
                best = best.min(o.s - fac.state.s);
            }
        }
        // Other platoon vehicles can precede the facilitator as well.
        for c in &cavs[1..] {
            if c.state.s > fac.state.s
                && overlaps_lane(c.state.e_y, c.width, lane_center, p.lane_width)
            {
                best = best.min(c.state.s - fac.state.s);
            }
        }
        best
    };
    let delta_s_tl = preceding(p.tl_offset);
    let delta_s_ol = preceding(p.ol_offset);

    let mut lc_complete = Vec::with_capacity(cavs.len());
    let mut lc_feasible = Vec::with_capacity(cavs.len());
    let mut d = Vec::with_capacity(cavs.len());
    let mut r_satisfied = Vec::with_capacity(cavs.len());

    for (i, cav) in cavs.iter().enumerate() {
        let complete = lane_change_complete(&cav.state, cav.was_complete, p);
        lc_complete.push(complete);
        lc_feasible.push(cav.planner_feasible && !complete);
        let gap = if i == 0 {
            delta_s_tl.min(delta_s_ol)
        } else {
            fac.state.s - cav.state.s
        };
        d.push(gap);
        let target = spec.desired_for(i);
        r_satisfied.push(gap >= target - p.r_satisfied_tolerance);
    }

    let lc_complete_platoon = lc_complete.iter().skip(1).all(|&b| b);
    let lc_complete_all = lc_complete_platoon && lc_complete[0];

    FsmInputs {
        lc_feasible,
        lc_complete,
        r_satisfied,
        d,
        delta_s_tl,
        delta_s_ol,
        lc_complete_platoon,
        lc_complete_all,
    }
}

/// One deterministic mode transition for the CAV at `index`.
pub fn fsm_step(
    mode: PlannerMode,
    role: CavRole,
    index: usize,
    inputs: &FsmInputs,
    strategy: Strategy,
) -> PlannerMode {
    use PlannerMode::*;
    match strategy {
        Strategy::Baseline => match mode {
            LaneKeeping => {
                if inputs.all_feasible() && !inputs.lc_complete_all {
                    LaneChange
                } else {
                    LaneKeeping
                }
            }
            LaneChange => {
                let abort = inputs
                    .lc_feasible
                    .iter()
                    .zip(&inputs.lc_complete)
                    .any(|(&f, &c)| !f && !c);
                if inputs.lc_complete_all || abort {
                    LaneKeeping
                } else {
                    LaneChange
                }
            }
            // Unreachable under the baseline machine.
            GapRegulation => LaneKeeping,
        },
        Strategy::Proposed => match role {
            CavRole::Facilitator => match mode {
                LaneKeeping => {
                    if inputs.lc_feasible[0] && !inputs.lc_complete[0] {
                        LaneChange
                    } else {
                        LaneKeeping
                    }
                }
                LaneChange => {
                    if inputs.lc_complete[0] {
                        GapRegulation
                    } else if !inputs.lc_feasible[0] {
                        LaneKeeping
                    } else {
                        LaneChange
                    }
                }
                GapRegulation => {
                    if inputs.lc_complete_platoon {
                        LaneKeeping
                    } else {
                        GapRegulation
                    }
                }
            },
            CavRole::Follower(_) => match mode {
                LaneKeeping => {
                    if inputs.lc_complete[index] {
                        LaneKeeping
                    } else if inputs.lc_complete[0] {
                        GapRegulation
                    } else if inputs.all_feasible() {
                        // Simultaneous platoon-wise lane change when feasible.
                        LaneChange
                    } else {
                        LaneKeeping
                    }
                }
                GapRegulation => {
                    if !inputs.lc_complete[0] {
                        // Facilitator aborted or retracted its completion.
                        LaneKeeping
                    } else if inputs.all_r_satisfied() && inputs.lc_feasible[index] {
                        LaneChange
                    } else {
                        GapRegulation
                    }
                }
                LaneChange => {
                    if inputs.lc_complete[index] || !inputs.lc_feasible[index] {
                        LaneKeeping
                    } else {
                        LaneChange
                    }
                }
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize) -> FsmInputs {
        FsmInputs {
            lc_feasible: vec![false; n],
            lc_complete: vec![false; n],
            r_satisfied: vec![false; n],
            d: vec![0.0; n],
            delta_s_tl: f64::INFINITY,
            delta_s_ol: f64::INFINITY,
            lc_complete_platoon: false,
            lc_complete_all: false,
        }
    }

    #[test]
    fn formation_distances_from_table_values() {
        let spec = desired_gaps(3, 6.47).unwrap();
        assert!((spec.d1_des - 19.41).abs() < 1e-12);
        assert!((spec.di_des[0] - 6.47).abs() < 1e-12);
        assert_eq!(spec.di_des[1], 0.0);
    }

    #[test]
    fn last_follower_aligns_with_facilitator() {
        for n in 2..6 {
            let spec = desired_gaps(n, 5.0).unwrap();
            assert_eq!(*spec.di_des.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn formation_monotonically_decreasing() {
        let spec = desired_gaps(5, 3.3).unwrap();
        let mut prev = spec.d1_des;
        for &d in &spec.di_des {
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn small_platoon_is_an_error() {
        assert_eq!(desired_gaps(1, 5.0), Err(FsmError::PlatoonTooSmall(1)));
    }

    #[test]
    fn baseline_enters_lc_only_when_all_feasible() {
        let mut inp = inputs(3);
        inp.lc_feasible = vec![true, true, false];
        let m = fsm_step(PlannerMode::LaneKeeping, CavRole::Facilitator, 0, &inp, Strategy::Baseline);
        assert_eq!(m, PlannerMode::LaneKeeping);
        inp.lc_feasible = vec![true, true, true];
        let m = fsm_step(PlannerMode::LaneKeeping, CavRole::Facilitator, 0, &inp, Strategy::Baseline);
        assert_eq!(m, PlannerMode::LaneChange);
    }

    #[test]
    fn follower_waits_for_facilitator_completion() {
        let inp = inputs(3);
        let m = fsm_step(
            PlannerMode::LaneKeeping,
            CavRole::Follower(1),
            1,
            &inp,
            Strategy::Proposed,
        );
        assert_eq!(m, PlannerMode::LaneKeeping);
        let mut staged = inputs(3);
        staged.lc_complete[0] = true;
        let m = fsm_step(
            PlannerMode::LaneKeeping,
            CavRole::Follower(1),
            1,
            &staged,
            Strategy::Proposed,
        );
        assert_eq!(m, PlannerMode::GapRegulation);
    }

    #[test]
    fn lc_aborts_to_lane_keeping_when_infeasible() {
        let mut inp = inputs(3);
        inp.lc_feasible = vec![false, false, false];
        for (role, idx) in [(CavRole::Facilitator, 0), (CavRole::Follower(1), 1)] {
            let m = fsm_step(PlannerMode::LaneChange, role, idx, &inp, Strategy::Proposed);
            assert_eq!(m, PlannerMode::LaneKeeping);
        }
    }

    #[test]
    fn facilitator_moves_to_gap_regulation_on_completion() {
        let mut inp = inputs(3);
        inp.lc_complete[0] = true;
        let m = fsm_step(PlannerMode::LaneChange, CavRole::Facilitator, 0, &inp, Strategy::Proposed);
        assert_eq!(m, PlannerMode::GapRegulation);
        // Holds the gap until the rest of the platoon is done.
        let m = fsm_step(PlannerMode::GapRegulation, CavRole::Facilitator, 0, &inp, Strategy::Proposed);
        assert_eq!(m, PlannerMode::GapRegulation);
        let mut done = inp.clone();
        done.lc_complete_platoon = true;
        let m = fsm_step(PlannerMode::GapRegulation, CavRole::Facilitator, 0, &done, Strategy::Proposed);
        assert_eq!(m, PlannerMode::LaneKeeping);
    }

    #[test]
    fn follower_leaves_gr_when_ready_and_feasible() {
        let mut inp = inputs(3);
        inp.lc_complete[0] = true;
        inp.r_satisfied = vec![true, true, true];
        inp.lc_feasible = vec![false, true, false];
        let m = fsm_step(PlannerMode::GapRegulation, CavRole::Follower(1), 1, &inp, Strategy::Proposed);
        assert_eq!(m, PlannerMode::LaneChange);
        // The other follower stays staged.
        let m = fsm_step(PlannerMode::GapRegulation, CavRole::Follower(2), 2, &inp, Strategy::Proposed);
        assert_eq!(m, PlannerMode::GapRegulation);
    }

    #[test]
    fn gap_regulation_unreachable_under_baseline_random_walk() {
        // Pseudo-exhaustive: every boolean input combination over 3 CAVs from
        // every baseline-legal mode never yields GapRegulation.
        for mask in 0u32..(1 << 9) {
            let mut inp = inputs(3);
            for i in 0..3 {
                inp.lc_feasible[i] = mask & (1 << i) != 0;
                inp.lc_complete[i] = mask & (1 << (3 + i)) != 0;
                inp.r_satisfied[i] = mask & (1 << (6 + i)) != 0;
            }
            inp.lc_complete_platoon = inp.lc_complete[1] && inp.lc_complete[2];
            inp.lc_complete_all = inp.lc_complete_platoon && inp.lc_complete[0];
            for mode in [PlannerMode::LaneKeeping, PlannerMode::LaneChange] {
                for (role, idx) in [
                    (CavRole::Facilitator, 0usize),
                    (CavRole::Follower(1), 1),
                    (CavRole::Follower(2), 2),
                ] {
                    let m = fsm_step(mode, role, idx, &inp, Strategy::Baseline);
                    assert_ne!(m, PlannerMode::GapRegulation);
                }
            }
        }
    }

    #[test]
    fn completion_predicate_band_and_hysteresis() {
        let p = PredicateParams {
            tl_offset: 3.8,
            ol_offset: 0.0,
            lane_width: 3.8,
            complete_e_y_band: 0.2,
            complete_e_psi_band: 0.05,
            complete_reset_band: 1.0,
            r_satisfied_tolerance: 0.5,
        };
        let near = VehicleState::new(0.0, 3.65, 0.02, 15.0);
        assert!(lane_change_complete(&near, false, &p));
        let misaligned = VehicleState::new(0.0, 3.65, 0.2, 15.0);
        assert!(!lane_change_complete(&misaligned, false, &p));
        // Hysteresis: small wobble does not retract, a lane departure does.
        let wobble = VehicleState::new(0.0, 3.3, 0.0, 15.0);
        assert!(lane_change_complete(&wobble, true, &p));
        let departed = VehicleState::new(0.0, 2.0, 0.0, 15.0);
        assert!(!lane_change_complete(&departed, true, &p));
    }

    #[test]
    fn facilitator_headway_is_min_over_both_lanes() {
        let p = PredicateParams {
            tl_offset: 3.8,
            ol_offset: 0.0,
            lane_width: 3.8,
            complete_e_y_band: 0.2,
            complete_e_psi_band: 0.05,
            complete_reset_band: 1.0,
            r_satisfied_tolerance: 0.5,
        };
        let spec = desired_gaps(3, 6.47).unwrap();
        let cavs = vec![
            CavView {
                state: VehicleState::new(100.0, 0.0, 0.0, 15.0),
                width: 2.0,
                was_complete: false,
                planner_feasible: false,
            },
            CavView {
                state: VehicleState::new(92.0, 0.0, 0.0, 15.0),
                width: 2.0,
                was_complete: false,
                planner_feasible: false,
            },
            CavView {
                state: VehicleState::new(84.0, 0.0, 0.0, 15.0),
                width: 2.0,
                was_complete: false,
                planner_feasible: false,
            },
        ];
        let others = vec![
            Occupant { s: 112.0, e_y: 3.8, width: 2.0 }, // TL, 12 ahead
            Occupant { s: 130.0, e_y: 0.0, width: 2.0 }, // OL, 30 ahead
        ];
        let inputs = compute_fsm_inputs(&cavs, &others, &spec, &p);
        assert_eq!(inputs.delta_s_tl, 12.0);
        assert_eq!(inputs.delta_s_ol, 30.0);
        assert_eq!(inputs.d[0], 12.0);
        // Follower gaps are distances to the facilitator.
        assert_eq!(inputs.d[1], 8.0);
        assert_eq!(inputs.d[2], 16.0);
        // r_satisfied: d >= target - 0.5
        assert!(inputs.r_satisfied[1]); // 8 >= 6.47 - 0.5
        assert!(inputs.r_satisfied[2]); // 16 >= 0 - 0.5
    }

    #[test]
    fn empty_lane_headway_is_infinite() {
        let p = PredicateParams {
            tl_offset: 3.8,
            ol_offset: 0.0,
            lane_width: 3.8,
            complete_e_y_band: 0.2,
            complete_e_psi_band: 0.05,
            complete_reset_band: 1.0,
            r_satisfied_tolerance: 0.5,
        };
        let spec = desired_gaps(2, 6.47).unwrap();
        let cavs = vec![
            CavView {
                state: VehicleState::new(0.0, 0.0, 0.0, 15.0),
                width: 2.0,
                was_complete: false,
                planner_feasible: false,
            },
            CavView {
                state: VehicleState::new(-8.0, 0.0, 0.0, 15.0),
                width: 2.0,
                was_complete: false,
                planner_feasible: false,
            },
        ];
        let others = vec![Occupant { s: 25.0, e_y: 0.0, width: 2.0 }];
        let inputs = compute_fsm_inputs(&cavs, &others, &spec, &p);
        assert_eq!(inputs.delta_s_tl, f64::INFINITY);
        assert_eq!(inputs.d[0], 25.0);
    }
}
