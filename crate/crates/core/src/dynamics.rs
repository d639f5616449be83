//! Vehicle dynamics in the shared Frenet frame: the kinematic bicycle model,
//! its forward-Euler discretization, the constant-velocity mean prediction
//! used for uncontrolled traffic, and the gap-state recursions of the
//! augmented planner state.

use crate::geometry::{GeometryError, RoadGeometry};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("Frenet projection singular: |1 - e_y*kappa| = {denom:.3e}")]
    Singularity { denom: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Frenet-frame kinematic state of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal displacement along the reference centerline [m].
    pub s: f64,
    /// Lateral displacement from the reference centerline [m].
    pub e_y: f64,
    /// Heading error relative to the centerline tangent [rad].
    pub e_psi: f64,
    /// Longitudinal speed at the center of gravity [m/s].
    pub v: f64,
}

impl VehicleState {
    pub fn new(s: f64, e_y: f64, e_psi: f64, v: f64) -> Self {
        VehicleState { s, e_y, e_psi, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration [m/s^2].
    pub a: f64,
    /// Front steering angle [rad].
    pub delta_f: f64,
}

impl ControlInput {
    pub fn new(a: f64, delta_f: f64) -> Self {
        ControlInput { a, delta_f }
    }

    pub fn zero() -> Self {
        ControlInput { a: 0.0, delta_f: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Front axle to C.G. [m].
    pub l_f: f64,
    /// Rear axle to C.G. [m].
    pub l_r: f64,
    /// Body width [m].
    pub width: f64,
}

impl VehicleParams {
    pub fn length(&self) -> f64 {
        self.l_f + self.l_r
    }
}

/// Plant-level speed saturation limits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpeedLimits {
    pub v_min: f64,
    pub v_max: f64,
}

/// Planner state augmented with the gap state of the coordination scheme.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AugmentedState {
    pub base: VehicleState,
    /// Signed gap [m]; +infinity when no reference vehicle exists.
    pub d: f64,
}

/// Time derivative of the state per the kinematic bicycle model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub s_dot: f64,
    pub e_y_dot: f64,
    pub e_psi_dot: f64,
    pub v_dot: f64,
}

const SINGULARITY_EPS: f64 = 1e-6;

/// Right-hand side of the continuous-time kinematic bicycle model.
pub fn cav_derivative(
    z: &VehicleState,
    u: &ControlInput,
    kappa: f64,
    p: &VehicleParams,
) -> Result<StateDerivative, DynamicsError> {
    let denom = 1.0 - z.e_y * kappa;
    if denom.abs() <= SINGULARITY_EPS {
        return Err(DynamicsError::Singularity { denom });
    }
    let cos_psi = z.e_psi.cos();
    Ok(StateDerivative {
        s_dot: z.v * cos_psi / denom,
        e_y_dot: z.v * z.e_psi.sin(),
        e_psi_dot: z.v * (u.delta_f.tan() / (p.l_f + p.l_r) - kappa * cos_psi / denom),
        v_dot: u.a,
    })
}

/// One forward-Euler step with plant-level speed saturation.
pub fn cav_step(
    z: &VehicleState,
    u: &ControlInput,
    kappa: f64,
    p: &VehicleParams,
    dt: f64,
    limits: SpeedLimits,
) -> Result<VehicleState, DynamicsError> {
    let d = cav_derivative(z, u, kappa, p)?;
    let v = (z.v + dt * d.v_dot).clamp(limits.v_min, limits.v_max);
    Ok(VehicleState {
        s: z.s + dt * d.s_dot,
        e_y: z.e_y + dt * d.e_y_dot,
        e_psi: z.e_psi + dt * d.e_psi_dot,
        v,
    })
}

/// Euler step without saturation; the pure discrete-time map used inside the
/// planner's equality constraints.
pub fn cav_step_unsaturated(
    z: &VehicleState,
    u: &ControlInput,
    kappa: f64,
    p: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    let d = cav_derivative(z, u, kappa, p)?;
    Ok(VehicleState {
        s: z.s + dt * d.s_dot,
        e_y: z.e_y + dt * d.e_y_dot,
        e_psi: z.e_psi + dt * d.e_psi_dot,
        v: z.v + dt * d.v_dot,
    })
}

/// Expectation trajectory of the uncontrolled-vehicle prediction model:
/// speed held constant (zero-mean acceleration noise), lateral offset frozen
/// at its current value, heading error zeroed from the first predicted step,
/// longitudinal advance scaled by the curvature term. Returns N+1 states
/// including the initial one.
pub fn npc_predict_mean(
    npc: &VehicleState,
    road: &RoadGeometry,
    n_steps: usize,
    dt: f64,
) -> Result<Vec<VehicleState>, DynamicsError> {
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut state = *npc;
    out.push(state);
    for _ in 0..n_steps {
        let kappa = road.curvature_at(state.s)?;
        let denom = 1.0 - state.e_y * kappa;
        if denom.abs() <= SINGULARITY_EPS {
            return Err(DynamicsError::Singularity { denom });
        }
        state = VehicleState {
            s: state.s + dt * state.v * state.e_psi.cos() / denom,
            e_y: npc.e_y,
            e_psi: 0.0,
            v: state.v,
        };
        out.push(state);
    }
    Ok(out)
}

/// Gap-state recursion: the signed distance from the reference vehicle's
/// longitudinal position to the controlled vehicle's. For the facilitator
/// the reference is the preceding vehicle; for followers it is the
/// facilitator itself.
pub fn gap_next(reference_s_next: f64, self_s_next: f64) -> f64 {
    reference_s_next - self_s_next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CurvatureSegment, LaneId};

    fn params() -> VehicleParams {
        VehicleParams {
            l_f: 2.235,
            l_r: 2.235,
            width: 2.0,
        }
    }

    fn wide_limits() -> SpeedLimits {
        SpeedLimits {
            v_min: -1e9,
            v_max: 1e9,
        }
    }

    /// Literal transcription of the model's right-hand side, kept separate
    /// from the implementation as an oracle.
    fn derivative_oracle(
        z: &VehicleState,
        u: &ControlInput,
        kappa: f64,
        p: &VehicleParams,
    ) -> [f64; 4] {
        [
            z.v * z.e_psi.cos() / (1.0 - z.e_y * kappa),
            z.v * z.e_psi.sin(),
            z.v * (u.delta_f.tan() / (p.l_f + p.l_r)
                - kappa * z.e_psi.cos() / (1.0 - kappa * z.e_y)),
            u.a,
        ]
    }

    #[test]
    fn straight_aligned_coasting() {
        let d = cav_derivative(
            &VehicleState::new(0.0, 0.0, 0.0, 10.0),
            &ControlInput::zero(),
            0.0,
            &params(),
        )
        .unwrap();
        assert_eq!(d, StateDerivative { s_dot: 10.0, e_y_dot: 0.0, e_psi_dot: 0.0, v_dot: 0.0 });
    }

    #[test]
    fn zero_speed_zeroes_kinematics() {
        let d = cav_derivative(
            &VehicleState::new(0.0, 0.0, 0.0, 0.0),
            &ControlInput::new(1.5, 0.2),
            0.0,
            &params(),
        )
        .unwrap();
        assert_eq!(d, StateDerivative { s_dot: 0.0, e_y_dot: 0.0, e_psi_dot: 0.0, v_dot: 1.5 });
    }

    #[test]
    fn derivative_matches_oracle() {
        let z = VehicleState::new(0.0, 0.5, 0.1, 10.0);
        let u = ControlInput::new(1.0, 0.05);
        let d = cav_derivative(&z, &u, 0.01, &params()).unwrap();
        let o = derivative_oracle(&z, &u, 0.01, &params());
        for (got, want) in [d.s_dot, d.e_y_dot, d.e_psi_dot, d.v_dot].iter().zip(o.iter()) {
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn singularity_is_an_error() {
        let z = VehicleState::new(0.0, 100.0, 0.0, 10.0);
        let res = cav_derivative(&z, &ControlInput::zero(), 0.01, &params());
        assert!(matches!(res, Err(DynamicsError::Singularity { .. })));
    }

    #[test]
    fn euler_step_is_exactly_state_plus_dt_derivative() {
        let z = VehicleState::new(3.0, 0.5, 0.1, 10.0);
        let u = ControlInput::new(1.0, 0.05);
        let kappa = 0.01;
        let dt = 0.05;
        let d = cav_derivative(&z, &u, kappa, &params()).unwrap();
        let stepped = cav_step(&z, &u, kappa, &params(), dt, wide_limits()).unwrap();
        assert_eq!(stepped.s, z.s + dt * d.s_dot);
        assert_eq!(stepped.e_y, z.e_y + dt * d.e_y_dot);
        assert_eq!(stepped.e_psi, z.e_psi + dt * d.e_psi_dot);
        assert_eq!(stepped.v, z.v + dt * d.v_dot);
    }

    #[test]
    fn constant_speed_advance() {
        let z = VehicleState::new(0.0, 0.0, 0.0, 10.0);
        let stepped = cav_step(&z, &ControlInput::zero(), 0.0, &params(), 0.05, wide_limits()).unwrap();
        assert_eq!(stepped, VehicleState::new(0.5, 0.0, 0.0, 10.0));
    }

    #[test]
    fn zero_dt_is_identity() {
        let z = VehicleState::new(1.0, -0.2, 0.03, 17.0);
        let u = ControlInput::new(-1.0, 0.1);
        let stepped = cav_step(&z, &u, 0.0, &params(), 0.0, wide_limits()).unwrap();
        assert_eq!(stepped, z);
    }

    #[test]
    fn speed_saturates_at_plant_level() {
        let z = VehicleState::new(0.0, 0.0, 0.0, 1.1);
        let u = ControlInput::new(-3.0, 0.0);
        let limits = SpeedLimits { v_min: 1.0, v_max: 32.0 };
        let stepped = cav_step(&z, &u, 0.0, &params(), 0.05, limits).unwrap();
        assert_eq!(stepped.v, 1.0);
    }

    #[test]
    fn npc_mean_straight_road_unit_advance() {
        let road = RoadGeometry::straight(2, 3.8, LaneId(0));
        let npc = VehicleState::new(5.0, 0.0, 0.0, 20.0);
        let traj = npc_predict_mean(&npc, &road, 10, 0.05).unwrap();
        for (k, st) in traj.iter().enumerate() {
            assert!((st.s - (5.0 + k as f64)).abs() < 1e-12);
            assert_eq!(st.v, 20.0);
        }
    }

    #[test]
    fn npc_mean_freezes_lateral_offset_and_heading() {
        let road = RoadGeometry::straight(2, 3.8, LaneId(0));
        let npc = VehicleState::new(0.0, 1.9, 0.08, 15.0);
        let traj = npc_predict_mean(&npc, &road, 5, 0.05).unwrap();
        for st in &traj[1..] {
            assert_eq!(st.e_y, 1.9);
            assert_eq!(st.e_psi, 0.0);
        }
        // step 0 -> 1 uses the measured heading error
        assert!((traj[1].s - 0.05 * 15.0 * 0.08f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn npc_mean_curvature_scaled_advance() {
        let mut road = RoadGeometry::straight(2, 3.8, LaneId(0));
        road.curvature = vec![CurvatureSegment { start: -1e4, end: 1e4, kappa: 0.002 }];
        let npc = VehicleState::new(0.0, 1.9, 0.0, 15.0);
        let traj = npc_predict_mean(&npc, &road, 4, 0.05).unwrap();
        let per_step = 0.05 * 15.0 / (1.0 - 1.9 * 0.002);
        for k in 1..traj.len() {
            assert!((traj[k].s - traj[k - 1].s - per_step).abs() < 1e-12);
        }
    }

    #[test]
    fn npc_mean_equals_zero_noise_rollout() {
        // Closed-loop Euler rollout of the prediction model with w = 0.
        let mut road = RoadGeometry::straight(2, 3.8, LaneId(0));
        road.curvature = vec![CurvatureSegment { start: 50.0, end: 200.0, kappa: 0.001 }];
        let npc = VehicleState::new(30.0, -0.5, 0.02, 22.0);
        let traj = npc_predict_mean(&npc, &road, 40, 0.05).unwrap();

        let mut s = npc.s;
        let mut e_psi = npc.e_psi;
        for k in 1..=40usize {
            let kappa = road.curvature_at(s).unwrap();
            s += 0.05 * npc.v * e_psi.cos() / (1.0 - npc.e_y * kappa);
            e_psi = 0.0;
            assert_eq!(traj[k].s, s);
            assert_eq!(traj[k].v, 22.0);
        }
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap_next(130.0, 100.0), 30.0);
        assert_eq!(gap_next(100.0, 95.0), 5.0);
        assert_eq!(gap_next(100.0, 105.0), -5.0);
    }
}
