//! Simulation and planner configuration. The defaults are the values used
//! throughout the evaluation; every field can be overridden from a TOML
//! config file.

use crate::dynamics::{SpeedLimits, VehicleParams};
use crate::npc::EidmParams;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerWeights {
    /// Lateral-offset tracking weight.
    pub c_y: f64,
    /// Heading-error tracking weight.
    pub c_psi: f64,
    /// Speed tracking weight.
    pub c_v: f64,
    /// Gap tracking weight, active in gap-regulation mode only.
    pub q_d: f64,
    /// Linear cost on the cruise-control slack.
    pub c_s: f64,
    /// Quadratic input costs.
    pub w_accel: f64,
    pub w_steer: f64,
    /// Quadratic input-rate costs.
    pub w_accel_rate: f64,
    pub w_steer_rate: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        PlannerWeights {
            c_y: 3.0,
            c_psi: 3.0,
            c_v: 2.0,
            q_d: 3.0,
            c_s: 20.0,
            w_accel: 1.0,
            w_steer: 10.0,
            w_accel_rate: 5.0,
            w_steer_rate: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Prediction/control horizon steps.
    pub horizon: usize,
    /// Control period [s]; the loop runs at 1/dt Hz.
    pub dt: f64,
    /// Platoon size.
    pub platoon_size: usize,

    pub l_f: f64,
    pub l_r: f64,
    pub vehicle_width: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Input rates in physical units per second.
    pub a_rate_min: f64,
    pub a_rate_max: f64,
    pub delta_rate_min: f64,
    pub delta_rate_max: f64,

    /// Safe spacing; negative means "derive as 2 + l_f + l_r".
    pub d_safe: f64,

    pub weights: PlannerWeights,

    /// Acceleration noise variance of the traffic prediction model.
    pub sigma_sq: f64,
    /// Optional robustness margin scale on expectation constraints.
    pub tightening_beta: f64,

    pub eidm_coolness: f64,
    pub eidm_s0: f64,
    pub eidm_t_headway: f64,
    pub eidm_a: f64,
    pub eidm_b: f64,
    pub eidm_delta_exp: f64,

    pub lane_width: f64,

    /// Lane-change completion band around the target-lane centerline.
    pub complete_e_y_band: f64,
    pub complete_e_psi_band: f64,
    /// Lateral excursion that retracts a previously latched completion.
    pub complete_reset_band: f64,
    /// Tolerance band on the formation-readiness test.
    pub r_satisfied_tolerance: f64,
    /// Terminal set bands of the lane-change planner.
    pub terminal_e_y_band: f64,
    pub terminal_e_psi_band: f64,

    /// Scene-generation gap threshold [m].
    pub gap_threshold: f64,
    /// Scene-generation resample budget.
    pub resample_budget: usize,

    /// Solver tolerances and caps.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub qp_max_iter: usize,

    /// Record collisions and keep running (false halts the run).
    pub continue_after_collision: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 40,
            dt: 0.05,
            platoon_size: 3,
            l_f: 2.235,
            l_r: 2.235,
            vehicle_width: 2.0,
            v_min: 1.0,
            v_max: 32.0,
            a_min: -3.0,
            a_max: 2.0,
            delta_min: -0.4,
            delta_max: 0.4,
            a_rate_min: -2.0,
            a_rate_max: 2.0,
            delta_rate_min: -0.3,
            delta_rate_max: 0.3,
            d_safe: -1.0,
            weights: PlannerWeights::default(),
            sigma_sq: 0.2,
            tightening_beta: 0.0,
            eidm_coolness: 1.0,
            eidm_s0: 2.0,
            eidm_t_headway: 1.0,
            eidm_a: 0.73,
            eidm_b: 1.67,
            eidm_delta_exp: 4.0,
            lane_width: 3.8,
            complete_e_y_band: 0.2,
            complete_e_psi_band: 0.05,
            complete_reset_band: 1.0,
            r_satisfied_tolerance: 0.5,
            terminal_e_y_band: 0.3,
            terminal_e_psi_band: 0.05,
            gap_threshold: 9.0,
            resample_budget: 1000,
            solver_tol: 1e-6,
            solver_max_iter: 50,
            qp_max_iter: 200,
            continue_after_collision: true,
        }
    }
}

impl SimConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn d_safe(&self) -> f64 {
        if self.d_safe > 0.0 {
            self.d_safe
        } else {
            2.0 + self.l_f + self.l_r
        }
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams {
            l_f: self.l_f,
            l_r: self.l_r,
            width: self.vehicle_width,
        }
    }

    pub fn cav_speed_limits(&self) -> SpeedLimits {
        SpeedLimits {
            v_min: self.v_min,
            v_max: self.v_max,
        }
    }

    pub fn eidm_params(&self, v0: f64) -> EidmParams {
        EidmParams {
            c: self.eidm_coolness,
            s0: self.eidm_s0,
            v0,
            t_headway: self.eidm_t_headway,
            a: self.eidm_a,
            b: self.eidm_b,
            delta_exp: self.eidm_delta_exp,
        }
    }

    /// Per-step input-rate bounds (physical rates scaled by the period).
    pub fn step_rate_bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.a_rate_min * self.dt,
            self.a_rate_max * self.dt,
            self.delta_rate_min * self.dt,
            self.delta_rate_max * self.dt,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_safe_derives_from_geometry() {
        let cfg = SimConfig::default();
        assert!((cfg.d_safe() - 6.47).abs() < 1e-12);
    }

    #[test]
    fn toml_override_roundtrip() {
        let cfg = SimConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let parsed: SimConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.horizon, cfg.horizon);
        assert_eq!(parsed.weights.c_s, cfg.weights.c_s);

        let partial: SimConfig = toml::from_str("horizon = 20\n[weights]\nc_y = 5.0\n").unwrap();
        assert_eq!(partial.horizon, 20);
        assert_eq!(partial.weights.c_y, 5.0);
        assert_eq!(partial.dt, 0.05);
    }
}
