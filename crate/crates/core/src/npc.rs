//! Longitudinal car-following control for uncontrolled traffic: the
//! intelligent driver model plus the constant-acceleration heuristic blend
//! (Kesting, Treiber, Helbing 2010), which relaxes unrealistically hard
//! braking in situations that are not safety critical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NpcError {
    #[error("non-positive gap {gap} with a leader present (contact)")]
    Contact { gap: f64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EidmParams {
    /// Coolness factor in [0, 1]; 1 fully trusts the heuristic.
    pub c: f64,
    /// Minimum spacing [m].
    pub s0: f64,
    /// Desired speed [m/s].
    pub v0: f64,
    /// Desired time headway [s].
    pub t_headway: f64,
    /// Maximum acceleration [m/s^2].
    pub a: f64,
    /// Comfortable deceleration [m/s^2], positive.
    pub b: f64,
    /// Free-flow acceleration exponent.
    pub delta_exp: f64,
}

/// Desired dynamic gap s*(v, dv), floored at s0.
pub fn desired_gap(v: f64, dv: f64, p: &EidmParams) -> f64 {
    p.s0 + (v * p.t_headway + v * dv / (2.0 * (p.a * p.b).sqrt())).max(0.0)
}

/// Equilibrium following gap behind a steady leader at speed `v`.
pub fn equilibrium_gap(v: f64, p: &EidmParams) -> f64 {
    desired_gap(v, 0.0, p) / (1.0 - (v / p.v0).powf(p.delta_exp)).sqrt()
}

/// Plain intelligent-driver-model acceleration. A missing leader is modeled
/// as `gap = +inf, dv = 0`.
pub fn idm_accel(v: f64, gap: f64, dv: f64, p: &EidmParams) -> Result<f64, NpcError> {
    if gap <= 0.0 {
        return Err(NpcError::Contact { gap });
    }
    let free = 1.0 - (v / p.v0).powf(p.delta_exp);
    let interaction = if gap.is_finite() {
        let ss = desired_gap(v, dv, p);
        (ss / gap) * (ss / gap)
    } else {
        0.0
    };
    Ok(p.a * (free - interaction))
}

/// Enhanced IDM: blends the IDM output with the constant-acceleration
/// heuristic when the IDM demands harder braking than the heuristic deems
/// necessary.
pub fn eidm_accel(v: f64, gap: f64, dv: f64, lead_accel: f64, p: &EidmParams) -> Result<f64, NpcError> {
    let a_idm = idm_accel(v, gap, dv, p)?;
    if !gap.is_finite() {
        return Ok(a_idm);
    }
    let v_lead = v - dv;
    let a_tilde = lead_accel.min(p.a);
    let a_cah = if v_lead * dv <= -2.0 * gap * a_tilde {
        v * v * a_tilde / (v_lead * v_lead - 2.0 * gap * a_tilde)
    } else {
        let theta = if dv > 0.0 { 1.0 } else { 0.0 };
        a_tilde - theta * dv * dv / (2.0 * gap)
    };
    if a_idm >= a_cah {
        Ok(a_idm)
    } else {
        Ok((1.0 - p.c) * a_idm + p.c * (a_cah + p.b * ((a_idm - a_cah) / p.b).tanh()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params(v0: f64) -> EidmParams {
        EidmParams {
            c: 1.0,
            s0: 2.0,
            v0,
            t_headway: 1.0,
            a: 0.73,
            b: 1.67,
            delta_exp: 4.0,
        }
    }

    #[test]
    fn free_flow_at_desired_speed_is_zero() {
        let p = table_params(20.0);
        let a = idm_accel(20.0, f64::INFINITY, 0.0, &p).unwrap();
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn standstill_no_leader_full_acceleration() {
        let p = table_params(20.0);
        let a = idm_accel(0.0, f64::INFINITY, 0.0, &p).unwrap();
        assert_eq!(a, p.a);
    }

    #[test]
    fn idm_matches_single_line_oracle() {
        let p = table_params(20.0);
        let (v, gap, dv) = (15.0, 30.0, 0.0);
        // Independent one-line evaluation of the published formula.
        let ss = 2.0 + 15.0 * 1.0 + 0.0;
        let oracle = 0.73 * (1.0 - (15.0f64 / 20.0).powi(4) - (ss / 30.0) * (ss / 30.0));
        let got = idm_accel(v, gap, dv, &p).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn contact_is_an_error() {
        let p = table_params(20.0);
        assert!(matches!(idm_accel(10.0, 0.0, 0.0, &p), Err(NpcError::Contact { .. })));
        assert!(matches!(idm_accel(10.0, -1.0, 0.0, &p), Err(NpcError::Contact { .. })));
    }

    #[test]
    fn eidm_equals_idm_when_idm_dominates() {
        let p = table_params(20.0);
        // Opening gap, slow approach: IDM mild, heuristic not binding.
        let idm = idm_accel(15.0, 50.0, -2.0, &p).unwrap();
        let eidm = eidm_accel(15.0, 50.0, -2.0, 0.0, &p).unwrap();
        assert_eq!(idm, eidm);
    }

    #[test]
    fn zero_coolness_disables_the_heuristic_blend() {
        let mut p = table_params(20.0);
        p.c = 0.0;
        let (v, gap, dv, la) = (20.0, 8.0, 6.0, -4.0);
        let idm = idm_accel(v, gap, dv, &p).unwrap();
        let eidm = eidm_accel(v, gap, dv, la, &p).unwrap();
        // With c = 0 the blend reduces to tanh-regularized IDM around a_CAH;
        // the published form keeps exactly a_IDM in the (1-c) term.
        assert!((eidm - idm).abs() < 1e-12 || eidm >= idm);
    }

    #[test]
    fn braking_lead_blend_matches_oracle_and_relaxes_idm() {
        let p = table_params(20.0);
        // Ego 20 m/s, leader 12 m/s decelerating at -1 m/s^2, gap 15 m.
        let (v, gap, dv, la): (f64, f64, f64, f64) = (20.0, 15.0, 8.0, -1.0);
        let idm = idm_accel(v, gap, dv, &p).unwrap();

        // Independent evaluation of the published blend.
        let v_lead: f64 = 12.0;
        let a_tilde = la.min(p.a);
        let a_cah = if v_lead * dv <= -2.0 * gap * a_tilde {
            v * v * a_tilde / (v_lead * v_lead - 2.0 * gap * a_tilde)
        } else {
            a_tilde - dv * dv / (2.0 * gap)
        };
        assert!(idm < a_cah, "test intends the blending branch");
        let oracle = (1.0 - p.c) * idm + p.c * (a_cah + p.b * ((idm - a_cah) / p.b).tanh());

        let eidm = eidm_accel(v, gap, dv, la, &p).unwrap();
        assert!((eidm - oracle).abs() < 1e-12, "{eidm} vs {oracle}");
        assert!(eidm >= idm, "heuristic must relax the sudden deceleration");
    }

    #[test]
    fn eidm_never_brakes_harder_than_idm_in_blend_branch() {
        let p = table_params(25.0);
        // Sweep of closing situations.
        for &gap in &[5.0, 10.0, 20.0, 40.0] {
            for &dv in &[1.0, 4.0, 8.0] {
                for &la in &[-6.0, -3.0, 0.0, 1.0] {
                    let v = 20.0;
                    let idm = idm_accel(v, gap, dv, &p).unwrap();
                    let eidm = eidm_accel(v, gap, dv, la, &p).unwrap();
                    assert!(
                        eidm >= idm - 1e-12,
                        "gap={gap} dv={dv} la={la}: eidm {eidm} < idm {idm}"
                    );
                }
            }
        }
    }

    /// Closed-loop: follower settles to the analytic equilibrium gap behind
    /// a steady leader.
    #[test]
    fn follower_converges_to_equilibrium_gap() {
        let p = table_params(20.0);
        let dt = 0.05;
        let lead_v = 15.0;
        let mut lead_s = 100.0;
        let mut s = 50.0;
        let mut v = 15.0;
        for _ in 0..(120.0 / dt) as usize {
            let gap = lead_s - s;
            let acc = eidm_accel(v, gap, v - lead_v, 0.0, &p).unwrap();
            s += dt * v;
            v = (v + dt * acc).max(0.0);
            lead_s += dt * lead_v;
        }
        let gap = lead_s - s;
        let target = equilibrium_gap(15.0, &p);
        assert!(
            (gap - target).abs() / target < 0.02,
            "gap {gap} vs equilibrium {target}"
        );
    }

    /// Leader brakes from 20 m/s to a stop at -4 m/s^2; the follower must
    /// never overlap it.
    #[test]
    fn hard_braking_leader_without_contact() {
        let p = table_params(20.0);
        let dt = 0.05;
        let mut lead_s = 0.0;
        let mut lead_v: f64 = 20.0;
        let mut s = -equilibrium_gap(20.0, &p);
        let mut v: f64 = 20.0;
        let mut lead_a = 0.0;
        for step in 0..(30.0 / dt) as usize {
            if step >= 20 {
                lead_a = if lead_v > 0.0 { -4.0 } else { 0.0 };
            }
            let gap = lead_s - s;
            assert!(gap > 0.0, "contact at step {step}");
            let acc = eidm_accel(v, gap, v - lead_v, lead_a, &p).unwrap();
            s += dt * v;
            v = (v + dt * acc).max(0.0);
            lead_s += dt * lead_v;
            lead_v = (lead_v + dt * lead_a).max(0.0);
        }
        assert!(lead_s - s > 0.0);
    }
}
