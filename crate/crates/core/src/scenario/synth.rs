//! Seeded synthetic dense-traffic scenes for dataset-free evaluation: a
//! three-vehicle platoon in the original lane, randomized queues in both
//! lanes, occasional holes in the target lane that may or may not admit a
//! lane change.

use super::{cav, npc, Provenance, Scenario, ScenarioError};
use crate::config::SimConfig;
use crate::geometry::{LaneId, RoadGeometry};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SynthParams {
    /// Vehicles in the target-lane queue.
    pub tl_count: usize,
    /// Vehicles ahead of the platoon in the original lane.
    pub ol_lead_count: usize,
    /// Initial speed range [m/s] for queue traffic.
    pub speed_range: (f64, f64),
    /// Bumper-gap range [m] in the dense target-lane queue.
    pub tl_gap_range: (f64, f64),
    /// Number of enlarged holes punched into the target-lane queue.
    pub hole_count_max: usize,
    /// Bumper-gap range [m] of a hole.
    pub hole_gap_range: (f64, f64),
    /// Bumper-gap range [m] between platoon vehicles (below the selection
    /// threshold).
    pub platoon_gap_range: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            tl_count: 14,
            ol_lead_count: 2,
            speed_range: (12.5, 15.5),
            tl_gap_range: (4.0, 12.0),
            hole_count_max: 2,
            hole_gap_range: (14.0, 40.0),
            platoon_gap_range: (3.0, 4.4),
        }
    }
}

/// Generate one dense two-lane scene. The same seed yields the same scene.
pub fn synth_scene(seed: u64, params: &SynthParams, cfg: &SimConfig) -> Result<Scenario, ScenarioError> {
    if params.tl_gap_range.0 <= 0.0 || params.platoon_gap_range.0 <= 0.0 {
        return Err(ScenarioError::BadParameters(
            "gap ranges must be positive (no initial overlap)".into(),
        ));
    }
    if params.platoon_gap_range.1 + cfg.l_f + cfg.l_r >= cfg.gap_threshold + cfg.l_f + cfg.l_r {
        // platoon gaps are bumper gaps; they must stay below the threshold
        if params.platoon_gap_range.1 >= cfg.gap_threshold {
            return Err(ScenarioError::BadParameters(format!(
                "platoon gaps must stay below the {} m threshold",
                cfg.gap_threshold
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road = RoadGeometry::straight(2, cfg.lane_width, LaneId(0));
    let tl_off = cfg.lane_width;
    let car_len = cfg.l_f + cfg.l_r;

    let mut vehicles = Vec::new();
    let mut max_v: f64 = 0.0;
    let rand_speed = |rng: &mut ChaCha8Rng| {
        let (lo, hi) = params.speed_range;
        lo + (hi - lo) * rng.gen::<f64>()
    };

    // Platoon around s = 60, front-most first.
    let platoon_v = rand_speed(&mut rng);
    max_v = max_v.max(platoon_v);
    let mut s = 60.0;
    for i in 0..cfg.platoon_size {
        vehicles.push(cav(cfg, i, 0, s, platoon_v));
        let (lo, hi) = params.platoon_gap_range;
        let gap = lo + (hi - lo) * rng.gen::<f64>();
        s -= gap + car_len;
    }

    // Original-lane leaders.
    let mut s = 60.0 + 40.0 + 30.0 * rng.gen::<f64>();
    for _ in 0..params.ol_lead_count {
        let v = rand_speed(&mut rng);
        max_v = max_v.max(v);
        vehicles.push(npc(cfg, 0, 0.0, s, v));
        s += 30.0 + 40.0 * rng.gen::<f64>();
    }

    // Target-lane queue: start ahead of the platoon and walk backwards,
    // punching up to `hole_count_max` enlarged gaps at random queue slots.
    let hole_count = rng.gen_range(0..=params.hole_count_max);
    let mut hole_slots: Vec<usize> = (0..hole_count)
        .map(|_| rng.gen_range(0..params.tl_count.max(1)))
        .collect();
    hole_slots.sort_unstable();
    hole_slots.dedup();
    let mut s = 60.0 + 15.0 + 25.0 * rng.gen::<f64>();
    for slot in 0..params.tl_count {
        let v = rand_speed(&mut rng);
        max_v = max_v.max(v);
        vehicles.push(npc(cfg, 1, tl_off, s, v));
        let (lo, hi) = if hole_slots.contains(&slot) {
            params.hole_gap_range
        } else {
            params.tl_gap_range
        };
        let gap = lo + (hi - lo) * rng.gen::<f64>();
        s -= gap + car_len;
    }

    Ok(Scenario {
        road,
        original_lane: 0,
        target_lane: 1,
        v_ref: max_v,
        provenance: Provenance::Synthetic { seed },
        vehicles,
    })
}
