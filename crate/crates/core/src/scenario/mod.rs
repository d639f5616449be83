//! Scenario construction: hand-crafted demonstration scenes, a synthetic
//! dense-traffic generator, and trajectory-dataset ingestion with the
//! random scene-selection procedure. Scenarios serialize to human-readable
//! TOML documents.

pub mod ngsim;
pub mod synth;

use crate::config::SimConfig;
use crate::geometry::RoadGeometry;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("scenario must contain exactly {expected} platoon vehicles, found {found}")]
    PlatoonSize { expected: usize, found: usize },
    #[error("no acceptable scene found within {attempts} attempts")]
    Exhausted { attempts: usize },
    #[error("infeasible generator parameters: {0}")]
    BadParameters(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VehicleKindSpec {
    Cav { platoon_index: usize },
    Npc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VehicleSpec {
    #[serde(flatten)]
    pub kind: VehicleKindSpec,
    pub lane: usize,
    pub s: f64,
    pub e_y: f64,
    pub e_psi: f64,
    pub v: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Crafted { name: String },
    Synthetic { seed: u64 },
    Ngsim { file: String, frame: u64, lanes: (u64, u64) },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub road: RoadGeometry,
    pub original_lane: usize,
    pub target_lane: usize,
    pub v_ref: f64,
    pub provenance: Provenance,
    pub vehicles: Vec<VehicleSpec>,
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_toml_file(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ScenarioError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })
    }

    pub fn write_toml_file(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn platoon_size(&self) -> usize {
        self.vehicles
            .iter()
            .filter(|v| matches!(v.kind, VehicleKindSpec::Cav { .. }))
            .count()
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<(), ScenarioError> {
        let found = self.platoon_size();
        if found != cfg.platoon_size {
            return Err(ScenarioError::PlatoonSize {
                expected: cfg.platoon_size,
                found,
            });
        }
        Ok(())
    }
}

fn cav(cfg: &SimConfig, platoon_index: usize, lane: usize, s: f64, v: f64) -> VehicleSpec {
    VehicleSpec {
        kind: VehicleKindSpec::Cav { platoon_index },
        lane,
        s,
        e_y: 0.0,
        e_psi: 0.0,
        v,
        l_f: cfg.l_f,
        l_r: cfg.l_r,
        width: cfg.vehicle_width,
    }
}

fn npc(cfg: &SimConfig, lane: usize, lane_offset: f64, s: f64, v: f64) -> VehicleSpec {
    VehicleSpec {
        kind: VehicleKindSpec::Npc,
        lane,
        s,
        e_y: lane_offset,
        e_psi: 0.0,
        v,
        l_f: cfg.l_f,
        l_r: cfg.l_r,
        width: cfg.vehicle_width,
    }
}

/// Names of the built-in crafted scenarios.
pub fn demo_names() -> Vec<&'static str> {
    vec!["facilitator_demo", "unobstructed", "blocked"]
}

pub fn demo_scenario(name: &str, cfg: &SimConfig) -> Option<Scenario> {
    match name {
        "facilitator_demo" => Some(facilitator_demo(cfg)),
        "unobstructed" => Some(unobstructed(cfg)),
        "blocked" => Some(blocked(cfg)),
        _ => None,
    }
}

/// The staged maneuver scene: a platoon of three in the original lane, a
/// dense target-lane queue with exactly one vehicle-sized hole adjacent to
/// the platoon leader. The simultaneous strategy can never fit all three
/// vehicles; the facilitator-led strategy takes the hole, opens space, and
/// pulls the platoon across.
pub fn facilitator_demo(cfg: &SimConfig) -> Scenario {
    let road = RoadGeometry::straight(2, cfg.lane_width, crate::geometry::LaneId(0));
    let tl = cfg.lane_width;
    let v_slow = 14.0;
    let v_ref = 14.5;
    let mut vehicles = vec![
        cav(cfg, 0, 0, 60.0, 13.0),
        cav(cfg, 1, 0, 52.0, 13.0),
        cav(cfg, 2, 0, 44.0, 13.0),
        // Original-lane leader, far ahead.
        npc(cfg, 0, 0.0, 130.0, v_ref),
    ];
    // Target-lane queue: tight strides everywhere except one hole at the
    // facilitator's position (70 ahead of 50 leaves one slot).
    let mut s = 70.0;
    for _ in 0..9 {
        vehicles.push(npc(cfg, 1, tl, s, v_slow));
        s += 20.0;
    }
    let mut s = 50.0;
    for _ in 0..8 {
        vehicles.push(npc(cfg, 1, tl, s, v_slow));
        s -= 20.0;
    }
    Scenario {
        road,
        original_lane: 0,
        target_lane: 1,
        v_ref,
        provenance: Provenance::Crafted {
            name: "facilitator_demo".into(),
        },
        vehicles,
    }
}

/// Empty target lane: both strategies succeed immediately.
pub fn unobstructed(cfg: &SimConfig) -> Scenario {
    let road = RoadGeometry::straight(2, cfg.lane_width, crate::geometry::LaneId(0));
    let v = 15.0;
    let vehicles = vec![
        cav(cfg, 0, 0, 60.0, v),
        cav(cfg, 1, 0, 52.0, v),
        cav(cfg, 2, 0, 44.0, v),
        npc(cfg, 0, 0.0, 160.0, v),
    ];
    Scenario {
        road,
        original_lane: 0,
        target_lane: 1,
        v_ref: v,
        provenance: Provenance::Crafted {
            name: "unobstructed".into(),
        },
        vehicles,
    }
}

/// Uniformly packed target lane: no vehicle can enter under either strategy.
pub fn blocked(cfg: &SimConfig) -> Scenario {
    let road = RoadGeometry::straight(2, cfg.lane_width, crate::geometry::LaneId(0));
    let tl = cfg.lane_width;
    let v_slow = 13.0;
    let v_ref = 14.0;
    let mut vehicles = vec![
        cav(cfg, 0, 0, 60.0, 13.0),
        cav(cfg, 1, 0, 52.0, 13.0),
        cav(cfg, 2, 0, 44.0, 13.0),
        npc(cfg, 0, 0.0, 140.0, v_ref),
    ];
    let mut s = -120.0;
    while s < 260.0 {
        vehicles.push(npc(cfg, 1, tl, s, v_slow));
        s += 13.0;
    }
    Scenario {
        road,
        original_lane: 0,
        target_lane: 1,
        v_ref,
        provenance: Provenance::Crafted {
            name: "blocked".into(),
        },
        vehicles,
    }
}
