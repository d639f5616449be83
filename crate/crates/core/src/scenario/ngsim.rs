//! Trajectory-dataset ingestion (NGSIM-style tabular recordings) and the
//! random scene-selection procedure: pick a frame and an adjacent lane
//! pair, adopt the three most tightly spaced vehicles of one lane as the
//! platoon, set the reference speed to the fastest vehicle in the scene,
//! and hand everything else to the car-following model.

use super::{Provenance, Scenario, ScenarioError, VehicleKindSpec, VehicleSpec};
use crate::config::SimConfig;
use crate::geometry::{LaneId, RoadGeometry};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing required column \"{0}\"")]
    MissingColumn(&'static str),
    #[error("row {row}: cannot parse field \"{field}\": {value:?}")]
    BadField {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("file contains no data rows")]
    Empty,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajRecord {
    pub vehicle_id: u64,
    /// Longitudinal position [m].
    pub s: f64,
    /// Lateral position [m] in the recording's own frame.
    pub lateral: f64,
    pub speed: f64,
    pub lane: u64,
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryFrame {
    pub frame_id: u64,
    pub records: Vec<TrajRecord>,
}

const COLUMN_ALIASES: &[(&'static str, &[&str])] = &[
    ("vehicle_id", &["vehicle_id", "veh_id", "id"]),
    ("frame_id", &["frame_id", "frame"]),
    ("local_y", &["local_y", "longitudinal", "pos_y", "y"]),
    ("local_x", &["local_x", "lateral", "pos_x", "x"]),
    ("speed", &["v_vel", "speed", "velocity"]),
    ("lane", &["lane_id", "lane"]),
    ("length", &["v_length", "length", "len"]),
    ("width", &["v_width", "width", "wid"]),
];

/// Load a tabular trajectory file. The first line may declare units as
/// `# units=feet` (or `meters`, the default); positions, speeds and vehicle
/// dimensions are converted to SI on ingest.
pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryFrame>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let mut feet = false;
    let body = if let Some(first) = text.lines().next() {
        let decl = first.trim().to_ascii_lowercase();
        if decl.starts_with('#') && decl.contains("unit") {
            feet = decl.contains("feet") || decl.contains("ft");
            text.splitn(2, '\n').nth(1).unwrap_or("").to_string()
        } else {
            text.clone()
        }
    } else {
        return Err(IngestError::Empty);
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();

    let mut col = BTreeMap::new();
    for (field, aliases) in COLUMN_ALIASES {
        let idx = headers
            .iter()
            .position(|h| aliases.contains(&h.as_str()))
            .ok_or(IngestError::MissingColumn(field))?;
        col.insert(*field, idx);
    }

    let scale = if feet { 0.3048 } else { 1.0 };
    let mut frames: BTreeMap<u64, Vec<TrajRecord>> = BTreeMap::new();
    let mut rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        rows += 1;
        let get = |field: &'static str| -> Result<&str, IngestError> {
            record.get(col[field]).ok_or(IngestError::BadField {
                row: row_idx + 1,
                field,
                value: "<missing>".into(),
            })
        };
        let parse_f = |field: &'static str| -> Result<f64, IngestError> {
            let raw = get(field)?;
            raw.parse::<f64>().map_err(|_| IngestError::BadField {
                row: row_idx + 1,
                field,
                value: raw.to_string(),
            })
        };
        let parse_u = |field: &'static str| -> Result<u64, IngestError> {
            let raw = get(field)?;
            raw.parse::<f64>()
                .map(|v| v as u64)
                .map_err(|_| IngestError::BadField {
                    row: row_idx + 1,
                    field,
                    value: raw.to_string(),
                })
        };
        let rec = TrajRecord {
            vehicle_id: parse_u("vehicle_id")?,
            s: parse_f("local_y")? * scale,
            lateral: parse_f("local_x")? * scale,
            speed: parse_f("speed")? * scale,
            lane: parse_u("lane")?,
            length: parse_f("length")? * scale,
            width: parse_f("width")? * scale,
        };
        frames.entry(parse_u("frame_id")?).or_default().push(rec);
    }
    if rows == 0 {
        return Err(IngestError::Empty);
    }
    Ok(frames
        .into_iter()
        .map(|(frame_id, records)| TrajectoryFrame { frame_id, records })
        .collect())
}

/// Candidate platoon: three consecutive same-lane vehicles and their two
/// bumper gaps.
fn best_triple(lane_vehicles: &[TrajRecord], threshold: f64) -> Option<[TrajRecord; 3]> {
    if lane_vehicles.len() < 3 {
        return None;
    }
    let mut sorted = lane_vehicles.to_vec();
    // Front-most first.
    sorted.sort_by(|a, b| b.s.partial_cmp(&a.s).unwrap());
    let mut best: Option<(f64, f64, [TrajRecord; 3])> = None;
    for w in sorted.windows(3) {
        let g1 = w[0].s - w[1].s - (w[0].length + w[1].length) / 2.0;
        let g2 = w[1].s - w[2].s - (w[1].length + w[2].length) / 2.0;
        if g1 <= 0.0 || g2 <= 0.0 {
            continue; // recording artifact: overlapping footprints
        }
        if g1 < threshold && g2 < threshold {
            let sum = g1 + g2;
            let front = w[0].s;
            let better = match &best {
                None => true,
                // Tie on the gap sum: lowest front-most position wins.
                Some((bsum, bfront, _)) => sum < *bsum || (sum == *bsum && front < *bfront),
            };
            if better {
                best = Some((sum, front, [w[0], w[1], w[2]]));
            }
        }
    }
    best.map(|(_, _, t)| t)
}

/// Randomly select an initial frame and an adjacent lane pair until an
/// acceptable platoon is found; map the scene into the simulator's frame.
pub fn generate_scene(
    frames: &[TrajectoryFrame],
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
    file_label: &str,
    budget: usize,
) -> Result<Scenario, ScenarioError> {
    if frames.is_empty() {
        return Err(ScenarioError::Exhausted { attempts: 0 });
    }

    // Per-lane mean lateral position over the whole file, used to estimate
    // lane centerlines.
    let mut lane_sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for f in frames {
        for r in &f.records {
            let e = lane_sums.entry(r.lane).or_insert((0.0, 0));
            e.0 += r.lateral;
            e.1 += 1;
        }
    }
    let lane_center: BTreeMap<u64, f64> = lane_sums
        .into_iter()
        .map(|(l, (sum, n))| (l, sum / n as f64))
        .collect();

    for attempt in 0..budget {
        let frame = &frames[rng.gen_range(0..frames.len())];
        let mut lanes: Vec<u64> = frame.records.iter().map(|r| r.lane).collect();
        lanes.sort_unstable();
        lanes.dedup();
        let pairs: Vec<(u64, u64)> = lanes
            .windows(2)
            .filter(|w| w[1] == w[0] + 1)
            .map(|w| (w[0], w[1]))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let pair = pairs[rng.gen_range(0..pairs.len())];
        let (ol, tl) = if rng.gen::<bool>() {
            (pair.0, pair.1)
        } else {
            (pair.1, pair.0)
        };

        let ol_vehicles: Vec<TrajRecord> = frame
            .records
            .iter()
            .copied()
            .filter(|r| r.lane == ol)
            .collect();
        let tl_vehicles: Vec<TrajRecord> = frame
            .records
            .iter()
            .copied()
            .filter(|r| r.lane == tl)
            .collect();
        if tl_vehicles.is_empty() {
            continue;
        }
        let Some(triple) = best_triple(&ol_vehicles, cfg.gap_threshold) else {
            let _ = attempt;
            continue;
        };

        let v_ref = ol_vehicles
            .iter()
            .chain(tl_vehicles.iter())
            .map(|r| r.speed)
            .fold(0.0f64, f64::max);

        let ol_center = lane_center[&ol];
        let tl_center = lane_center[&tl];
        let map_e_y = |r: &TrajRecord, internal_lane: usize| -> f64 {
            let center = if internal_lane == 0 { ol_center } else { tl_center };
            let residual = (r.lateral - center).clamp(-0.5, 0.5);
            internal_lane as f64 * cfg.lane_width + residual
        };

        let triple_ids: Vec<u64> = triple.iter().map(|r| r.vehicle_id).collect();
        let mut vehicles: Vec<VehicleSpec> = Vec::new();
        for (pi, r) in triple.iter().enumerate() {
            vehicles.push(VehicleSpec {
                kind: VehicleKindSpec::Cav { platoon_index: pi },
                lane: 0,
                s: r.s,
                e_y: map_e_y(r, 0),
                e_psi: 0.0,
                v: r.speed.clamp(cfg.v_min, cfg.v_max),
                l_f: cfg.l_f,
                l_r: cfg.l_r,
                width: cfg.vehicle_width,
            });
        }
        for r in ol_vehicles.iter().filter(|r| !triple_ids.contains(&r.vehicle_id)) {
            vehicles.push(VehicleSpec {
                kind: VehicleKindSpec::Npc,
                lane: 0,
                s: r.s,
                e_y: map_e_y(r, 0),
                e_psi: 0.0,
                v: r.speed,
                l_f: r.length / 2.0,
                l_r: r.length / 2.0,
                width: r.width,
            });
        }
        for r in &tl_vehicles {
            vehicles.push(VehicleSpec {
                kind: VehicleKindSpec::Npc,
                lane: 1,
                s: r.s,
                e_y: map_e_y(r, 1),
                e_psi: 0.0,
                v: r.speed,
                l_f: r.length / 2.0,
                l_r: r.length / 2.0,
                width: r.width,
            });
        }

        let min_s = vehicles.iter().map(|v| v.s).fold(f64::INFINITY, f64::min);
        let max_s = vehicles.iter().map(|v| v.s).fold(f64::NEG_INFINITY, f64::max);
        let mut road = RoadGeometry::straight(2, cfg.lane_width, LaneId(0));
        road.s_range = (min_s - 300.0, max_s + 1500.0);

        return Ok(Scenario {
            road,
            original_lane: 0,
            target_lane: 1,
            v_ref,
            provenance: Provenance::Ngsim {
                file: file_label.to_string(),
                frame: frame.frame_id,
                lanes: (ol, tl),
            },
            vehicles,
        });
    }
    Err(ScenarioError::Exhausted { attempts: budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use std::io::Write;

    fn write_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn well_formed_two_frames() {
        let f = write_file(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n\
             1,10,1.9,100.0,15.0,1,4.5,2.0\n\
             2,10,1.9,90.0,14.0,1,4.5,2.0\n\
             3,10,5.7,95.0,13.0,2,4.5,2.0\n\
             1,11,1.9,101.5,15.0,1,4.5,2.0\n\
             2,11,1.9,91.4,14.0,1,4.5,2.0\n\
             3,11,5.7,96.3,13.0,2,4.5,2.0\n",
        );
        let frames = load_trajectories(f.path()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].records.len(), 3);
        assert_eq!(frames[0].frame_id, 10);
    }

    #[test]
    fn feet_unit_flag_converts() {
        let f = write_file(
            "# units=feet\n\
             Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n\
             1,1,6.0,328.084,49.2126,1,14.764,6.562\n",
        );
        let frames = load_trajectories(f.path()).unwrap();
        let r = frames[0].records[0];
        // Hand-computed: 328.084 ft = 100.0 m, 49.2126 ft/s = 15.0 m/s.
        assert!((r.s - 100.0).abs() < 1e-3);
        assert!((r.speed - 15.0).abs() < 1e-3);
        assert!((r.length - 4.5).abs() < 1e-3);
    }

    #[test]
    fn missing_lane_column_is_named() {
        let f = write_file(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,v_Length,v_Width\n\
             1,1,1.9,100.0,15.0,4.5,2.0\n",
        );
        match load_trajectories(f.path()) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "lane"),
            other => panic!("expected missing-column error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_row_is_located() {
        let f = write_file(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n\
             1,1,1.9,abc,15.0,1,4.5,2.0\n",
        );
        match load_trajectories(f.path()) {
            Err(IngestError::BadField { row, field, value }) => {
                assert_eq!(row, 1);
                assert_eq!(field, "local_y");
                assert_eq!(value, "abc");
            }
            other => panic!("expected bad-field error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_file("Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n");
        assert!(matches!(load_trajectories(f.path()), Err(IngestError::Empty)));
    }

    fn dense_frame_csv() -> String {
        // Lane 1: a tight triple (gaps 8 and 7 m bumper) plus spread traffic.
        // Lane 2: a queue. Max speed 17.3 m/s.
        let mut rows = String::from(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n",
        );
        let lane1 = [
            (1u64, 200.0, 13.0),
            (2, 187.5, 13.5), // gap to 1: 12.5 - 4.5 = 8.0
            (3, 176.0, 13.2), // gap to 2: 11.5 - 4.5 = 7.0
            (4, 120.0, 14.0),
        ];
        for (id, y, v) in lane1 {
            rows.push_str(&format!("{id},50,1.9,{y},{v},1,4.5,2.0\n"));
        }
        let lane2 = [
            (11u64, 210.0, 17.3),
            (12, 190.0, 13.0),
            (13, 170.0, 12.5),
            (14, 150.0, 13.8),
        ];
        for (id, y, v) in lane2 {
            rows.push_str(&format!("{id},50,5.7,{y},{v},2,4.5,2.0\n"));
        }
        rows
    }

    #[test]
    fn scene_selection_adopts_tightest_triple_and_scene_max_speed() {
        let f = write_file(&dense_frame_csv());
        let frames = load_trajectories(f.path()).unwrap();
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sc = generate_scene(&frames, &mut rng, &cfg, "test", 200).unwrap();
        assert_eq!(sc.platoon_size(), 3);
        assert!((sc.v_ref - 17.3).abs() < 1e-9);
        // The platoon must be vehicles 1,2,3 (gaps 8 and 7 < 9) regardless
        // of which lane was drawn as the original lane.
        let mut cav_s: Vec<f64> = sc
            .vehicles
            .iter()
            .filter(|v| matches!(v.kind, VehicleKindSpec::Cav { .. }))
            .map(|v| v.s)
            .collect();
        cav_s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(cav_s, vec![200.0, 187.5, 176.0]);
    }

    #[test]
    fn exhaustion_when_gaps_exceed_threshold() {
        let f = write_file(
            "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID,v_Length,v_Width\n\
             1,1,1.9,200.0,15.0,1,4.5,2.0\n\
             2,1,1.9,180.0,15.0,1,4.5,2.0\n\
             3,1,1.9,160.0,15.0,1,4.5,2.0\n\
             4,1,5.7,170.0,15.0,2,4.5,2.0\n",
        );
        let frames = load_trajectories(f.path()).unwrap();
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match generate_scene(&frames, &mut rng, &cfg, "test", 50) {
            Err(ScenarioError::Exhausted { attempts }) => assert_eq!(attempts, 50),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }
}
