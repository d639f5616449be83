//! Road model: lane layout and a piecewise-constant curvature profile along
//! the arc length of the reference centerline. A single Frenet frame anchored
//! to the reference lane is shared by all vehicles; other lanes are reached
//! by lateral offsets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("arc length {s} outside road range [{lo}, {hi}]")]
    OutOfRange { s: f64, lo: f64, hi: f64 },
    #[error("lane index {index} out of range (lane count {count})")]
    InvalidLane { index: usize, count: usize },
}

/// Lane index, 0-based; higher indices lie at positive lateral offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneId(pub usize);

/// One stretch of constant curvature: applies for `s in [start, end)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvatureSegment {
    pub start: f64,
    pub end: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Lane whose centerline anchors the Frenet frame.
    pub reference_lane: LaneId,
    /// Simulated arc-length range.
    pub s_range: (f64, f64),
    /// Sorted, non-overlapping; gaps default to zero curvature.
    pub curvature: Vec<CurvatureSegment>,
}

impl RoadGeometry {
    /// Straight road over a generous arc-length range.
    pub fn straight(lane_count: usize, lane_width: f64, reference_lane: LaneId) -> Self {
        RoadGeometry {
            lane_count,
            lane_width,
            reference_lane,
            s_range: (-1e4, 1e4),
            curvature: Vec::new(),
        }
    }

    pub fn curvature_at(&self, s: f64) -> Result<f64, GeometryError> {
        let (lo, hi) = self.s_range;
        if s < lo || s > hi {
            return Err(GeometryError::OutOfRange { s, lo, hi });
        }
        for seg in &self.curvature {
            if s >= seg.start && s < seg.end {
                return Ok(seg.kappa);
            }
        }
        Ok(0.0)
    }

    /// Signed offset of a lane's centerline from the reference centerline.
    pub fn lane_offset(&self, lane: LaneId) -> Result<f64, GeometryError> {
        if lane.0 >= self.lane_count {
            return Err(GeometryError::InvalidLane {
                index: lane.0,
                count: self.lane_count,
            });
        }
        Ok((lane.0 as f64 - self.reference_lane.0 as f64) * self.lane_width)
    }

    /// Lane whose centerline is nearest to the given lateral offset.
    pub fn nearest_lane(&self, e_y: f64) -> LaneId {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for i in 0..self.lane_count {
            let c = (i as f64 - self.reference_lane.0 as f64) * self.lane_width;
            let d = (e_y - c).abs();
            if d < best_dist {
                best_dist = d;
                best = i;
            }
        }
        LaneId(best)
    }

    /// Road-boundary half width used by the planner's state set.
    pub fn boundary_half_width(&self, vehicle_width: f64) -> f64 {
        (self.lane_count as f64 - 0.5) * self.lane_width - vehicle_width / 2.0
    }
}
