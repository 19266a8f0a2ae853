//! Four corner probes under the sole and their aggregation into an average
//! ground distance and the sole's pitch and roll relative to the ground.
//!
//! Corners are labelled A front-left, B rear-left, C rear-right, D
//! front-right. Distances are vertical (world z) gaps between each probe tip
//! and the terrain beneath it; beyond `sensor_range` a probe saturates.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose;
use crate::model::{Corner, FootGeometry};
use crate::sim::TerrainMap;

/// Penetration tolerated before a reading is rejected, m.
pub const PENETRATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    /// Per corner A, B, C, D, m.
    pub distance: [f64; 4],
    pub in_range: [bool; 4],
    pub timestamp: f64,
}

impl ProbeReading {
    /// A reading built from raw gaps, saturating at `range`.
    pub fn from_gaps(gaps: [f64; 4], range: f64, timestamp: f64) -> Self {
        let in_range = gaps.map(|g| g <= range);
        let distance = gaps.map(|g| g.min(range));
        Self {
            distance,
            in_range,
            timestamp,
        }
    }

    pub fn get(&self, c: Corner) -> f64 {
        self.distance[c as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFeedback {
    pub d_avg: f64,
    /// Relative pitch, positive when the toe is closer to the ground.
    pub phi_avg: f64,
    /// Relative roll, positive when the right edge is closer to the ground.
    pub alpha_avg: f64,
    pub all_in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("probe {corner:?} is {depth:.4} m below the terrain surface")]
    ContactViolation { corner: Corner, depth: f64 },
}

/// World position of one probe tip.
pub fn probe_tip(sole: &Pose, foot: &FootGeometry, c: Corner) -> Vector3<f64> {
    let p = foot.probe(c);
    sole.transform_point(&Vector3::new(p.x, p.y, 0.0))
}

pub fn read_probes(
    sole: &Pose,
    terrain: &TerrainMap,
    foot: &FootGeometry,
    timestamp: f64,
) -> Result<ProbeReading, SensorError> {
    let mut gaps = [0.0; 4];
    for c in Corner::ALL {
        let tip = probe_tip(sole, foot, c);
        let gap = tip.z - terrain.height(tip.x, tip.y);
        if gap < -PENETRATION_TOLERANCE {
            return Err(SensorError::ContactViolation {
                corner: c,
                depth: -gap,
            });
        }
        gaps[c as usize] = gap.max(0.0);
    }
    Ok(ProbeReading::from_gaps(gaps, foot.sensor_range, timestamp))
}

/// Average distance and relative angles. For a rigid plane under a rigid
/// sole the angles are exact: the front/rear difference of vertical gaps is
/// `span_x · sin(pitch)`, the left/right difference `span_y · cos(pitch) ·
/// sin(roll)`.
pub fn aggregate(r: &ProbeReading, foot: &FootGeometry) -> SensorFeedback {
    let [a, b, c, d] = r.distance;
    let d_avg = (a + b + c + d) / 4.0;
    let rear_minus_front = (b + c) / 2.0 - (a + d) / 2.0;
    let phi_avg = (rear_minus_front / foot.probe_span_x())
        .clamp(-1.0, 1.0)
        .asin();
    let left_minus_right = (a + b) / 2.0 - (c + d) / 2.0;
    let alpha_avg = (left_minus_right / (foot.probe_span_y() * phi_avg.cos()))
        .clamp(-1.0, 1.0)
        .asin();
    SensorFeedback {
        d_avg,
        phi_avg,
        alpha_avg,
        all_in_range: r.in_range.iter().all(|v| *v),
    }
}

/// Adds zero-mean uniform noise of half-width `amplitude` to each probe and
/// re-applies saturation.
pub fn add_noise<R: Rng>(
    r: &ProbeReading,
    range: f64,
    amplitude: f64,
    rng: &mut R,
) -> ProbeReading {
    if amplitude <= 0.0 {
        return *r;
    }
    let mut gaps = r.distance;
    for (g, ok) in gaps.iter_mut().zip(r.in_range) {
        if ok {
            *g = (*g + rng.random_range(-amplitude..=amplitude)).max(0.0);
        } else {
            *g = range + 1.0;
        }
    }
    ProbeReading::from_gaps(gaps, range, r.timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;

    fn flat() -> TerrainMap {
        TerrainMap::flat()
    }

    #[test]
    fn level_sole_one_centimetre_up() {
        let m = default_model();
        let sole = Pose::from_xyz_rpy(0.3, -0.1, 0.01, 0.0, 0.0, 0.2);
        let r = read_probes(&sole, &flat(), &m.foot, 0.0).unwrap();
        for d in r.distance {
            assert!((d - 0.01).abs() < 1e-15);
        }
        assert!(r.in_range.iter().all(|v| *v));
    }

    #[test]
    fn saturates_out_of_range() {
        let m = default_model();
        let sole = Pose::from_xyz_rpy(0.0, 0.0, 0.03, 0.0, 0.0, 0.0);
        let r = read_probes(&sole, &flat(), &m.foot, 0.0).unwrap();
        assert_eq!(r.distance, [0.015; 4]);
        assert_eq!(r.in_range, [false; 4]);
    }

    #[test]
    fn pitched_sole_front_rear_difference() {
        let m = default_model();
        let th = 1f64.to_radians();
        let sole = Pose::from_xyz_rpy(0.0, 0.0, 0.01, 0.0, th, 0.0);
        let r = read_probes(&sole, &flat(), &m.foot, 0.0).unwrap();
        let diff = r.get(Corner::B) - r.get(Corner::A);
        // vertical offset of probes at ±L/2 along a pitched sole
        let want = m.foot.probe_span_x() * th.sin();
        assert!((diff - want).abs() < 1e-15);
        let tan_form = m.foot.probe_span_x() * th.tan();
        assert!((diff - tan_form).abs() < 1e-5);
    }

    #[test]
    fn hand_substitution() {
        let m = default_model();
        let r = ProbeReading::from_gaps([0.008, 0.012, 0.012, 0.008], 0.015, 0.0);
        let f = aggregate(&r, &m.foot);
        assert!((f.d_avg - 0.010).abs() < 1e-16);
        assert!((f.phi_avg - (0.004f64 / 0.22).asin()).abs() < 1e-15);
        assert_eq!(f.alpha_avg, 0.0);
    }

    #[test]
    fn interpenetration_is_rejected() {
        let m = default_model();
        let sole = Pose::from_xyz_rpy(0.0, 0.0, -0.002, 0.0, 0.0, 0.0);
        assert!(matches!(
            read_probes(&sole, &flat(), &m.foot, 0.0),
            Err(SensorError::ContactViolation { .. })
        ));
    }
}
