use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::model::FootGeometry;

/// Box-shaped raised region added to the ground height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFeature {
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "neg_inf")]
    pub y_min: f64,
    #[serde(default = "pos_inf")]
    pub y_max: f64,
    pub height: f64,
}

/// Ramp rising along +x from `x_start` to `x_end`, level beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeFeature {
    pub x_start: f64,
    pub x_end: f64,
    #[serde(default = "neg_inf")]
    pub y_min: f64,
    #[serde(default = "pos_inf")]
    pub y_max: f64,
    pub angle_deg: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// Bounds on feature size accepted by [`TerrainMap::validate`].
pub const MAX_FEATURE_HEIGHT: f64 = 0.1;
pub const MAX_SLOPE_DEG: f64 = 15.0;

/// Flat ground at z = 0 plus additive features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainMap {
    pub steps: Vec<StepFeature>,
    pub slopes: Vec<SlopeFeature>,
}

impl TerrainMap {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn with_step(mut self, step: StepFeature) -> Self {
        self.steps.push(step);
        self
    }

    pub fn with_slope(mut self, slope: SlopeFeature) -> Self {
        self.slopes.push(slope);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.x_min < s.x_max && s.y_min < s.y_max) {
                return Err(format!("terrain step {i} has an empty region"));
            }
            if !(s.height.abs() <= MAX_FEATURE_HEIGHT) {
                return Err(format!(
                    "terrain step {i} height {} exceeds {MAX_FEATURE_HEIGHT} m",
                    s.height
                ));
            }
        }
        for (i, s) in self.slopes.iter().enumerate() {
            if !(s.x_start < s.x_end && s.y_min < s.y_max) {
                return Err(format!("terrain slope {i} has an empty region"));
            }
            if !(s.angle_deg.abs() <= MAX_SLOPE_DEG) {
                return Err(format!(
                    "terrain slope {i} angle {} exceeds {MAX_SLOPE_DEG} deg",
                    s.angle_deg
                ));
            }
        }
        Ok(())
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let mut z = 0.0;
        for s in &self.steps {
            if x >= s.x_min && x <= s.x_max && y >= s.y_min && y <= s.y_max {
                z += s.height;
            }
        }
        for s in &self.slopes {
            if y >= s.y_min && y <= s.y_max && x > s.x_start {
                z += (x.min(s.x_end) - s.x_start) * s.angle_deg.to_radians().tan();
            }
        }
        z
    }

    /// Points on the sole checked for contact: outline corners, probe tips
    /// and the sole centre, in the sole frame.
    pub fn contact_points(foot: &FootGeometry) -> Vec<Vector3<f64>> {
        let mut pts: Vec<Vector3<f64>> = foot
            .outline()
            .iter()
            .chain(foot.probe_offsets.iter())
            .map(|p| Vector3::new(p.x, p.y, 0.0))
            .collect();
        pts.push(Vector3::zeros());
        pts
    }

    /// Smallest vertical gap between the sole contact points and the ground.
    pub fn min_gap(&self, sole: &Pose, foot: &FootGeometry) -> f64 {
        Self::contact_points(foot)
            .iter()
            .map(|p| {
                let w = sole.transform_point(p);
                w.z - self.height(w.x, w.y)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Sole resting on the ground at the horizontal position and heading of
    /// `sole`: attitude from a plane fitted under the outline corners, then
    /// lifted until no contact point is below the surface.
    pub fn conform(&self, sole: &Pose, foot: &FootGeometry) -> Pose {
        let yaw = sole.yaw();
        let (s, c) = yaw.sin_cos();
        let centre = sole.position;
        let (hx, hy) = (foot.length_x / 2.0, foot.width_y / 2.0);
        let at = |u: f64, v: f64| {
            let x = centre.x + c * u - s * v;
            let y = centre.y + s * u + c * v;
            self.height(x, y)
        };
        let (fl, rl, rr, fr) = (at(hx, hy), at(-hx, hy), at(-hx, -hy), at(hx, -hy));
        let z0 = (fl + rl + rr + fr) / 4.0;
        // slopes along the heading (u) and across it (v)
        let gu = ((fl + fr) - (rl + rr)) / (4.0 * hx);
        let gv = ((fl + rl) - (fr + rr)) / (4.0 * hy);
        let norm = (1.0 + gu * gu + gv * gv).sqrt();
        let roll = (gv / norm).asin();
        let pitch = (-gu).atan2(1.0);
        let mut pose = Pose::from_xyz_rpy(centre.x, centre.y, z0, roll, pitch, yaw);
        let gap = self.min_gap(&pose, foot);
        pose.position.z -= gap;
        pose
    }
}
