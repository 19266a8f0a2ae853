use serde::{Deserialize, Serialize};

use crate::kinematics::{Pose, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeflectionMode {
    Off,
    Constant,
    LoadProportional,
}

/// Structural deflection and joint play of the swing leg, split into a
/// height sag and pitch/roll offsets. The three gains partition the tip
/// error: sag `z_sag_gain·E`, and arc lengths `pitch_gain·E` and
/// `roll_gain·E` at the leg tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeflectionModel {
    pub mode: DeflectionMode,
    /// Largest tip error, m.
    pub tip_error_max: f64,
    pub z_sag_gain: f64,
    pub pitch_gain: f64,
    pub roll_gain: f64,
}

impl Default for DeflectionModel {
    fn default() -> Self {
        Self {
            mode: DeflectionMode::Off,
            tip_error_max: 0.07,
            z_sag_gain: 0.5,
            pitch_gain: 0.3,
            roll_gain: 0.2,
        }
    }
}

impl DeflectionModel {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn constant(tip_error: f64) -> Self {
        Self {
            mode: DeflectionMode::Constant,
            tip_error_max: tip_error,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tip_error_max >= 0.0 && self.tip_error_max.is_finite()) {
            return Err("deflection tip_error_max must be non-negative".into());
        }
        let gains = [self.z_sag_gain, self.pitch_gain, self.roll_gain];
        if gains.iter().any(|g| !(*g >= 0.0)) {
            return Err("deflection gains must be non-negative".into());
        }
        if (gains.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("deflection gains must sum to 1".into());
        }
        Ok(())
    }

    /// Tip error for a swing with the given normalised extension in [0, 1].
    pub fn tip_error(&self, extension: f64) -> f64 {
        match self.mode {
            DeflectionMode::Off => 0.0,
            DeflectionMode::Constant => self.tip_error_max,
            DeflectionMode::LoadProportional => self.tip_error_max * extension.clamp(0.0, 1.0),
        }
    }

    /// `(dz, dpitch, droll)` for a left swing leg; roll is mirrored for the right.
    pub fn offsets(&self, tip_error: f64, leg_length: f64, side: Side) -> (f64, f64, f64) {
        (
            -self.z_sag_gain * tip_error,
            self.pitch_gain * tip_error / leg_length,
            side.sign() * self.roll_gain * tip_error / leg_length,
        )
    }
}

/// True swing-sole pose given the commanded one. `engagement` in [0, 1]
/// scales the perturbation as the leg is loaded as a cantilever; it is 0 for
/// a planted foot.
pub fn apply_deflection(
    commanded: &Pose,
    side: Side,
    engagement: f64,
    extension: f64,
    dm: &DeflectionModel,
    leg_length: f64,
) -> Pose {
    if dm.mode == DeflectionMode::Off || engagement <= 0.0 {
        return *commanded;
    }
    let e = dm.tip_error(extension) * engagement.min(1.0);
    let (dz, dpitch, droll) = dm.offsets(e, leg_length, side);
    let (roll, pitch, yaw) = commanded.rpy();
    let p = commanded.position;
    Pose::from_xyz_rpy(p.x, p.y, p.z + dz, roll + droll, pitch + dpitch, yaw)
}
