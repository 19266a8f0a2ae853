//! Physical robot parameters: joint specifications, leg segment lengths,
//! foot and probe geometry, and the lumped link masses.
//!
//! Models are loaded from a TOML document with sections `[leg]`, `[foot]`,
//! `[masses]` and an array of `[[joints]]`. Quantities may carry unit
//! suffixes; everything is stored in SI (m, rad, rad/s, N·m, kg).

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::kinematics::{LegJoint, Side};
use crate::units::{range_with_unit, with_unit, Dim, Quantity};

/// The shipped model file; [`default_model`] is exactly this document parsed.
pub const DEFAULT_MODEL_TOML: &str = include_str!("../config/default_model.toml");

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ModelError {
    ModelError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Converts a toml error into a [`ModelError::Parse`] with 1-based line/column.
pub(crate) fn parse_error(text: &str, err: &toml::de::Error) -> ModelError {
    let (line, column) = match err.span() {
        Some(span) => line_col(text, span.start),
        None => (0, 0),
    };
    ModelError::Parse {
        line,
        column,
        message: err.message().to_string(),
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |i| offset - i - 1) + 1;
    (line, column)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Roll,
    Pitch,
    Yaw,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Roll => "roll",
            Axis::Pitch => "pitch",
            Axis::Yaw => "yaw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub axis: Axis,
    /// Harmonic-drive ratio; `None` for direct servo joints.
    pub gear_ratio: Option<f64>,
    /// rad/s
    pub max_speed: f64,
    /// N·m
    pub max_torque: f64,
    /// rad
    pub range_min: f64,
    /// rad
    pub range_max: f64,
}

impl JointSpec {
    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.range_min - LIMIT_SLACK && angle <= self.range_max + LIMIT_SLACK
    }
}

/// Slack on joint range checks so that values sitting exactly on a limit
/// survive round-off in IK.
pub const LIMIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LegKinematics {
    /// Lateral distance from pelvis centre to each hip joint, m.
    pub hip_offset_y: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    /// Ankle axis to sole, m.
    pub ankle_height: f64,
}

impl LegKinematics {
    pub fn total_length(&self) -> f64 {
        self.thigh_length + self.shank_length + self.ankle_height
    }
}

/// Probe corner labels as seen from above with the toe pointing +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    /// front-left
    A,
    /// rear-left
    B,
    /// rear-right
    C,
    /// front-right
    D,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::A, Corner::B, Corner::C, Corner::D];
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootGeometry {
    /// Sole length along x, m.
    pub length_x: f64,
    /// Sole width along y, m.
    pub width_y: f64,
    /// Probe attachment points in the sole frame, ordered A, B, C, D.
    pub probe_offsets: [Vector2<f64>; 4],
    /// Distance below which probes report accurately, m.
    pub sensor_range: f64,
}

impl FootGeometry {
    pub fn probe(&self, c: Corner) -> Vector2<f64> {
        self.probe_offsets[c as usize]
    }

    /// Longitudinal probe span (front minus rear x).
    pub fn probe_span_x(&self) -> f64 {
        self.probe(Corner::A).x - self.probe(Corner::B).x
    }

    /// Lateral probe span (left minus right y).
    pub fn probe_span_y(&self) -> f64 {
        self.probe(Corner::A).y - self.probe(Corner::D).y
    }

    /// Sole outline corners in the sole frame.
    pub fn outline(&self) -> [Vector2<f64>; 4] {
        let (hx, hy) = (self.length_x / 2.0, self.width_y / 2.0);
        [
            Vector2::new(hx, hy),
            Vector2::new(-hx, hy),
            Vector2::new(-hx, -hy),
            Vector2::new(hx, -hy),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMasses {
    pub pelvis_torso: f64,
    /// Per leg.
    pub thigh: f64,
    /// Per leg.
    pub shank: f64,
    /// Per leg.
    pub foot: f64,
    /// Height of the pelvis/torso CoM above the pelvis frame origin, m.
    pub pelvis_com_offset_z: f64,
}

impl LinkMasses {
    pub fn sum(&self) -> f64 {
        self.pelvis_torso + 2.0 * (self.thigh + self.shank + self.foot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub joints: Vec<JointSpec>,
    pub leg: LegKinematics,
    pub foot: FootGeometry,
    pub masses: LinkMasses,
    pub total_mass: f64,
    /// Pelvis height held during walking, m.
    pub com_height_nominal: f64,
}

impl RobotModel {
    pub fn joint(&self, name: &str) -> Option<&JointSpec> {
        self.joints.iter().find(|j| j.name == name)
    }

    /// Spec of one leg joint. Always present in a validated model.
    pub fn leg_joint(&self, side: Side, joint: LegJoint) -> &JointSpec {
        let name = joint.name(side);
        self.joint(&name)
            .unwrap_or_else(|| panic!("validated model is missing leg joint {name}"))
    }

    /// Leg length from hip axis to sole with a straight knee.
    pub fn leg_length(&self) -> f64 {
        self.leg.total_length()
    }

    /// Serialises to the config format. Values are written in SI with
    /// explicit units and shortest round-trip formatting, so reloading the
    /// output yields a field-wise equal model.
    pub fn to_config_string(&self) -> String {
        let doc = RawModel {
            leg: RawLeg {
                hip_offset_y: Some(Quantity::Text(with_unit(self.leg.hip_offset_y, "m"))),
                thigh_length: Some(Quantity::Text(with_unit(self.leg.thigh_length, "m"))),
                shank_length: Some(Quantity::Text(with_unit(self.leg.shank_length, "m"))),
                ankle_height: Some(Quantity::Text(with_unit(self.leg.ankle_height, "m"))),
                com_height_nominal: Some(Quantity::Text(with_unit(self.com_height_nominal, "m"))),
            },
            foot: RawFoot {
                length_x: Some(Quantity::Text(with_unit(self.foot.length_x, "m"))),
                width_y: Some(Quantity::Text(with_unit(self.foot.width_y, "m"))),
                probe_inset: None,
                probes: Some(self.foot.probe_offsets.iter().map(|p| [p.x, p.y]).collect()),
                sensor_range: Some(Quantity::Text(with_unit(self.foot.sensor_range, "m"))),
            },
            masses: RawMasses {
                pelvis_torso: Some(Quantity::Text(with_unit(self.masses.pelvis_torso, "kg"))),
                thigh: Some(Quantity::Text(with_unit(self.masses.thigh, "kg"))),
                shank: Some(Quantity::Text(with_unit(self.masses.shank, "kg"))),
                foot: Some(Quantity::Text(with_unit(self.masses.foot, "kg"))),
                pelvis_com_offset_z: Some(Quantity::Text(with_unit(
                    self.masses.pelvis_com_offset_z,
                    "m",
                ))),
                total: Some(Quantity::Text(with_unit(self.total_mass, "kg"))),
            },
            joints: self
                .joints
                .iter()
                .map(|j| RawJoint {
                    name: j.name.clone(),
                    axis: j.axis,
                    ratio: j.gear_ratio,
                    max_speed: Quantity::Text(with_unit(j.max_speed, "rad/s")),
                    max_torque: Quantity::Text(with_unit(j.max_torque, "N*m")),
                    range: Quantity::Text(range_with_unit(j.range_min, j.range_max, "rad")),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("model document is always serialisable")
    }
}

/// Parses and validates a model document.
pub fn load_model(config_text: &str) -> Result<RobotModel, ModelError> {
    let raw: RawModel = toml::from_str(config_text).map_err(|e| parse_error(config_text, &e))?;
    raw.into_model()
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<RobotModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_model(&text)
}

/// The built-in model; identical to loading [`DEFAULT_MODEL_TOML`].
pub fn default_model() -> RobotModel {
    load_model(DEFAULT_MODEL_TOML).expect("shipped default model is valid")
}

// ---------------------------------------------------------------------------
// raw document

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    leg: RawLeg,
    foot: RawFoot,
    masses: RawMasses,
    joints: Vec<RawJoint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeg {
    hip_offset_y: Option<Quantity>,
    thigh_length: Option<Quantity>,
    shank_length: Option<Quantity>,
    ankle_height: Option<Quantity>,
    com_height_nominal: Option<Quantity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFoot {
    length_x: Option<Quantity>,
    width_y: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_inset: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probes: Option<Vec<[f64; 2]>>,
    sensor_range: Option<Quantity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMasses {
    pelvis_torso: Option<Quantity>,
    thigh: Option<Quantity>,
    shank: Option<Quantity>,
    foot: Option<Quantity>,
    pelvis_com_offset_z: Option<Quantity>,
    total: Option<Quantity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    name: String,
    axis: Axis,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    max_speed: Quantity,
    max_torque: Quantity,
    range: Quantity,
}

fn required(q: &Option<Quantity>, field: &str, dim: Dim) -> Result<f64, ModelError> {
    let q = q
        .as_ref()
        .ok_or_else(|| invalid(field, "required key is missing"))?;
    let v = q.si(dim).map_err(|r| invalid(field, r))?;
    if !v.is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    Ok(v)
}

fn positive(v: f64, field: &str) -> Result<f64, ModelError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(
            field,
            format!("must be strictly positive, got {v}"),
        ))
    }
}

impl RawModel {
    fn into_model(self) -> Result<RobotModel, ModelError> {
        let leg = LegKinematics {
            hip_offset_y: positive(
                required(&self.leg.hip_offset_y, "leg.hip_offset_y", Dim::Length)?,
                "leg.hip_offset_y",
            )?,
            thigh_length: positive(
                required(&self.leg.thigh_length, "leg.thigh_length", Dim::Length)?,
                "leg.thigh_length",
            )?,
            shank_length: positive(
                required(&self.leg.shank_length, "leg.shank_length", Dim::Length)?,
                "leg.shank_length",
            )?,
            ankle_height: positive(
                required(&self.leg.ankle_height, "leg.ankle_height", Dim::Length)?,
                "leg.ankle_height",
            )?,
        };
        let total_leg = leg.total_length();
        if !(0.6..=1.1).contains(&total_leg) {
            return Err(invalid(
                "leg",
                format!("total leg length {total_leg} m is outside [0.6, 1.1] m"),
            ));
        }
        let com_height_nominal = positive(
            required(
                &self.leg.com_height_nominal,
                "leg.com_height_nominal",
                Dim::Length,
            )?,
            "leg.com_height_nominal",
        )?;
        if com_height_nominal >= total_leg {
            return Err(invalid(
                "leg.com_height_nominal",
                "pelvis height must be below the straight-leg length",
            ));
        }

        let foot = self.foot.into_geometry()?;

        let masses = LinkMasses {
            pelvis_torso: positive(
                required(&self.masses.pelvis_torso, "masses.pelvis_torso", Dim::Mass)?,
                "masses.pelvis_torso",
            )?,
            thigh: nonneg(
                required(&self.masses.thigh, "masses.thigh", Dim::Mass)?,
                "masses.thigh",
            )?,
            shank: nonneg(
                required(&self.masses.shank, "masses.shank", Dim::Mass)?,
                "masses.shank",
            )?,
            foot: nonneg(
                required(&self.masses.foot, "masses.foot", Dim::Mass)?,
                "masses.foot",
            )?,
            pelvis_com_offset_z: match &self.masses.pelvis_com_offset_z {
                Some(_) => required(
                    &self.masses.pelvis_com_offset_z,
                    "masses.pelvis_com_offset_z",
                    Dim::Length,
                )?,
                None => 0.0,
            },
        };
        let sum = masses.sum();
        let total_mass = match &self.masses.total {
            Some(_) => {
                let t = required(&self.masses.total, "masses.total", Dim::Mass)?;
                if (t - sum).abs() > 1e-9 {
                    return Err(invalid(
                        "masses.total",
                        format!("declared total {t} kg differs from link sum {sum} kg"),
                    ));
                }
                t
            }
            None => sum,
        };

        let mut joints = Vec::with_capacity(self.joints.len());
        for rj in self.joints {
            joints.push(rj.into_spec()?);
        }
        for (i, j) in joints.iter().enumerate() {
            if joints[..i].iter().any(|k| k.name == j.name) {
                return Err(invalid(
                    format!("joints.{}", j.name),
                    "joint is declared more than once",
                ));
            }
        }
        for side in [Side::Left, Side::Right] {
            for lj in LegJoint::ALL {
                let name = lj.name(side);
                let Some(spec) = joints.iter().find(|j| j.name == name) else {
                    return Err(invalid(
                        format!("joints.{name}"),
                        "required leg joint is missing",
                    ));
                };
                if spec.axis != lj.axis() {
                    return Err(invalid(
                        format!("joints.{name}.axis"),
                        format!("expected {} axis, got {}", lj.axis(), spec.axis),
                    ));
                }
            }
        }

        Ok(RobotModel {
            joints,
            leg,
            foot,
            masses,
            total_mass,
            com_height_nominal,
        })
    }
}

fn nonneg(v: f64, field: &str) -> Result<f64, ModelError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be non-negative, got {v}")))
    }
}

impl RawFoot {
    fn into_geometry(self) -> Result<FootGeometry, ModelError> {
        let length_x = positive(
            required(&self.length_x, "foot.length_x", Dim::Length)?,
            "foot.length_x",
        )?;
        let width_y = positive(
            required(&self.width_y, "foot.width_y", Dim::Length)?,
            "foot.width_y",
        )?;
        let sensor_range = match &self.sensor_range {
            Some(_) => positive(
                required(&self.sensor_range, "foot.sensor_range", Dim::Length)?,
                "foot.sensor_range",
            )?,
            None => 0.015,
        };
        let probe_offsets = match (&self.probes, &self.probe_inset) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "foot",
                    "give either `probes` or `probe_inset`, not both",
                ))
            }
            (Some(p), None) => {
                if p.len() != 4 {
                    return Err(invalid(
                        "foot.probes",
                        "exactly four probes (A, B, C, D) required",
                    ));
                }
                [
                    Vector2::new(p[0][0], p[0][1]),
                    Vector2::new(p[1][0], p[1][1]),
                    Vector2::new(p[2][0], p[2][1]),
                    Vector2::new(p[3][0], p[3][1]),
                ]
            }
            (None, inset) => {
                let inset = match inset {
                    Some(_) => required(inset, "foot.probe_inset", Dim::Length)?,
                    None => 0.0,
                };
                let hx = length_x / 2.0 - inset;
                let hy = width_y / 2.0 - inset;
                if hx <= 0.0 || hy <= 0.0 || inset < 0.0 {
                    return Err(invalid(
                        "foot.probe_inset",
                        "inset leaves no probe rectangle",
                    ));
                }
                [
                    Vector2::new(hx, hy),
                    Vector2::new(-hx, hy),
                    Vector2::new(-hx, -hy),
                    Vector2::new(hx, -hy),
                ]
            }
        };
        let [a, b, c, d] = probe_offsets;
        let rectangle = a.x == d.x && b.x == c.x && a.y == b.y && c.y == d.y;
        if !rectangle {
            return Err(invalid(
                "foot.probes",
                "probes must form an axis-aligned rectangle A(front-left) B(rear-left) C(rear-right) D(front-right)",
            ));
        }
        if a.x <= b.x || a.y <= d.y {
            return Err(invalid(
                "foot.probes",
                "degenerate probe rectangle or wrong corner order (A front-left, B rear-left, C rear-right, D front-right)",
            ));
        }
        let (hx, hy) = (length_x / 2.0, width_y / 2.0);
        if probe_offsets
            .iter()
            .any(|p| p.x.abs() > hx + 1e-12 || p.y.abs() > hy + 1e-12)
        {
            return Err(invalid(
                "foot.probes",
                "probe lies outside the sole outline",
            ));
        }
        Ok(FootGeometry {
            length_x,
            width_y,
            probe_offsets,
            sensor_range,
        })
    }
}

impl RawJoint {
    fn into_spec(self) -> Result<JointSpec, ModelError> {
        let field = |k: &str| format!("joints.{}.{k}", self.name);
        let max_speed = self
            .max_speed
            .si(Dim::AngularSpeed)
            .map_err(|r| invalid(field("max_speed"), r))?;
        let max_torque = self
            .max_torque
            .si(Dim::Torque)
            .map_err(|r| invalid(field("max_torque"), r))?;
        let (range_min, range_max) = self
            .range
            .range(Dim::Angle)
            .map_err(|r| invalid(field("range"), r))?;
        if !(max_speed > 0.0) {
            return Err(invalid(field("max_speed"), "must be positive"));
        }
        if !(max_torque > 0.0) {
            return Err(invalid(field("max_torque"), "must be positive"));
        }
        if !(range_min < range_max) {
            return Err(invalid(field("range"), "range_min must be below range_max"));
        }
        if let Some(r) = self.ratio {
            if !(r > 0.0) {
                return Err(invalid(field("ratio"), "must be positive"));
            }
        }
        Ok(JointSpec {
            name: self.name,
            axis: self.axis,
            gear_ratio: self.ratio,
            max_speed,
            max_torque,
            range_min,
            range_max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knee_speed_from_rpm() {
        let m = default_model();
        let knee = m.leg_joint(Side::Left, LegJoint::Knee);
        assert!((knee.max_speed - std::f64::consts::TAU).abs() < 1e-12);
        assert_eq!(knee.range_min, 0.0);
        assert!((knee.range_max - 135f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn hip_roll_range_in_radians() {
        let m = default_model();
        let hr = m.leg_joint(Side::Right, LegJoint::HipRoll);
        assert!((hr.range_min + 0.4363).abs() < 1e-4);
        assert!((hr.range_max - std::f64::consts::FRAC_PI_6).abs() < 1e-12);
    }

    #[test]
    fn default_totals() {
        let m = default_model();
        assert_eq!(m.total_mass, 68.0);
        assert!((m.masses.sum() - m.total_mass).abs() < 1e-9);
        assert_eq!(m.foot.sensor_range, 0.015);
        assert!((m.leg.thigh_length - 0.36).abs() < 1e-15);
        assert_eq!(m.joints.len(), 12 + 2 + 14 + 3);
    }

    #[test]
    fn probe_centroid_at_origin() {
        let m = default_model();
        let c: Vector2<f64> = m.foot.probe_offsets.iter().sum::<Vector2<f64>>() / 4.0;
        assert!(c.norm() < 1e-12);
        assert!((m.foot.probe_span_x() - 0.22).abs() < 1e-12);
        assert!((m.foot.probe_span_y() - 0.12).abs() < 1e-12);
    }

    #[test]
    fn leg_joint_limits_straddle_zero_or_are_one_sided() {
        let m = default_model();
        for side in [Side::Left, Side::Right] {
            for lj in LegJoint::ALL {
                let j = m.leg_joint(side, lj);
                let one_sided = j.range_min == 0.0 || j.range_max == 0.0;
                assert!(
                    one_sided || (j.range_min < 0.0 && 0.0 < j.range_max),
                    "{}",
                    j.name
                );
            }
        }
    }

    #[test]
    fn missing_thigh_length_is_rejected() {
        let text = DEFAULT_MODEL_TOML.replace("thigh_length = \"36 cm\"\n", "");
        match load_model(&text) {
            Err(ModelError::Validation { field, .. }) => assert_eq!(field, "leg.thigh_length"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_shank_is_rejected() {
        let text =
            DEFAULT_MODEL_TOML.replace("shank_length = \"35 cm\"", "shank_length = \"-35 cm\"");
        assert!(matches!(
            load_model(&text),
            Err(ModelError::Validation { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "[leg]\nthigh_length = \n";
        match load_model(text) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let text = DEFAULT_MODEL_TOML.replace("total = \"68 kg\"", "total = \"70 kg\"");
        assert!(matches!(
            load_model(&text),
            Err(ModelError::Validation { ref field, .. }) if field == "masses.total"
        ));
    }

    #[test]
    fn duplicate_joint_is_rejected() {
        let extra = "\n[[joints]]\nname = \"left_knee_pitch\"\naxis = \"pitch\"\nmax_speed = \"1 rad/s\"\nmax_torque = 1\nrange = \"0..1 rad\"\n";
        let text = format!("{DEFAULT_MODEL_TOML}{extra}");
        assert!(matches!(
            load_model(&text),
            Err(ModelError::Validation { .. })
        ));
    }

    #[test]
    fn round_trip_through_config_text() {
        let m = default_model();
        let text = m.to_config_string();
        let back = load_model(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn shipped_file_matches_default() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/config/default_model.toml");
        assert_eq!(load_model_file(path).unwrap(), default_model());
    }
}
