use crate::kinematics::Pose;
use crate::poly::{quintic, shift_poly, PiecewisePolynomial, PolyError, PolySegment};

use super::channel;
use super::pose_channels;

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}

/// Swing-foot trajectory from `from` to `to` over `t_ss`, starting at `t0`.
///
/// Two segments split at mid-swing. Height rises with a rest-to-rest quintic
/// to `max(z_from, z_to) + apex` and descends with another to `z_to`; the
/// other channels follow a single rest-to-rest quintic over the whole swing.
/// Velocity and acceleration vanish at liftoff and touchdown.
pub fn generate_swing_trajectory(
    from: &Pose,
    to: &Pose,
    t_ss: f64,
    apex: f64,
    t0: f64,
) -> Result<PiecewisePolynomial, PolyError> {
    let half = t_ss / 2.0;
    let a = pose_channels(from);
    let mut b = pose_channels(to);
    for ch in [channel::ROLL, channel::PITCH, channel::YAW] {
        b[ch] = a[ch] + wrap_angle(b[ch] - a[ch]);
    }
    let z_top = a[channel::Z].max(b[channel::Z]) + apex;

    let mut first = Vec::with_capacity(6);
    let mut second = Vec::with_capacity(6);
    for ch in 0..6 {
        if ch == channel::Z {
            first.push(quintic(a[ch], 0.0, 0.0, z_top, 0.0, 0.0, half));
            second.push(quintic(z_top, 0.0, 0.0, b[ch], 0.0, 0.0, t_ss - half));
        } else {
            let c = quintic(a[ch], 0.0, 0.0, b[ch], 0.0, 0.0, t_ss);
            second.push(shift_poly(&c, half));
            first.push(c);
        }
    }
    PiecewisePolynomial::new(vec![
        PolySegment::new(t0, t0 + half, first),
        PolySegment::new(t0 + half, t0 + t_ss, second),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apex_reached_at_mid_swing() {
        let from = Pose::from_xyz_rpy(0.0, 0.1, 0.0, 0.0, 0.0, 0.0);
        let to = Pose::from_xyz_rpy(0.3, 0.1, 0.02, 0.0, 0.0, 0.0);
        let tr = generate_swing_trajectory(&from, &to, 0.8, 0.05, 1.0).unwrap();
        assert!((tr.eval(1.4, channel::Z) - 0.07).abs() < 1e-12);
        assert!((tr.eval(1.4, channel::X) - 0.15).abs() < 1e-12);
        assert!((tr.eval(1.8, channel::Z) - 0.02).abs() < 1e-12);
        let [p, v, a] = tr.continuity_defects();
        assert!(p < 1e-12 && v < 1e-12 && a < 1e-9);
    }

    #[test]
    fn yaw_takes_short_way() {
        let from = Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, 3.0);
        let to = Pose::from_xyz_rpy(0.0, 0.0, 0.0, 0.0, 0.0, -3.0);
        let tr = generate_swing_trajectory(&from, &to, 0.8, 0.0, 0.0).unwrap();
        let mid = tr.eval(0.4, channel::YAW);
        assert!(mid.abs() > 3.0);
    }
}
