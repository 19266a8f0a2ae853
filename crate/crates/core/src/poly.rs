//! Piecewise polynomial trajectories over contiguous time segments.
//!
//! Each segment stores, per output channel, ascending-power coefficients in
//! local time `τ = t - t_start`. Evaluation outside the covered interval
//! clamps to the first/last segment endpoint (position held, derivatives of
//! the boundary segment at its endpoint).

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("trajectory has no segments")]
    Empty,
    #[error("segment {index} starts at {start} but previous segment ends at {prev_end}")]
    NotContiguous {
        index: usize,
        start: f64,
        prev_end: f64,
    },
    #[error("segment {index} has non-positive duration")]
    EmptySegment { index: usize },
    #[error("segment {index} has degree {degree} > {MAX_DEGREE}")]
    Degree { index: usize, degree: usize },
    #[error("segment {index} has {found} channels, expected {expected}")]
    Channels {
        index: usize,
        found: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    pub t_start: f64,
    pub t_end: f64,
    /// `coeffs[channel][power]`
    pub coeffs: Vec<Vec<f64>>,
}

impl PolySegment {
    pub fn new(t_start: f64, t_end: f64, coeffs: Vec<Vec<f64>>) -> Self {
        Self {
            t_start,
            t_end,
            coeffs,
        }
    }

    /// All channels constant.
    pub fn constant(t_start: f64, t_end: f64, values: &[f64]) -> Self {
        Self::new(t_start, t_end, values.iter().map(|v| vec![*v]).collect())
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Value of the `order`-th derivative of `channel` at local time `tau`.
    pub fn eval_local(&self, channel: usize, tau: f64, order: usize) -> f64 {
        eval_poly(&self.coeffs[channel], tau, order)
    }
}

/// Horner evaluation of the `order`-th derivative of an ascending-power polynomial.
pub fn eval_poly(c: &[f64], tau: f64, order: usize) -> f64 {
    if order >= c.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in (order..c.len()).rev() {
        acc = acc * tau + c[i] * falling(i, order);
    }
    acc
}

fn falling(n: usize, k: usize) -> f64 {
    ((n - k + 1)..=n).map(|v| v as f64).product()
}

/// Re-expands `c(τ)` around `τ = shift`, returning `d` with `d(s) = c(s + shift)`.
pub fn shift_poly(c: &[f64], shift: f64) -> Vec<f64> {
    (0..c.len())
        .map(|k| eval_poly(c, shift, k) / falling(k, k))
        .collect()
}

/// Quintic with position, velocity and acceleration fixed at `τ = 0` and `τ = t`.
pub fn quintic(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> Vec<f64> {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let dp = p1 - p0;
    let c3 = (20.0 * dp - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
    let c4 = (-30.0 * dp + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t4);
    let c5 = (12.0 * dp - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t5);
    vec![p0, v0, a0 / 2.0, c3, c4, c5]
}

/// Cubic Hermite with position and velocity fixed at both ends.
pub fn cubic_hermite(p0: f64, v0: f64, p1: f64, v1: f64, t: f64) -> Vec<f64> {
    let dp = p1 - p0;
    let c2 = (3.0 * dp - (2.0 * v0 + v1) * t) / (t * t);
    let c3 = (-2.0 * dp + (v0 + v1) * t) / (t * t * t);
    vec![p0, v0, c2, c3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    segments: Vec<PolySegment>,
}

impl PiecewisePolynomial {
    pub fn new(segments: Vec<PolySegment>) -> Result<Self, PolyError> {
        let first = segments.first().ok_or(PolyError::Empty)?;
        let channels = first.coeffs.len();
        for (i, s) in segments.iter().enumerate() {
            if !(s.t_end > s.t_start) {
                return Err(PolyError::EmptySegment { index: i });
            }
            if s.coeffs.len() != channels {
                return Err(PolyError::Channels {
                    index: i,
                    found: s.coeffs.len(),
                    expected: channels,
                });
            }
            let degree = s
                .coeffs
                .iter()
                .map(|c| c.len().saturating_sub(1))
                .max()
                .unwrap_or(0);
            if degree > MAX_DEGREE {
                return Err(PolyError::Degree { index: i, degree });
            }
            if i > 0 {
                let prev_end = segments[i - 1].t_end;
                if (s.t_start - prev_end).abs() > 1e-12 {
                    return Err(PolyError::NotContiguous {
                        index: i,
                        start: s.t_start,
                        prev_end,
                    });
                }
            }
        }
        Ok(Self { segments })
    }

    /// A single constant segment.
    pub fn constant(t_start: f64, t_end: f64, values: &[f64]) -> Self {
        Self {
            segments: vec![PolySegment::constant(t_start, t_end, values)],
        }
    }

    pub fn segments(&self) -> &[PolySegment] {
        &self.segments
    }

    pub fn channels(&self) -> usize {
        self.segments[0].coeffs.len()
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    /// Interior knot times.
    pub fn knots(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.t_start).collect()
    }

    fn locate(&self, t: f64) -> (&PolySegment, f64) {
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        if idx >= self.segments.len() {
            let s = self.segments.last().unwrap();
            return (s, s.duration());
        }
        let s = &self.segments[idx];
        (s, (t - s.t_start).max(0.0))
    }

    pub fn eval(&self, t: f64, channel: usize) -> f64 {
        self.derivative(t, channel, 0)
    }

    pub fn derivative(&self, t: f64, channel: usize, order: usize) -> f64 {
        let (s, tau) = self.locate(t);
        s.eval_local(channel, tau, order)
    }

    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let (s, tau) = self.locate(t);
        (0..s.coeffs.len())
            .map(|c| s.eval_local(c, tau, 0))
            .collect()
    }

    /// Largest jump over all interior knots and channels of the position,
    /// velocity and acceleration.
    pub fn continuity_defects(&self) -> [f64; 3] {
        let mut out = [0.0f64; 3];
        for w in self.segments.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            for ch in 0..a.coeffs.len() {
                for (order, slot) in out.iter_mut().enumerate() {
                    let left = a.eval_local(ch, a.duration(), order);
                    let right = b.eval_local(ch, 0.0, order);
                    *slot = slot.max((left - right).abs());
                }
            }
        }
        out
    }

    /// Highest polynomial degree over segments and channels.
    pub fn degree(&self) -> usize {
        self.segments
            .iter()
            .flat_map(|s| s.coeffs.iter().map(|c| c.len().saturating_sub(1)))
            .max()
            .unwrap_or(0)
    }

    /// Concatenates trajectories with matching channel counts end-to-start.
    pub fn concat(parts: Vec<PiecewisePolynomial>) -> Result<Self, PolyError> {
        Self::new(parts.into_iter().flat_map(|p| p.segments).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_meets_boundary_conditions() {
        let c = quintic(0.1, -0.2, 0.3, 0.7, 0.4, -0.5, 0.8);
        let check = |tau, order, want: f64| {
            let got = eval_poly(&c, tau, order);
            assert!(
                (got - want).abs() < 1e-12,
                "τ={tau} d{order}: {got} vs {want}"
            );
        };
        check(0.0, 0, 0.1);
        check(0.0, 1, -0.2);
        check(0.0, 2, 0.3);
        check(0.8, 0, 0.7);
        check(0.8, 1, 0.4);
        check(0.8, 2, -0.5);
    }

    #[test]
    fn cubic_hermite_boundary() {
        let c = cubic_hermite(0.02, -0.15, 0.0, 0.0, 0.05);
        assert!((eval_poly(&c, 0.05, 0)).abs() < 1e-15);
        assert!((eval_poly(&c, 0.05, 1)).abs() < 1e-13);
        assert!((eval_poly(&c, 0.0, 1) + 0.15).abs() < 1e-15);
    }

    #[test]
    fn shift_preserves_values() {
        let c = vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        let d = shift_poly(&c, 0.4);
        for s in [0.0, 0.1, 0.37] {
            for order in 0..4 {
                assert!((eval_poly(&d, s, order) - eval_poly(&c, s + 0.4, order)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_gaps_and_high_degree() {
        let a = PolySegment::constant(0.0, 1.0, &[0.0]);
        let b = PolySegment::constant(1.1, 2.0, &[0.0]);
        assert!(matches!(
            PiecewisePolynomial::new(vec![a.clone(), b]),
            Err(PolyError::NotContiguous { index: 1, .. })
        ));
        let hi = PolySegment::new(1.0, 2.0, vec![vec![0.0; 7]]);
        assert!(matches!(
            PiecewisePolynomial::new(vec![a, hi]),
            Err(PolyError::Degree { .. })
        ));
    }

    #[test]
    fn evaluation_clamps_outside_domain() {
        let p = PiecewisePolynomial::new(vec![PolySegment::new(0.0, 1.0, vec![vec![0.0, 1.0]])])
            .unwrap();
        assert_eq!(p.eval(-1.0, 0), 0.0);
        assert_eq!(p.eval(2.0, 0), 1.0);
        assert_eq!(p.eval(0.5, 0), 0.5);
    }
}
