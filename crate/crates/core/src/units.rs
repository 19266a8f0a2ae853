//! Unit-suffixed quantities accepted by the config files.
//!
//! A quantity is either a bare number (already in SI) or a string such as
//! `"36 cm"`, `"60 rpm"`, `"-25..30 deg"` or `"±45 deg"`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dim {
    Length,
    Angle,
    AngularSpeed,
    Torque,
    Mass,
}

impl Dim {
    fn scale(self, unit: &str) -> Option<f64> {
        let s = match (self, unit) {
            (Dim::Length, "m") => 1.0,
            (Dim::Length, "cm") => 0.01,
            (Dim::Length, "mm") => 0.001,
            (Dim::Angle, "rad") => 1.0,
            (Dim::Angle, "deg" | "°") => PI / 180.0,
            (Dim::AngularSpeed, "rad/s") => 1.0,
            (Dim::AngularSpeed, "rpm") => 2.0 * PI / 60.0,
            (Dim::AngularSpeed, "deg/s") => PI / 180.0,
            (Dim::Torque, "N*m" | "Nm" | "N·m" | "N.m") => 1.0,
            (Dim::Mass, "kg") => 1.0,
            (Dim::Mass, "g") => 0.001,
            _ => return None,
        };
        Some(s)
    }
}

fn split_unit(text: &str) -> (&str, Option<&str>) {
    let text = text.trim();
    match text.rfind(char::is_whitespace) {
        Some(i) => (text[..i].trim(), Some(text[i..].trim())),
        None => {
            // allow "36cm" / "60rpm"
            let bytes = text.as_bytes();
            let is_exponent = |i: usize| {
                matches!(bytes[i], b'e' | b'E')
                    && i > 0
                    && bytes[i - 1].is_ascii_digit()
                    && bytes
                        .get(i + 1)
                        .is_some_and(|b| b.is_ascii_digit() || *b == b'-' || *b == b'+')
            };
            let idx = text
                .char_indices()
                .find(|&(i, c)| (c.is_alphabetic() && !is_exponent(i)) || c == '°')
                .map(|(i, _)| i);
            match idx {
                Some(i) if i > 0 => (text[..i].trim(), Some(&text[i..])),
                _ => (text, None),
            }
        }
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("'{s}' is not a number"))
}

fn unit_scale(dim: Dim, unit: Option<&str>) -> Result<f64, String> {
    match unit {
        None => Ok(1.0),
        Some(u) => dim
            .scale(u)
            .ok_or_else(|| format!("unit '{u}' is not valid for a {dim:?} quantity")),
    }
}

impl Quantity {
    pub(crate) fn si(&self, dim: Dim) -> Result<f64, String> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(t) => {
                let (num, unit) = split_unit(t);
                let scale = unit_scale(dim, unit)?;
                Ok(parse_number(num)? * scale)
            }
        }
    }

    /// Parses `"lo..hi unit"`, `"±v unit"` or `"+-v unit"`.
    pub(crate) fn range(&self, dim: Dim) -> Result<(f64, f64), String> {
        let Quantity::Text(t) = self else {
            return Err("a range must be written as \"lo..hi unit\" or \"±v unit\"".into());
        };
        let (body, unit) = split_unit(t);
        let scale = unit_scale(dim, unit)?;
        let body = body.trim();
        let sym = body.strip_prefix('±').or_else(|| body.strip_prefix("+-"));
        if let Some(v) = sym {
            let v = parse_number(v)?;
            return Ok((-v * scale, v * scale));
        }
        let (lo, hi) = body
            .split_once("..")
            .ok_or_else(|| format!("'{t}' is not a range"))?;
        Ok((parse_number(lo)? * scale, parse_number(hi)? * scale))
    }
}

/// Formats an SI value with a unit so that it parses back to the same bits.
pub(crate) fn with_unit(v: f64, unit: &str) -> String {
    format!("{v:?} {unit}")
}

pub(crate) fn range_with_unit(lo: f64, hi: f64, unit: &str) -> String {
    format!("{lo:?}..{hi:?} {unit}")
}
