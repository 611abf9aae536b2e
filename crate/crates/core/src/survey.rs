//! Acquisition geometry shared by the synthesis paths: source density on
//! the surface, receiver array, point reflector and lag grid.

use serde::{Deserialize, Serialize};

use crate::correlation::LagGate;
use crate::error::{Error, Result};

/// Density of noise sources on the surface `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceDensity {
    /// Sources everywhere.
    Uniform,
    /// `1` on the square `[−b/2, b/2]²`.
    Box { b: f64 },
    /// `exp(−|x|²/b²)`.
    Gaussian { b: f64 },
    Zero,
}

impl SourceDensity {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            SourceDensity::Uniform => 1.0,
            SourceDensity::Box { b } => {
                if x[0].abs() <= 0.5 * b && x[1].abs() <= 0.5 * b {
                    1.0
                } else {
                    0.0
                }
            }
            SourceDensity::Gaussian { b } => (-(x[0] * x[0] + x[1] * x[1]) / (b * b)).exp(),
            SourceDensity::Zero => 0.0,
        }
    }

    /// Radius outside which the density is zero (or below 1e-16).
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            SourceDensity::Uniform => None,
            SourceDensity::Box { b } => Some(b / std::f64::consts::SQRT_2),
            SourceDensity::Gaussian { b } => Some(b * (16.0 * std::f64::consts::LN_10).sqrt()),
            SourceDensity::Zero => Some(0.0),
        }
    }

    pub fn aperture(&self) -> Option<f64> {
        match *self {
            SourceDensity::Box { b } | SourceDensity::Gaussian { b } => Some(b),
            _ => None,
        }
    }
}

/// Point reflector at lateral position `y`, depth `L_y`, reflectivity `σ_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub lateral: [f64; 2],
    pub depth: f64,
    pub reflectivity: f64,
}

impl Reflector {
    pub fn position(&self) -> [f64; 3] {
        [self.lateral[0], self.lateral[1], self.depth]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagGrid {
    pub dtau: f64,
    pub max_lag: usize,
}

/// Receiver positions in the plane `z = L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArrayLayout {
    /// `n` receivers on the `x1` axis, spacing `a/n`, centred at 0.
    Line { n: usize, aperture: f64 },
    /// `n × n` receivers, spacing `a/n`, centred at 0.
    Square { n: usize, aperture: f64 },
}

impl ArrayLayout {
    pub fn aperture(&self) -> f64 {
        match *self {
            ArrayLayout::Line { aperture, .. } | ArrayLayout::Square { aperture, .. } => aperture,
        }
    }

    /// Lateral receiver positions.
    pub fn positions(&self) -> Result<Vec<[f64; 2]>> {
        let (n, a) = match *self {
            ArrayLayout::Line { n, aperture } | ArrayLayout::Square { n, aperture } => (n, aperture),
        };
        if n == 0 || !(a > 0.0) {
            return Err(Error::config("receiver array needs n > 0 and aperture > 0"));
        }
        let d = a / n as f64;
        let coord = |i: usize| (i as f64 - 0.5 * (n as f64 - 1.0)) * d;
        Ok(match self {
            ArrayLayout::Line { .. } => (0..n).map(|i| [coord(i), 0.0]).collect(),
            ArrayLayout::Square { .. } => (0..n * n).map(|i| [coord(i % n), coord(i / n)]).collect(),
        })
    }
}

/// Centre lag `(|y⃗−x⃗_q| + |x⃗_{q'}−y⃗|)/c0` of the ps peak.
pub fn ps_peak_lag(x_q: [f64; 2], x_qp: [f64; 2], slab: f64, reflector: &Reflector, c0: f64) -> f64 {
    let d = reflector.depth - slab;
    let r = |x: [f64; 2]| (reflector.lateral[0] - x[0]).hypot(reflector.lateral[1] - x[1]).hypot(d);
    (r(x_q) + r(x_qp)) / c0
}

/// Lag gate covering every ps peak of the array, widened by `margin`.
pub fn ps_gate(receivers: &[[f64; 2]], slab: f64, reflector: &Reflector, c0: f64, margin: f64) -> Result<LagGate> {
    if !(margin > 0.0) {
        return Err(Error::config("lag gate margin must be > 0"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &x in receivers {
        let t = ps_peak_lag(x, x, slab, reflector, c0);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Ok(LagGate {
        start: (lo - margin).max(f64::MIN_POSITIVE),
        end: hi + margin,
        taper: 0.5 * margin,
    })
}
