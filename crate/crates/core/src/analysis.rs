//! Effective apertures and bandwidth, and width measurements of migrated
//! point-spread functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::migration::{ImageGrid, PsfParams, Regime};

/// Smallest `b²/(L·L_loc)` accepted by the strong layered aperture law.
pub const LAYERED_APERTURE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Apertures {
    pub b_eff: f64,
    pub a_eff: f64,
}

/// Effective source and receiver apertures for the regime in `params`.
///
/// - homogeneous: `b_eff = b`
/// - paraxial: `b_eff² = b² + γ̄2L³/3`
/// - layered weak: `b_eff = b`, `a_eff = min((L_y−L)b/L_y, a)`
/// - layered strong: `b_eff² = 4L_y²L_loc/L`, valid when `b² ≫ L·L_loc`
///
/// Except in the weak layered case `a_eff = b_eff(L_y−L)/L_y`.
pub fn effective_apertures(params: &PsfParams) -> Result<Apertures> {
    let d = params.reflector_depth - params.length;
    if !(d > 0.0) || !(params.b > 0.0) || !(params.length > 0.0) {
        return Err(Error::config("effective apertures need b > 0 and L_y > L > 0"));
    }
    let scale = d / params.reflector_depth;
    let (b_eff, a_eff) = match params.regime {
        Regime::HomogeneousFull => (params.b, params.b * scale),
        Regime::ParaxialFinite => {
            if !(params.gamma2_bar >= 0.0) {
                return Err(Error::config("γ̄2 must be >= 0"));
            }
            let b_eff = (params.b * params.b + params.gamma2_bar * params.length.powi(3) / 3.0).sqrt();
            (b_eff, b_eff * scale)
        }
        Regime::LayeredWeak => (params.b, (params.b * scale).min(params.a)),
        Regime::LayeredStrong => {
            if !(params.l_loc > 0.0) {
                return Err(Error::config("layered apertures need L_loc > 0"));
            }
            let ratio = params.b * params.b / (params.length * params.l_loc);
            if ratio < LAYERED_APERTURE_RATIO {
                return Err(Error::config(format!(
                    "layered effective aperture assumes a source aperture much larger than √(L·L_loc): \
                     b²/(L·L_loc) = {ratio:.3} < {LAYERED_APERTURE_RATIO}"
                )));
            }
            let b_eff = 2.0 * params.reflector_depth * (params.l_loc / params.length).sqrt();
            (b_eff, b_eff * scale)
        }
    };
    Ok(Apertures { b_eff, a_eff })
}

/// `B_eff = B/√(1 + B²L/(4ω0²L_loc))`; `L_loc = ∞` gives `B`.
pub fn effective_bandwidth(bandwidth: f64, omega0: f64, length: f64, l_loc: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && omega0 > 0.0 && length >= 0.0 && l_loc > 0.0) {
        return Err(Error::config("effective bandwidth needs B, ω0, L_loc > 0 and L >= 0"));
    }
    Ok(bandwidth / (1.0 + bandwidth * bandwidth * length / (4.0 * omega0 * omega0 * l_loc)).sqrt())
}

/// Which feature of a profile defines its width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthMode {
    /// Distance from the peak to the first minimum (a zero of a sinc-type profile).
    FirstZero,
    /// Half-width at which the profile drops to `1/e` of its peak.
    InvE,
}

/// Sub-sample offset of a 3-point parabola vertex, in `[−1/2, 1/2]` when
/// `v[1]` is an extremum.
pub fn parabolic_vertex(v0: f64, v1: f64, v2: f64) -> f64 {
    let den = v0 - 2.0 * v1 + v2;
    if den == 0.0 {
        0.0
    } else {
        0.5 * (v0 - v2) / den
    }
}

/// Width of a sampled nonnegative profile around the sample `peak`, averaged
/// over both sides. Returns `(width, sub-sample peak position)` in samples.
pub fn profile_width(v: &[f64], peak: usize, mode: WidthMode) -> Result<(f64, f64)> {
    let n = v.len();
    if n < 3 || peak == 0 || peak + 1 >= n {
        return Err(Error::Measurement("peak must be interior to a profile of >= 3 samples".into()));
    }
    let top = v[peak];
    if !(top > 0.0) || v.iter().all(|&x| x == top) {
        return Err(Error::Measurement("profile has no peak".into()));
    }
    let centre = peak as f64 + parabolic_vertex(v[peak - 1], v[peak], v[peak + 1]);
    let side = |dir: isize| -> Result<f64> {
        let at = |k: isize| v[(peak as isize + dir * k) as usize];
        let limit = if dir > 0 { (n - 1 - peak) as isize } else { peak as isize };
        match mode {
            WidthMode::InvE => {
                let level = top / std::f64::consts::E;
                for k in 1..=limit {
                    if at(k) <= level {
                        let (a, b) = (at(k - 1), at(k));
                        let f = if a > 0.0 && b > 0.0 {
                            (a.ln() - level.ln()) / (a.ln() - b.ln())
                        } else {
                            (a - level) / (a - b)
                        };
                        let pos = peak as f64 + dir as f64 * ((k - 1) as f64 + f);
                        return Ok((pos - centre).abs());
                    }
                }
                Err(Error::Measurement("profile never drops to 1/e of its peak inside the grid".into()))
            }
            WidthMode::FirstZero => {
                for k in 1..limit {
                    if at(k) <= at(k - 1) && at(k) <= at(k + 1) && at(k) < top {
                        let off = parabolic_vertex(at(k - 1), at(k), at(k + 1));
                        let pos = peak as f64 + dir as f64 * (k as f64 + off);
                        return Ok((pos - centre).abs());
                    }
                }
                Err(Error::Measurement("no first minimum inside the grid".into()))
            }
        }
    };
    let w = 0.5 * (side(-1)? + side(1)?);
    Ok((w, centre))
}

/// Per-axis measurement through the image maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfMeasurement {
    pub peak_index: [usize; 3],
    /// Sub-voxel peak location in physical coordinates.
    pub peak_position: [f64; 3],
    /// Widths in physical units; `None` for axes with a single voxel.
    pub widths: [Option<f64>; 3],
}

/// Measures the magnitude image through its maximum along every axis with
/// more than one voxel. `power` raises magnitudes first (2 turns a simple
/// zero into a parabolic minimum).
pub fn measure_psf(image: &ImageGrid, modes: [WidthMode; 3], power: [f64; 3]) -> Result<PsfMeasurement> {
    let mags = image.magnitudes();
    let peak_val = mags.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(peak_val > 0.0) || mags.iter().all(|&v| v == peak_val) {
        return Err(Error::Measurement("image is flat; no peak to measure".into()));
    }
    let peak = image.argmax();
    let mut pos = image.point(peak);
    let mut widths = [None; 3];
    for axis in 0..3 {
        if image.dims[axis] < 2 {
            continue;
        }
        let line: Vec<f64> = image.line(peak, axis).iter().map(|v| v.norm().powf(power[axis])).collect();
        let (w, c) = profile_width(&line, peak[axis], modes[axis])?;
        widths[axis] = Some(w * image.spacing[axis]);
        pos[axis] = image.origin[axis] + c * image.spacing[axis];
    }
    Ok(PsfMeasurement {
        peak_index: peak,
        peak_position: pos,
        widths,
    })
}

/// Predicted and measured resolution of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub regime: Regime,
    pub b_eff: f64,
    pub a_eff: f64,
    pub bandwidth_eff: f64,
    /// Axes not measured by an experiment are `None`.
    pub predicted_cross_range: Option<f64>,
    pub predicted_range: Option<f64>,
    pub measured_cross_range: Option<f64>,
    pub measured_range: Option<f64>,
    pub cross_range_rel_error: Option<f64>,
    pub range_rel_error: Option<f64>,
    /// Fit diagnostics and auxiliary measurements.
    pub diagnostics: BTreeMap<String, f64>,
}

pub fn relative_error(measured: f64, predicted: f64) -> f64 {
    (measured - predicted) / predicted
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

const CSV_FIELDS: [&str; 11] = [
    "regime",
    "b_eff",
    "a_eff",
    "bandwidth_eff",
    "predicted_cross_range",
    "predicted_range",
    "measured_cross_range",
    "measured_range",
    "cross_range_rel_error",
    "range_rel_error",
    "diagnostics",
];

impl ResolutionReport {
    /// Key-value text (TOML).
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_text(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn csv_header() -> String {
        CSV_FIELDS.join(",")
    }

    /// One CSV row; diagnostics are packed as `key=value` pairs joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let diag: Vec<String> = self.diagnostics.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        format!(
            "{},{:?},{:?},{:?},{},{},{},{},{},{},{}",
            self.regime.name(),
            self.b_eff,
            self.a_eff,
            self.bandwidth_eff,
            opt_field(self.predicted_cross_range),
            opt_field(self.predicted_range),
            opt_field(self.measured_cross_range),
            opt_field(self.measured_range),
            opt_field(self.cross_range_rel_error),
            opt_field(self.range_rel_error),
            diag.join(";")
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim_end().split(',').collect();
        if f.len() != CSV_FIELDS.len() {
            return Err(Error::Format(format!("expected {} CSV fields, got {}", CSV_FIELDS.len(), f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let regime = match f[0] {
            "homogeneous-full" => Regime::HomogeneousFull,
            "paraxial-finite" => Regime::ParaxialFinite,
            "layered-weak" => Regime::LayeredWeak,
            "layered-strong" => Regime::LayeredStrong,
            other => return Err(Error::Format(format!("unknown regime {other:?}"))),
        };
        let mut diagnostics = BTreeMap::new();
        for kv in f[10].split(';').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad diagnostic {kv:?}")))?;
            diagnostics.insert(k.to_string(), num(v)?);
        }
        Ok(Self {
            regime,
            b_eff: num(f[1])?,
            a_eff: num(f[2])?,
            bandwidth_eff: num(f[3])?,
            predicted_cross_range: opt(f[4])?,
            predicted_range: opt(f[5])?,
            measured_cross_range: opt(f[6])?,
            measured_range: opt(f[7])?,
            cross_range_rel_error: opt(f[8])?,
            range_rel_error: opt(f[9])?,
            diagnostics,
        })
    }
}
