//! Kirchhoff migration of correlation matrices and active-array data, and
//! the closed-form point-spread functions they are measured against.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::effective_apertures;
use crate::correlation::{AnalyticCorrelation, CorrelationMatrix, TraceSet};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Regular 3D grid of search points with complex voxel values.
///
/// Values are row-major over `(ix, iy, iz)`: `iz` varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
    pub values: Vec<Complex64>,
}

impl ImageGrid {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::config(format!("image grid needs finite origin and spacing > 0, got {spacing:?}")));
        }
        if dims.contains(&0) {
            return Err(Error::config("image grid dimensions must be nonzero"));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
            values: vec![Complex64::new(0.0, 0.0); dims[0] * dims[1] * dims[2]],
        })
    }

    /// Grid centred on `center` with `half[k]` points on each side of it.
    pub fn centered(center: [f64; 3], spacing: [f64; 3], half: [usize; 3]) -> Result<Self> {
        let origin = [0, 1, 2].map(|k| center[k] - half[k] as f64 * spacing[k]);
        Self::new(origin, spacing, half.map(|h| 2 * h + 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    pub fn unravel(&self, n: usize) -> [usize; 3] {
        let iz = n % self.dims[2];
        let iy = (n / self.dims[2]) % self.dims[1];
        [n / (self.dims[1] * self.dims[2]), iy, iz]
    }

    pub fn point(&self, i: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| self.origin[k] + i[k] as f64 * self.spacing[k])
    }

    pub fn get(&self, i: [usize; 3]) -> Complex64 {
        self.values[self.index(i)]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Voxel of largest magnitude.
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.norm() > self.values[best].norm() {
                best = i;
            }
        }
        self.unravel(best)
    }

    /// Voxel values along `axis` through `at`.
    pub fn line(&self, at: [usize; 3], axis: usize) -> Vec<Complex64> {
        (0..self.dims[axis])
            .map(|k| {
                let mut i = at;
                i[axis] = k;
                self.get(i)
            })
            .collect()
    }
}

/// How travel times are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TravelTime {
    #[default]
    Exact,
    /// `(Δz + |Δx|²/(2Δz))/c0`, valid for narrow-angle rays.
    Paraxial,
}

impl TravelTime {
    pub fn eval(&self, from: [f64; 3], to: [f64; 3], c0: f64) -> Result<f64> {
        let dx = to[0] - from[0];
        let dy = to[1] - from[1];
        let dz = to[2] - from[2];
        match self {
            TravelTime::Exact => Ok((dx * dx + dy * dy + dz * dz).sqrt() / c0),
            TravelTime::Paraxial => {
                if !(dz > 0.0) {
                    return Err(Error::domain("paraxial travel time needs the search point below the array"));
                }
                Ok((dz + (dx * dx + dy * dy) / (2.0 * dz)) / c0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationOptions {
    pub c0: f64,
    pub travel_time: TravelTime,
    /// Restrict the second receiver index `q'` to this subset.
    pub secondary: Option<Vec<usize>>,
}

impl MigrationOptions {
    pub fn new(c0: f64) -> Self {
        Self {
            c0,
            travel_time: TravelTime::Exact,
            secondary: None,
        }
    }
}

/// Image plus the voxels whose travel times fell outside the data window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Migrated {
    pub image: ImageGrid,
    pub masked: Vec<bool>,
}

impl Migrated {
    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

/// Lag-sampled correlations that can be migrated.
pub trait LagSampled: Sync {
    fn receivers(&self) -> &[[f64; 3]];
    fn sample(&self, q: usize, qp: usize, tau: f64) -> Option<Complex64>;
}

impl LagSampled for CorrelationMatrix {
    fn receivers(&self) -> &[[f64; 3]] {
        &self.receivers
    }

    fn sample(&self, q: usize, qp: usize, tau: f64) -> Option<Complex64> {
        self.at(q, qp, tau).map(|v| Complex64::new(v, 0.0))
    }
}

impl LagSampled for AnalyticCorrelation {
    fn receivers(&self) -> &[[f64; 3]] {
        &self.receivers
    }

    fn sample(&self, q: usize, qp: usize, tau: f64) -> Option<Complex64> {
        self.at(q, qp, tau)
    }
}

/// `I_C(y^S) = (1/(N_q N_q')) Σ_{q,q'} C((|x_q−y^S| + |y^S−x_q'|)/c0, q, q')`.
///
/// Migrating the analytic correlation gives a complex image whose modulus is
/// the envelope of the real one.
pub fn migrate_correlations<C: LagSampled>(c: &C, grid: &ImageGrid, opts: &MigrationOptions) -> Result<Migrated> {
    let rec = c.receivers();
    let nq = rec.len();
    let secondary: Vec<usize> = match &opts.secondary {
        Some(s) => {
            if s.iter().any(|&q| q >= nq) || s.is_empty() {
                return Err(Error::config("secondary receiver subset is empty or out of range"));
            }
            s.clone()
        }
        None => (0..nq).collect(),
    };
    if nq == 0 {
        return Err(Error::config("no receivers to migrate"));
    }
    let norm = 1.0 / (nq * secondary.len()) as f64;
    let out: Vec<(Complex64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let y = grid.point(grid.unravel(n));
            let t: Vec<f64> = rec.iter().map(|&x| opts.travel_time.eval(x, y, opts.c0)).collect::<Result<_>>()?;
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..nq {
                for &qp in &secondary {
                    match c.sample(q, qp, t[q] + t[qp]) {
                        Some(v) => acc += v,
                        None => return Ok((Complex64::new(0.0, 0.0), true)),
                    }
                }
            }
            Ok((acc * norm, false))
        })
        .collect::<Result<_>>()?;
    finish(grid, out)
}

fn finish(grid: &ImageGrid, out: Vec<(Complex64, bool)>) -> Result<Migrated> {
    let mut image = grid.clone();
    let mut masked = Vec::with_capacity(out.len());
    for (v, (val, m)) in image.values.iter_mut().zip(out) {
        *v = val;
        masked.push(m);
    }
    let count = masked.iter().filter(|&&m| m).count();
    if count > 0 {
        crate::layered::jump::log_warning(&format!("{count} voxels masked: travel times outside the data window"));
    }
    Ok(Migrated { image, masked })
}

/// Active-array Kirchhoff migration
/// `I(y^S) = (1/(N_s N_r)) Σ p((|x_s−y^S| + |y^S−x_r|)/c0, x_r; x_s)`.
pub fn migrate_active(data: &TraceSet, grid: &ImageGrid, opts: &MigrationOptions) -> Result<Migrated> {
    data.validate()?;
    let (ns, nr) = (data.n_sources(), data.n_receivers());
    if ns == 0 || nr == 0 {
        return Err(Error::config("active migration needs sources and receivers"));
    }
    let norm = 1.0 / (ns * nr) as f64;
    let out: Vec<(Complex64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let y = grid.point(grid.unravel(n));
            let ts: Vec<f64> = data.sources.iter().map(|&x| opts.travel_time.eval(x, y, opts.c0)).collect::<Result<_>>()?;
            let tr: Vec<f64> = data.receivers.iter().map(|&x| opts.travel_time.eval(x, y, opts.c0)).collect::<Result<_>>()?;
            let mut acc = 0.0;
            for (s, &t_s) in ts.iter().enumerate() {
                for (r, &t_r) in tr.iter().enumerate() {
                    let x = (t_s + t_r - data.t0) / data.dt;
                    if !(x >= 0.0) || x > (data.n_samples - 1) as f64 {
                        return Ok((Complex64::new(0.0, 0.0), true));
                    }
                    let tr = data.trace(s, r);
                    let i = (x.floor() as usize).min(data.n_samples.saturating_sub(2));
                    let f = x - i as f64;
                    acc += if data.n_samples == 1 { tr[0] } else { tr[i] * (1.0 - f) + tr[i + 1] * f };
                }
            }
            Ok((Complex64::new(acc * norm, 0.0), false))
        })
        .collect::<Result<_>>()?;
    finish(grid, out)
}

/// Imaging regime selecting the point-spread function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    HomogeneousFull,
    ParaxialFinite,
    LayeredWeak,
    LayeredStrong,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::HomogeneousFull => "homogeneous-full",
            Regime::ParaxialFinite => "paraxial-finite",
            Regime::LayeredWeak => "layered-weak",
            Regime::LayeredStrong => "layered-strong",
        }
    }
}

/// Array, pulse and medium constants for the point-spread functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfParams {
    pub regime: Regime,
    pub c0: f64,
    pub lambda0: f64,
    /// Receiver array sidelength.
    pub a: f64,
    /// Source aperture.
    pub b: f64,
    /// Slab thickness; receivers sit at depth `L`.
    pub length: f64,
    pub reflector_depth: f64,
    /// Pulse bandwidth `B`.
    pub bandwidth: f64,
    /// Paraxial `γ̄2`.
    pub gamma2_bar: f64,
    /// Layered localization length at `ω0`.
    pub l_loc: f64,
}

impl PsfParams {
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.c0 / self.lambda0
    }

    pub fn gap(&self) -> f64 {
        self.reflector_depth - self.length
    }

    /// Rayleigh cross-range resolution `λ0(L_y−L)/a`.
    pub fn rayleigh_cross_range(&self) -> f64 {
        self.lambda0 * self.gap() / self.a
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.c0, self.lambda0, self.a, self.b, self.length, self.bandwidth];
        if pos.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::config("PSF parameters c0, λ0, a, b, L and B must be positive"));
        }
        if !(self.reflector_depth > self.length) {
            return Err(Error::config(format!(
                "reflector depth {} must exceed the slab thickness {}",
                self.reflector_depth, self.length
            )));
        }
        match self.regime {
            Regime::LayeredStrong if !(self.length > self.l_loc) => Err(Error::config(format!(
                "strong layered scattering needs L > L_loc, got L={}, L_loc={}",
                self.length, self.l_loc
            ))),
            Regime::LayeredWeak if !(self.length < self.l_loc) => Err(Error::config(format!(
                "weak layered scattering needs L < L_loc, got L={}, L_loc={}",
                self.length, self.l_loc
            ))),
            Regime::ParaxialFinite if !(self.gamma2_bar >= 0.0) => Err(Error::config("γ̄2 must be >= 0")),
            _ => Ok(()),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(1/a)∫_{−a/2}^{a/2} exp(−x²/a_eff² + i·s·x) dx`.
fn gaussian_window_transform(a: f64, a_eff: f64, s: f64) -> Complex64 {
    let rule = GaussLegendre::new(32);
    let panels = 8;
    let h = a / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = -0.5 * a + p as f64 * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let u = lo + 0.5 * h * (1.0 + x);
            acc += Complex64::from_polar((-(u * u) / (a_eff * a_eff)).exp(), s * u) * (0.5 * h * w);
        }
    }
    acc / a
}

/// Normalized closed-form imaging function at offset `ξ` (cross-range) and
/// `η` (range) from the reflector, which is assumed below the array centre.
pub fn theoretical_psf(params: &PsfParams, xi: [f64; 2], eta: f64) -> Result<Complex64> {
    params.validate()?;
    let d = params.gap();
    let k = std::f64::consts::PI * params.a / (params.lambda0 * d);
    let c0 = params.c0;
    let bw = params.bandwidth;
    let base_range = (-(bw * eta / c0).powi(2)).exp();
    let value = match params.regime {
        Regime::HomogeneousFull => {
            let s = sinc(k * xi[0]) * sinc(k * xi[1]);
            Complex64::new(s * s * base_range, 0.0)
        }
        Regime::ParaxialFinite => {
            let ap = effective_apertures(params)?;
            let s = params.omega0() / (c0 * d);
            let w0 = gaussian_window_transform(params.a, ap.a_eff, 0.0);
            let g = gaussian_window_transform(params.a, ap.a_eff, s * xi[0]) * gaussian_window_transform(params.a, ap.a_eff, s * xi[1])
                / (w0 * w0);
            g * sinc(k * xi[0]) * sinc(k * xi[1]) * base_range
        }
        Regime::LayeredWeak => {
            let a_eff = (d * params.b / params.reflector_depth).min(params.a);
            let ke = std::f64::consts::PI * a_eff / (params.lambda0 * d);
            Complex64::new(
                sinc(k * xi[0]) * sinc(k * xi[1]) * sinc(ke * xi[0]) * sinc(ke * xi[1]) * base_range,
                0.0,
            )
        }
        Regime::LayeredStrong => {
            let beta = bw * bw * params.length / (4.0 * params.omega0().powi(2) * params.l_loc);
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            let cross = sinc(k * xi[0])
                * sinc(k * xi[1])
                * (-(std::f64::consts::PI.powi(2)) * params.l_loc * r2 / (params.length * params.lambda0.powi(2))).exp();
            let range = (-(bw * eta / c0).powi(2) / (1.0 + beta)).exp();
            let phase = -bw * bw * params.length * eta / (2.0 * params.omega0() * params.l_loc * c0 * (1.0 + beta));
            Complex64::from_polar(cross * range, phase)
        }
    };
    Ok(value)
}
