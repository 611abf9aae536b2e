//! Split-step spectral solver of the Itô–Schrödinger equation
//! `2i(ω/c0)dφ + Δ⊥φ dz + (ω²/c0²)φ∘dB = 0`.
//!
//! Diffraction is applied exactly in Fourier space with the multiplier
//! `exp(−i c0|κ|²dz/(2ω))`; the random term is the phase rotation
//! `exp(iωB_k(x)/(2c0))` by the screen of each slab. With independent
//! screens of covariance `γ0·dz` the mean field decays by
//! `exp(−γ0(0)ω²dz/(8c0²))` per step.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Fft2, Grid2};
use crate::medium::{IsotropicMediumSpec, PhaseScreenSet, ScreenSampler};
use crate::rng::derive_seed;
use crate::stats::{ComplexEstimate, ComplexMean};

/// Paraxial free-space fundamental solution
/// `ω/(2iπc0(z−z0))·exp(iω|x−x0|²/(2c0(z−z0)))`.
pub fn free_space_green(omega: f64, c0: f64, x: [f64; 2], z: f64, x0: [f64; 2], z0: f64) -> Result<Complex64> {
    let dz = z - z0;
    if !(dz > 0.0) {
        return Err(Error::domain(format!("free-space Green's function needs z > z0, got z={z}, z0={z0}")));
    }
    let r2 = (x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2);
    let pre = Complex64::new(0.0, -omega / (2.0 * PI * c0 * dz));
    Ok(pre * Complex64::from_polar(1.0, omega * r2 / (2.0 * c0 * dz)))
}

/// Fresnel diffraction of the unit beam `exp(−|x|²/r0²)` over a distance `z`.
pub fn gaussian_beam(omega: f64, c0: f64, r0: f64, x: [f64; 2], z: f64) -> Complex64 {
    let q = Complex64::new(r0 * r0, 2.0 * c0 * z / omega);
    let r2 = x[0] * x[0] + x[1] * x[1];
    (r0 * r0) / q * (-(r2 / q)).exp()
}

/// Transverse field envelope at one frequency and depth.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub omega: f64,
    pub values: Vec<Complex64>,
    pub z: f64,
    pub grid: Grid2,
}

impl SpectralField {
    pub fn from_fn(grid: &Grid2, omega: f64, z: f64, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        Self {
            omega,
            values: (0..grid.len()).map(|i| f(grid.point(i))).collect(),
            z,
            grid: *grid,
        }
    }

    /// Unit-mass Gaussian `exp(−|x−x0|²/r0²)/(πr0²)`, a smoothed point source.
    pub fn point_source(grid: &Grid2, omega: f64, x0: [f64; 2], r0: f64) -> Self {
        let norm = 1.0 / (PI * r0 * r0);
        Self::from_fn(grid, omega, 0.0, |p| {
            let r2 = (p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2);
            Complex64::new(norm * (-r2 / (r0 * r0)).exp(), 0.0)
        })
    }

    /// Point source at `x0` built in the wavenumber domain: a flat spectrum
    /// rolled off by `exp(−(|κ|/κc)⁸)` with `κc = cutoff·π/max(dx,dy)`.
    ///
    /// Unlike a narrow Gaussian this keeps all propagation angles below the
    /// cutoff at equal weight, and `x0` need not lie on a node.
    pub fn band_limited_point(grid: &Grid2, omega: f64, x0: [f64; 2], cutoff: f64) -> Self {
        let kc = cutoff * PI / grid.dx.max(grid.dy);
        // FFT bin phases are relative to the first node.
        let (ox, oy) = (x0[0] - grid.x(0), x0[1] - grid.y(0));
        let mut values: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let (a, b) = (grid.kx(i % grid.nx), grid.ky(i / grid.nx));
                let r = (a * a + b * b).sqrt() / kc;
                Complex64::from_polar((-r.powi(8)).exp(), -(a * ox + b * oy))
            })
            .collect();
        Fft2::new(grid).inverse_normalized(&mut values);
        let scale = 1.0 / grid.cell_area();
        for v in &mut values {
            *v *= scale;
        }
        Self {
            omega,
            values,
            z: 0.0,
            grid: *grid,
        }
    }

    /// Discrete `L²` norm including the cell area.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub c0: f64,
    pub dz: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Fraction of the grid width on each side covered by the absorbing taper.
    pub absorbing_margin: f64,
}

impl PropagationConfig {
    pub fn new(c0: f64, length: f64, n_steps: usize, absorbing_margin: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::config("propagation needs at least one step"));
        }
        let cfg = Self {
            c0,
            dz: length / n_steps as f64,
            n_steps,
            scheme: Scheme::Strang,
            absorbing_margin,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.dz > 0.0 && self.n_steps > 0) {
            return Err(Error::config("propagation needs c0 > 0, dz > 0 and n_steps > 0"));
        }
        if !(0.0..0.5).contains(&self.absorbing_margin) {
            return Err(Error::config(format!(
                "absorbing margin must lie in [0, 0.5), got {}",
                self.absorbing_margin
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.dz * self.n_steps as f64
    }
}

/// Order in which screens are traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Screen `k` acts on step `k` (downward, from z = 0).
    Forward,
    /// Screen `n−1−k` acts on step `k`; this is the transpose of the forward
    /// propagator and yields reciprocal Green's functions.
    Reversed,
}

/// Precomputed multipliers for one grid, frequency and step size.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid2,
    fft: Fft2,
    omega: f64,
    cfg: PropagationConfig,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    window: Option<Vec<f64>>,
}

impl Propagator {
    pub fn new(grid: &Grid2, omega: f64, cfg: &PropagationConfig) -> Result<Self> {
        cfg.validate()?;
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::config(format!("frequency must be > 0, got {omega}")));
        }
        let k2 = grid.k_squared();
        let phase = |k2: f64, dz: f64| Complex64::from_polar(1.0, -cfg.c0 * k2 * dz / (2.0 * omega));
        let half = k2.iter().map(|&k| phase(k, 0.5 * cfg.dz)).collect();
        let full = k2.iter().map(|&k| phase(k, cfg.dz)).collect();
        Ok(Self {
            grid: *grid,
            fft: Fft2::new(grid),
            omega,
            cfg: *cfg,
            half,
            full,
            window: absorbing_window(grid, cfg.absorbing_margin),
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    /// Exact free-space propagation over `distance` in one spectral step.
    pub fn free_step(&self, values: &mut [Complex64], distance: f64) {
        self.fft.forward(values);
        let k2 = self.grid.k_squared();
        for (v, k) in values.iter_mut().zip(k2) {
            *v *= Complex64::from_polar(1.0, -self.cfg.c0 * k * distance / (2.0 * self.omega));
        }
        self.fft.inverse_normalized(values);
    }

    /// Runs `n_steps` Strang steps; `screen(k)` supplies the screen of step `k`.
    ///
    /// Consecutive half diffractions are fused, so each step costs two FFTs.
    /// The absorbing window, when present, is applied together with the phase.
    pub fn run<S>(&self, values: &mut [Complex64], mut screen: S) -> Result<()>
    where
        S: FnMut(usize) -> Option<Vec<f64>>,
    {
        if values.len() != self.grid.len() {
            return Err(Error::domain("field does not match propagator grid"));
        }
        let scale = 1.0 / self.grid.len() as f64;
        let rot = self.omega / (2.0 * self.cfg.c0);
        self.fft.forward(values);
        mul(values, &self.half);
        for k in 0..self.cfg.n_steps {
            self.fft.inverse(values);
            let b = screen(k);
            match (&b, &self.window) {
                (Some(b), Some(w)) => {
                    for ((v, bk), wk) in values.iter_mut().zip(b).zip(w) {
                        *v *= Complex64::from_polar(scale * wk, rot * bk);
                    }
                }
                (Some(b), None) => {
                    for (v, bk) in values.iter_mut().zip(b) {
                        *v *= Complex64::from_polar(scale, rot * bk);
                    }
                }
                (None, Some(w)) => {
                    for (v, wk) in values.iter_mut().zip(w) {
                        *v *= scale * wk;
                    }
                }
                (None, None) => {
                    for v in values.iter_mut() {
                        *v *= scale;
                    }
                }
            }
            self.fft.forward(values);
            if k + 1 < self.cfg.n_steps {
                mul(values, &self.full);
            } else {
                mul(values, &self.half);
            }
        }
        self.fft.inverse_normalized(values);
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numerical("non-finite value in propagated field"));
        }
        Ok(())
    }

    /// Propagates a field through a screen set (or free space when `None`).
    pub fn propagate(
        &self,
        field: &SpectralField,
        screens: Option<&PhaseScreenSet>,
        direction: Direction,
    ) -> Result<SpectralField> {
        if field.grid != self.grid {
            return Err(Error::domain("field grid does not match propagator grid"));
        }
        if (field.omega - self.omega).abs() > 1e-12 * self.omega {
            return Err(Error::domain("field frequency does not match propagator"));
        }
        if let Some(s) = screens {
            if s.grid != self.grid {
                return Err(Error::domain("screen grid does not match field grid"));
            }
            if s.screens.len() < self.cfg.n_steps {
                return Err(Error::domain(format!(
                    "{} screens supplied for {} steps",
                    s.screens.len(),
                    self.cfg.n_steps
                )));
            }
            if (s.dz - self.cfg.dz).abs() > 1e-12 * self.cfg.dz {
                return Err(Error::domain("screen step does not match propagation step"));
            }
        }
        let n = self.cfg.n_steps;
        let mut out = field.clone();
        self.run(&mut out.values, |k| {
            screens.map(|s| {
                let idx = match direction {
                    Direction::Forward => k,
                    Direction::Reversed => n - 1 - k,
                };
                s.screens[idx].clone()
            })
        })?;
        out.z = field.z + self.cfg.length();
        Ok(out)
    }
}

fn mul(v: &mut [Complex64], m: &[Complex64]) {
    for (a, b) in v.iter_mut().zip(m) {
        *a *= b;
    }
}

/// Separable raised-cosine taper over the outer `margin` fraction of each axis.
pub fn absorbing_window(grid: &Grid2, margin: f64) -> Option<Vec<f64>> {
    if margin <= 0.0 {
        return None;
    }
    let axis = |n: usize| -> Vec<f64> {
        let m = (margin * n as f64).round().max(1.0);
        (0..n)
            .map(|i| {
                let d = (i as f64).min((n - 1 - i) as f64);
                if d >= m {
                    1.0
                } else {
                    0.5 * (1.0 - (PI * d / m).cos())
                }
            })
            .collect()
    };
    let wx = axis(grid.nx);
    let wy = axis(grid.ny);
    Some((0..grid.len()).map(|i| wx[i % grid.nx] * wy[i / grid.nx]).collect())
}

/// Free-function form of [`Propagator::propagate`].
pub fn propagate(field: &SpectralField, screens: Option<&PhaseScreenSet>, cfg: &PropagationConfig) -> Result<SpectralField> {
    Propagator::new(&field.grid, field.omega, cfg)?.propagate(field, screens, Direction::Forward)
}

/// Settings of a moment experiment beyond the medium itself.
#[derive(Debug, Clone)]
pub struct MomentConfig {
    pub grid: Grid2,
    pub propagation: PropagationConfig,
    /// Width of the Gaussian approximation of the point source.
    pub source_width: f64,
    /// Pairs of grid indices `(x, x')` at which `E[G(x)conj(G(x'))]` is recorded.
    pub pairs: Vec<(usize, usize)>,
    /// Realizations dispatched together; results do not depend on it.
    pub batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMoment {
    pub i: usize,
    pub j: usize,
    pub estimate: ComplexEstimate,
}

/// Monte-Carlo moments of the random fundamental solution.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub omega: f64,
    pub mean_field: Vec<ComplexEstimate>,
    /// Same source and solver without screens.
    pub free_field: Vec<Complex64>,
    pub second_moment: Vec<PairMoment>,
    pub n_realizations: usize,
}

impl MomentEstimate {
    /// `E[G]/G_free` at node `i` with the standard error of its modulus.
    pub fn mean_ratio(&self, i: usize) -> (f64, f64) {
        let f = self.free_field[i].norm();
        let e = &self.mean_field[i];
        (e.mean.norm() / f, e.stderr_abs() / f)
    }

    /// Real part of `E[G(x)conj(G(x'))]/(G_free(x)conj(G_free(x')))` and its standard error.
    pub fn second_moment_ratio(&self, k: usize) -> (f64, f64) {
        let p = &self.second_moment[k];
        let d = self.free_field[p.i] * self.free_field[p.j].conj();
        let r = p.estimate.mean / d;
        let dn = d.norm();
        let (c, s) = (d.re / dn, d.im / dn);
        let se = ((c * p.estimate.stderr_re).powi(2) + (s * p.estimate.stderr_im).powi(2)).sqrt() / dn;
        (r.re, se)
    }
}

/// Averages `G` and `G(x)conj(G(x'))` over independent screen sets.
pub fn estimate_moments(
    omega: f64,
    x0: [f64; 2],
    medium: &IsotropicMediumSpec,
    n_realizations: usize,
    seed: u64,
    cfg: &MomentConfig,
) -> Result<MomentEstimate> {
    if n_realizations < 100 {
        return Err(Error::config(format!("moment estimation needs >= 100 realizations, got {n_realizations}")));
    }
    if (cfg.propagation.length() - medium.length).abs() > 1e-9 * medium.length {
        return Err(Error::config("propagation length does not match slab thickness"));
    }
    for &(i, j) in &cfg.pairs {
        if i >= cfg.grid.len() || j >= cfg.grid.len() {
            return Err(Error::config("moment pair index outside grid"));
        }
    }
    let prop = Propagator::new(&cfg.grid, omega, &cfg.propagation)?;
    let sampler = ScreenSampler::new(medium, &cfg.grid, cfg.propagation.dz)?;
    let source = SpectralField::point_source(&cfg.grid, omega, x0, cfg.source_width);
    let mut free = source.values.clone();
    prop.run(&mut free, |_| None)?;

    let mut mean = vec![ComplexMean::default(); cfg.grid.len()];
    let mut pairs = vec![ComplexMean::default(); cfg.pairs.len()];
    let batch = cfg.batch.max(1);
    let mut start = 0;
    while start < n_realizations {
        let end = (start + batch).min(n_realizations);
        let fields: Vec<Result<Vec<Complex64>>> = (start..end)
            .into_par_iter()
            .map(|r| {
                let rs = derive_seed(seed, r as u64);
                let mut v = source.values.clone();
                prop.run(&mut v, |k| Some(sampler.sample(rs, k as u64)))
                    .map_err(|e| Error::numerical(format!("realization {r}: {e}")))?;
                Ok(v)
            })
            .collect();
        for f in fields {
            let f = f?;
            for (acc, v) in mean.iter_mut().zip(&f) {
                acc.push(*v);
            }
            for (acc, &(i, j)) in pairs.iter_mut().zip(&cfg.pairs) {
                acc.push(f[i] * f[j].conj());
            }
        }
        start = end;
    }
    Ok(MomentEstimate {
        omega,
        mean_field: mean.iter().map(|m| m.estimate()).collect(),
        free_field: free,
        second_moment: cfg
            .pairs
            .iter()
            .zip(&pairs)
            .map(|(&(i, j), m)| PairMoment { i, j, estimate: m.estimate() })
            .collect(),
        n_realizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::generate_screens;

    #[test]
    fn band_limited_point_peaks_at_source() {
        let g = Grid2::square(64, 0.5).unwrap();
        let x0 = [3.0, -2.5];
        let f = SpectralField::band_limited_point(&g, 5.0, x0, 0.8);
        let best = (0..g.len()).max_by(|&i, &j| f.values[i].norm().total_cmp(&f.values[j].norm())).unwrap();
        assert_eq!(g.point(best), x0);
        let mass: Complex64 = f.values.iter().sum::<Complex64>() * g.cell_area();
        assert!((mass - 1.0).norm() < 1e-12);
    }

    #[test]
    fn green_prefactor_and_symmetry() {
        let (w, c) = (3.0, 1.5);
        let g = free_space_green(w, c, [0.2, 0.1], 4.0, [0.2, 0.1], 1.0).unwrap();
        assert!((g.norm() - w / (2.0 * PI * c * 3.0)).abs() < 1e-15);
        let a = free_space_green(w, c, [1.0, -2.0], 5.0, [0.3, 0.4], 0.0).unwrap();
        let b = free_space_green(w, c, [0.3, 0.4], 5.0, [1.0, -2.0], 0.0).unwrap();
        assert_eq!(a, b);
        assert!(free_space_green(w, c, [0.0; 2], 1.0, [0.0; 2], 1.0).is_err());
    }

    #[test]
    fn gaussian_beam_tends_to_green() {
        let (w, c, z) = (2.0, 1.0, 50.0);
        let r0 = 1e-3;
        let mass = PI * r0 * r0;
        let x = [0.7, -0.4];
        let beam = gaussian_beam(w, c, r0, x, z) / mass;
        let g = free_space_green(w, c, x, z, [0.0; 2], 0.0).unwrap();
        assert!((beam - g).norm() / g.norm() < 1e-6);
    }

    #[test]
    fn steps_are_unitary_without_window() {
        let g = Grid2::square(64, 0.5).unwrap();
        let medium = IsotropicMediumSpec::new(0.01, 2.0, 8.0).unwrap();
        let cfg = PropagationConfig::new(1.0, 8.0, 8, 0.0).unwrap();
        let screens = generate_screens(&medium, &g, cfg.dz, 8, 3).unwrap();
        let f = SpectralField::point_source(&g, 4.0, [0.5, 0.0], 1.0);
        let out = propagate(&f, Some(&screens), &cfg).unwrap();
        let rel = (out.l2_norm() - f.l2_norm()).abs() / f.l2_norm();
        assert!(rel < 1e-12 * 8.0, "norm drift {rel}");
        assert_eq!(out.z, 8.0);
    }

    #[test]
    fn free_semigroup() {
        let g = Grid2::square(64, 0.5).unwrap();
        let f = SpectralField::point_source(&g, 3.0, [0.0, 0.0], 1.5);
        let many = propagate(&f, None, &PropagationConfig::new(1.0, 12.0, 6, 0.0).unwrap()).unwrap();
        let one = propagate(&f, None, &PropagationConfig::new(1.0, 12.0, 1, 0.0).unwrap()).unwrap();
        let num: f64 = many.values.iter().zip(&one.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = one.values.iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn reversed_direction_is_transpose() {
        let g = Grid2::square(64, 0.5).unwrap();
        let medium = IsotropicMediumSpec::new(0.05, 2.0, 6.0).unwrap();
        let cfg = PropagationConfig::new(1.0, 6.0, 3, 0.1).unwrap();
        let screens = generate_screens(&medium, &g, cfg.dz, 3, 11).unwrap();
        let p = Propagator::new(&g, 5.0, &cfg).unwrap();
        let (a, b) = (g.index(20, 24), g.index(40, 34));
        let delta = |i: usize| {
            let mut f = SpectralField::from_fn(&g, 5.0, 0.0, |_| Complex64::new(0.0, 0.0));
            f.values[i] = Complex64::new(1.0, 0.0);
            f
        };
        let fwd = p.propagate(&delta(a), Some(&screens), Direction::Forward).unwrap();
        let rev = p.propagate(&delta(b), Some(&screens), Direction::Reversed).unwrap();
        assert!((fwd.values[b] - rev.values[a]).norm() < 1e-14);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let g = Grid2::square(64, 0.5).unwrap();
        let h = Grid2::square(48, 0.5).unwrap();
        let medium = IsotropicMediumSpec::new(0.05, 2.0, 2.0).unwrap();
        let cfg = PropagationConfig::new(1.0, 2.0, 2, 0.0).unwrap();
        let screens = generate_screens(&medium, &h, cfg.dz, 2, 1).unwrap();
        let f = SpectralField::point_source(&g, 1.0, [0.0; 2], 1.0);
        assert!(matches!(propagate(&f, Some(&screens), &cfg), Err(Error::Domain(_))));
        assert!(PropagationConfig::new(1.0, 2.0, 2, 0.5).is_err());
    }
}
