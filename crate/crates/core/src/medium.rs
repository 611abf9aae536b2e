//! Random-medium models, their covariance functions and phase screens.
//!
//! The isotropic model describes index fluctuations whose z-integrated
//! covariance `γ0(x)` drives the Brownian field of the Itô–Schrödinger
//! equation. The layered model is summarised by its integrated covariance `γ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Fft2, Grid2};
use crate::rng::stream_rng;

/// Minimum number of grid samples per correlation length.
pub const MIN_SAMPLES_PER_CORRELATION_LENGTH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceModel {
    /// `E[μ(0,0)μ(x,z)] = σ² exp(-(|x|²+z²)/ℓc²)`.
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicMediumSpec {
    pub sigma2: f64,
    pub ell_c: f64,
    /// Thickness of the random slab.
    pub length: f64,
    #[serde(default)]
    pub covariance_model: CovarianceModel,
}

impl IsotropicMediumSpec {
    pub fn new(sigma2: f64, ell_c: f64, length: f64) -> Result<Self> {
        let spec = Self {
            sigma2,
            ell_c,
            length,
            covariance_model: CovarianceModel::Gaussian,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Medium with a prescribed `γ0(0)` instead of `σ²`.
    pub fn with_gamma0_at_origin(gamma0_0: f64, ell_c: f64, length: f64) -> Result<Self> {
        Self::new(gamma0_0 / (ell_c * PI.sqrt()), ell_c, length)
    }

    pub fn homogeneous(ell_c: f64, length: f64) -> Result<Self> {
        Self::new(0.0, ell_c, length)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if !(self.ell_c > 0.0 && self.ell_c.is_finite()) {
            return Err(Error::config(format!("ell_c must be > 0, got {}", self.ell_c)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config(format!("slab length must be > 0, got {}", self.length)));
        }
        Ok(())
    }

    /// `γ0` as a function of the transverse distance.
    pub fn gamma0_radial(&self, r: f64) -> f64 {
        match self.covariance_model {
            CovarianceModel::Gaussian => {
                self.sigma2 * self.ell_c * PI.sqrt() * (-(r * r) / (self.ell_c * self.ell_c)).exp()
            }
        }
    }

    pub fn gamma0(&self, x: [f64; 2]) -> f64 {
        self.gamma0_radial(x[0].hypot(x[1]))
    }

    /// Curvature coefficient in `γ0(x) = γ0(0) − γ̄2|x|² + o(|x|²)`.
    pub fn gamma2_bar(&self) -> f64 {
        match self.covariance_model {
            CovarianceModel::Gaussian => self.gamma0_radial(0.0) / (self.ell_c * self.ell_c),
        }
    }

    /// `γ2(x) = ∫₀¹ γ0(0) − γ0(xs) ds`.
    pub fn gamma2_radial(&self, r: f64) -> f64 {
        match self.covariance_model {
            CovarianceModel::Gaussian => {
                let u = r.abs() / self.ell_c;
                self.gamma0_radial(0.0) * gaussian_gamma2_shape(u)
            }
        }
    }

    pub fn gamma2(&self, x: [f64; 2]) -> f64 {
        self.gamma2_radial(x[0].hypot(x[1]))
    }

    /// Damping rate of the mean field per unit depth, `γ0(0)ω²/(8c0²)`.
    pub fn mean_field_decay_rate(&self, omega: f64, c0: f64) -> f64 {
        self.gamma0_radial(0.0) * omega * omega / (8.0 * c0 * c0)
    }

    /// Scattering mean free path `8c0²/(γ0(0)ω²)`.
    pub fn scattering_mean_free_path(&self, omega: f64, c0: f64) -> f64 {
        1.0 / self.mean_field_decay_rate(omega, c0)
    }
}

/// `1 − (√π/2u)·erf(u)`, with a series near the origin where the closed form cancels.
fn gaussian_gamma2_shape(u: f64) -> f64 {
    if u < 0.5 {
        let u2 = u * u;
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..40 {
            term *= -u2 / n as f64;
            let t = -term / (2 * n + 1) as f64;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - PI.sqrt() / (2.0 * u) * libm::erf(u)
    }
}

/// Randomly layered slab summarised by its integrated covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayeredMediumSpec {
    pub gamma: f64,
    pub length: f64,
    pub c0: f64,
}

impl LayeredMediumSpec {
    pub fn new(gamma: f64, length: f64, c0: f64) -> Result<Self> {
        let spec = Self { gamma, length, c0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Slab whose localization length at `omega0` is `l_loc`.
    pub fn with_localization_length(l_loc: f64, omega0: f64, length: f64, c0: f64) -> Result<Self> {
        if !(l_loc > 0.0) {
            return Err(Error::config("localization length must be positive"));
        }
        Self::new(4.0 * c0 * c0 / (l_loc * omega0 * omega0), length, c0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("integrated covariance must be >= 0, got {}", self.gamma)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config(format!("slab length must be > 0, got {}", self.length)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::config(format!("background speed must be > 0, got {}", self.c0)));
        }
        Ok(())
    }
}

/// Real Gaussian screens `B_k(x)` with transverse covariance `γ0(x−x')·dz`.
#[derive(Debug, Clone)]
pub struct PhaseScreenSet {
    pub screens: Vec<Vec<f64>>,
    pub dz: f64,
    pub grid: Grid2,
    pub seed: u64,
}

/// Spectral sampler for stationary screens on a periodic grid.
///
/// Holds the square roots of the circulant eigenvalues so each screen costs
/// one inverse FFT.
#[derive(Debug, Clone)]
pub struct ScreenSampler {
    grid: Grid2,
    fft: Fft2,
    amplitudes: Vec<f64>,
    min_weight_ratio: f64,
    zero: bool,
}

impl ScreenSampler {
    pub fn new(spec: &IsotropicMediumSpec, grid: &Grid2, dz: f64) -> Result<Self> {
        spec.validate()?;
        check_resolution(spec, grid)?;
        if !(dz > 0.0 && dz.is_finite()) {
            return Err(Error::config(format!("screen step dz must be > 0, got {dz}")));
        }
        let fft = Fft2::new(grid);
        let mut cov: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new(spec.gamma0(grid.periodic_offset(i)) * dz, 0.0))
            .collect();
        fft.forward(&mut cov);
        let max = cov.iter().map(|c| c.re).fold(0.0f64, f64::max);
        let min = cov.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        let n = grid.len() as f64;
        let amplitudes = cov.iter().map(|c| (c.re.max(0.0) / n).sqrt()).collect();
        let min_weight_ratio = if max > 0.0 { min / max } else { 0.0 };
        if min_weight_ratio < -1e-12 {
            return Err(Error::numerical(format!(
                "sampled covariance is not positive definite on this grid (min/max spectral weight {min_weight_ratio:.3e}); widen the grid relative to the correlation length"
            )));
        }
        Ok(Self {
            grid: *grid,
            fft,
            amplitudes,
            min_weight_ratio,
            zero: spec.sigma2 == 0.0,
        })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    /// Smallest spectral weight relative to the largest.
    pub fn min_weight_ratio(&self) -> f64 {
        self.min_weight_ratio
    }

    /// Screen for stream `step` of the generator seeded with `seed`.
    pub fn sample(&self, seed: u64, step: u64) -> Vec<f64> {
        if self.zero {
            return vec![0.0; self.grid.len()];
        }
        let mut rng = stream_rng(seed, step);
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * (a * std::f64::consts::FRAC_1_SQRT_2)
            })
            .collect();
        self.fft.inverse(&mut buf);
        buf.iter().map(|c| std::f64::consts::SQRT_2 * c.re).collect()
    }
}

fn check_resolution(spec: &IsotropicMediumSpec, grid: &Grid2) -> Result<()> {
    let per = spec.ell_c / grid.dx.max(grid.dy);
    if per < MIN_SAMPLES_PER_CORRELATION_LENGTH {
        return Err(Error::config(format!(
            "grid spacing {} resolves the correlation length {} with only {per:.2} samples (need >= {MIN_SAMPLES_PER_CORRELATION_LENGTH})",
            grid.dx.max(grid.dy),
            spec.ell_c
        )));
    }
    Ok(())
}

/// Independent screens for `n_steps` slabs of thickness `dz`.
pub fn generate_screens(
    spec: &IsotropicMediumSpec,
    grid: &Grid2,
    dz: f64,
    n_steps: usize,
    seed: u64,
) -> Result<PhaseScreenSet> {
    let sampler = ScreenSampler::new(spec, grid, dz)?;
    let screens = (0..n_steps)
        .into_par_iter()
        .map(|k| sampler.sample(seed, k as u64))
        .collect();
    Ok(PhaseScreenSet {
        screens,
        dz,
        grid: *grid,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::AdaptiveGl;

    fn spec() -> IsotropicMediumSpec {
        IsotropicMediumSpec::new(0.3, 2.0, 10.0).unwrap()
    }

    #[test]
    fn gamma0_at_origin_is_gaussian_z_integral() {
        let s = spec();
        assert!((s.gamma0([0.0, 0.0]) - 0.3 * 2.0 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(s.gamma0([1.3, -0.2]), s.gamma0([-1.3, 0.2]));
        let z = IsotropicMediumSpec::new(0.0, 2.0, 10.0).unwrap();
        assert_eq!(z.gamma0([0.7, 0.1]), 0.0);
    }

    #[test]
    fn gamma2_matches_quadrature() {
        let s = spec();
        let q = AdaptiveGl::new(12, 1e-15, 1e-14);
        for &r in &[1e-3, 0.05, 0.4, 0.99, 1.0, 2.5, 7.0, 30.0] {
            let g00 = s.gamma0_radial(0.0);
            let oracle = q.integrate(0.0, 1.0, |t| g00 - s.gamma0_radial(r * t)).value;
            let v = s.gamma2_radial(r);
            assert!((v - oracle).abs() < 1e-10 * g00, "r={r}: {v} vs {oracle}");
        }
    }

    #[test]
    fn gamma2_small_offset_limit() {
        let s = spec();
        assert_eq!(s.gamma2([0.0, 0.0]), 0.0);
        let r = 1e-4;
        let ratio = s.gamma2_radial(r) / (r * r);
        assert!((ratio - s.gamma2_bar() / 3.0).abs() < 1e-8 * s.gamma2_bar());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = Grid2::square(32, 0.6).unwrap();
        let err = ScreenSampler::new(&spec(), &g, 1.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_variance_gives_zero_screens() {
        let g = Grid2::square(32, 0.5).unwrap();
        let s = IsotropicMediumSpec::new(0.0, 2.0, 10.0).unwrap();
        let set = generate_screens(&s, &g, 1.0, 3, 7).unwrap();
        assert!(set.screens.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn spectral_weights_nonnegative() {
        let g = Grid2::square(64, 0.5).unwrap();
        let sampler = ScreenSampler::new(&spec(), &g, 0.5).unwrap();
        assert!(sampler.min_weight_ratio() >= -1e-12);
    }

    #[test]
    fn layered_spec_from_localization_length() {
        let m = LayeredMediumSpec::with_localization_length(3.0, 2.0, 10.0, 1.5).unwrap();
        assert!((4.0 * 1.5 * 1.5 / (m.gamma * 4.0) - 3.0).abs() < 1e-14);
        assert!(LayeredMediumSpec::new(-1.0, 1.0, 1.0).is_err());
    }
}
