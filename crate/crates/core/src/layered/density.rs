//! Spectral density `U(ω,κ,ξ)` as the law of `ξ = 2c0(κ)∫₀^L N(z)dz`, and the
//! truncation function `Ψ_eff` obtained by ray-tracing the source density
//! against it.

use serde::{Deserialize, Serialize};

use super::jump::{simulate_ensemble, EnsembleOptions, JumpProcessParams};
use crate::error::{Error, Result};
use crate::stats::mean_stderr;
use crate::survey::SourceDensity;

/// Histogram estimate of `U` with the atom at `ξ = 0` kept separate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDensityEstimate {
    /// Bin edges; bin `i` is `[edges[i], edges[i+1])`.
    pub xi_edges: Vec<f64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Probability of `ξ = 0` (paths that never jumped).
    pub atom: f64,
    pub atom_stderr: f64,
    /// Probability beyond the last edge.
    pub overflow: f64,
    pub n_paths: usize,
    pub cap_hits: usize,
}

impl SpectralDensityEstimate {
    pub fn xi_centers(&self) -> Vec<f64> {
        self.xi_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Atom plus continuous part plus overflow.
    pub fn total_mass(&self) -> f64 {
        let cont: f64 = self
            .density
            .iter()
            .zip(self.xi_edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        self.atom + cont + self.overflow
    }
}

/// How the `ξ` axis is binned.
#[derive(Debug, Clone, PartialEq)]
pub enum XiBins {
    Edges(Vec<f64>),
    FreedmanDiaconis,
}

pub fn spectral_density(params: &JumpProcessParams, n_paths: usize, bins: &XiBins, seed: u64) -> Result<SpectralDensityEstimate> {
    if n_paths < 10_000 {
        return Err(Error::config(format!("spectral density needs >= 10^4 paths, got {n_paths}")));
    }
    let ens = simulate_ensemble(params, n_paths, seed, EnsembleOptions::default())?;
    let ck = params.mode_velocity()?;
    let xi: Vec<f64> = ens.integrals.iter().map(|a| 2.0 * ck * a).collect();
    let m = n_paths as f64;
    let zeros = xi.iter().filter(|&&v| v == 0.0).count() as f64;
    let atom = zeros / m;
    let positive: Vec<f64> = xi.iter().copied().filter(|&v| v > 0.0).collect();
    let edges = match bins {
        XiBins::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0])) || e[0] < 0.0 {
                return Err(Error::config("ξ bin edges must be increasing and nonnegative"));
            }
            e.clone()
        }
        XiBins::FreedmanDiaconis => freedman_diaconis_edges(&positive),
    };
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    let mut overflow = 0usize;
    for &v in &positive {
        if v >= edges[nb] {
            overflow += 1;
            continue;
        }
        if v < edges[0] {
            continue;
        }
        let i = edges.partition_point(|&e| e <= v) - 1;
        counts[i] += 1;
    }
    let mut density = Vec::with_capacity(nb);
    let mut stderr = Vec::with_capacity(nb);
    for (c, w) in counts.iter().zip(edges.windows(2)) {
        let p = *c as f64 / m;
        let width = w[1] - w[0];
        density.push(p / width);
        stderr.push((p * (1.0 - p) / m).sqrt() / width);
    }
    Ok(SpectralDensityEstimate {
        xi_edges: edges,
        density,
        stderr,
        atom,
        atom_stderr: (atom * (1.0 - atom) / m).sqrt(),
        overflow: overflow as f64 / m,
        n_paths,
        cap_hits: ens.cap_hits,
    })
}

fn freedman_diaconis_edges(xs: &[f64]) -> Vec<f64> {
    if xs.len() < 4 {
        return vec![0.0, 1.0];
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |f: f64| s[((s.len() - 1) as f64 * f).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let hi = q(0.99);
    let width = if iqr > 0.0 {
        2.0 * iqr / (s.len() as f64).cbrt()
    } else {
        hi.max(1e-12) / 10.0
    };
    let nb = ((hi / width).ceil() as usize).clamp(1, 10_000);
    (0..=nb).map(|i| hi * i as f64 / nb as f64).collect()
}

/// Localization length `4c0²/(γω0²)`; infinite when `γ = 0`.
pub fn localization_length(omega0: f64, gamma: f64, c0: f64) -> Result<f64> {
    if gamma < 0.0 || !(omega0 > 0.0) || !(c0 > 0.0) {
        return Err(Error::domain("localization length needs γ >= 0, ω0 > 0, c0 > 0"));
    }
    if gamma == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(4.0 * c0 * c0 / (gamma * omega0 * omega0))
}

/// Slab, reflector depth and medium for `Ψ_eff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayeredGeometry {
    /// Slab thickness; receivers sit at depth `L`.
    pub slab: f64,
    /// Reflector depth `L_y > L`.
    pub reflector_depth: f64,
}

impl LayeredGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.slab > 0.0 && self.reflector_depth > self.slab) {
            return Err(Error::config(format!(
                "reflector must lie below the slab: L={}, L_y={}",
                self.slab, self.reflector_depth
            )));
        }
        Ok(())
    }

    pub fn gap(&self) -> f64 {
        self.reflector_depth - self.slab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEffOptions {
    pub n_paths: usize,
    pub n_max: u32,
    pub seed: u64,
}

/// Monte-Carlo value of `Ψ_eff` with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Scaled slab thickness `z̃` seen by this ray.
    pub scaled_length: f64,
    /// Fraction of paths stopped early because the ray left the source support.
    pub killed_fraction: f64,
    pub cap_hits: usize,
}

/// `Ψ_eff(ω, x_q, y) = ∫ ψ_s(x_q − (y−x_q)(ξ/(c0|y⃗−x⃗_q|) + L/(L_y−L))) U(ω,κ,ξ) dξ`
/// with `κ = |y−x_q|/(c0|y⃗−x⃗_q|)`.
///
/// For `γ = 0` the density is a point mass at 0 and the value is exact.
/// Otherwise paths are stopped once the traced point leaves the support of
/// `ψ_s`, which keeps strongly scattering cases affordable.
pub fn psi_eff(
    omega: f64,
    x_q: [f64; 2],
    y: [f64; 2],
    source: &SourceDensity,
    medium_gamma: f64,
    c0: f64,
    geometry: &LayeredGeometry,
    opts: &PsiEffOptions,
) -> Result<PsiEstimate> {
    geometry.validate()?;
    let d = geometry.gap();
    let dx = [y[0] - x_q[0], y[1] - x_q[1]];
    let lateral = dx[0].hypot(dx[1]);
    let range = lateral.hypot(d);
    let trace = |xi: f64| {
        let s = xi / (c0 * range) + geometry.slab / d;
        [x_q[0] - dx[0] * s, x_q[1] - dx[1] * s]
    };
    if medium_gamma == 0.0 || lateral == 0.0 || matches!(source, SourceDensity::Zero) {
        let value = if lateral == 0.0 { source.eval(x_q) } else { source.eval(trace(0.0)) };
        return Ok(PsiEstimate {
            value,
            stderr: 0.0,
            scaled_length: 0.0,
            killed_fraction: 0.0,
            cap_hits: 0,
        });
    }
    let kappa = lateral / (c0 * range);
    let params = JumpProcessParams {
        omega,
        kappa,
        gamma: medium_gamma,
        c0,
        length: geometry.slab,
        n_max: opts.n_max,
    };
    let ck = params.mode_velocity()?;
    let rate = params.rate_prefactor();
    let kill_xi = match source.support_radius() {
        Some(rho) => c0 * range * ((rho + x_q[0].hypot(x_q[1])) / lateral - geometry.slab / d),
        None => f64::INFINITY,
    };
    if kill_xi < 0.0 {
        return Ok(PsiEstimate {
            value: 0.0,
            stderr: 0.0,
            scaled_length: params.scaled_length(),
            killed_fraction: 1.0,
            cap_hits: 0,
        });
    }
    let kill_area = kill_xi * rate / (2.0 * ck);
    let ens = simulate_ensemble(
        &params,
        opts.n_paths,
        opts.seed,
        EnsembleOptions {
            kill_above: kill_area,
            strict: false,
        },
    )?;
    let samples: Vec<f64> = ens
        .integrals
        .iter()
        .map(|&a| if a.is_finite() { source.eval(trace(2.0 * ck * a)) } else { 0.0 })
        .collect();
    let (value, stderr) = mean_stderr(&samples);
    Ok(PsiEstimate {
        value,
        stderr,
        scaled_length: params.scaled_length(),
        killed_fraction: ens.integrals.iter().filter(|a| !a.is_finite()).count() as f64 / opts.n_paths as f64,
        cap_hits: ens.cap_hits,
    })
}
