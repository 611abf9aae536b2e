//! Passive-array data through an isotropic random slab, computed with the
//! paraxial solver.
//!
//! Sources fill the surface `z = 0` with density `ψ_s`, the random slab
//! occupies `[0, L]`, receivers sit at depth `L` and a point reflector sits at
//! depth `L_y` in the homogeneous region below. Per frequency and medium
//! realization the primary/secondary cross spectrum
//!
//! `Ĉ_ps(ω,q,q') = σ_ref ω² |f̂(ω)|² Σ_s ψ_s(x_s) conj(Ĝ(x_q; x_s)) Ĝ(y; x_s) Ĝ(x_q'; y)`
//!
//! is evaluated with two slab propagations per frequency: the reflector
//! field is carried up to the surface with the reversed-screen propagator
//! (the transpose of the forward one, by reciprocity), weighted by `ψ_s`,
//! conjugated and carried back down, which collapses the source sum.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::medium::{generate_screens, IsotropicMediumSpec, PhaseScreenSet};
use crate::paraxial::{absorbing_window, Direction, PropagationConfig, Propagator, SpectralField};
use crate::pulse::{FrequencySampling, GaussianPulse};
use crate::rng::derive_seed;
use crate::survey::{ps_gate, LagGrid, Reflector, SourceDensity};

/// Everything needed to synthesize passive-array correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaxialSurvey {
    /// Lateral receiver positions; they must be grid nodes.
    pub receivers: Vec<[f64; 2]>,
    pub reflector: Reflector,
    pub source: SourceDensity,
    pub pulse: GaussianPulse,
    pub frequencies: FrequencySampling,
    /// Random slab; its `length` is `L`.
    pub medium: IsotropicMediumSpec,
    pub c0: f64,
    pub grid: Grid2,
    pub n_steps: usize,
    pub absorbing_margin: f64,
    /// Point-source roll-off as a fraction of the grid Nyquist wavenumber.
    pub point_cutoff: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub lags: LagGrid,
    pub gate_margin: f64,
}

#[derive(Debug, Clone)]
pub struct ParaxialSynthesis {
    pub correlations: CorrelationMatrix,
    pub omegas: Vec<f64>,
    /// Realization-averaged `Ĉ_ps`, row-major `(q, q', ω)`.
    pub spectra: Vec<Complex64>,
}

impl ParaxialSurvey {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.pulse.validate()?;
        self.frequencies.validate()?;
        if self.n_realizations == 0 {
            return Err(Error::config("n_realizations must be at least 1"));
        }
        if self.receivers.is_empty() {
            return Err(Error::config("no receivers"));
        }
        if !(self.reflector.depth > self.medium.length) {
            return Err(Error::config(format!(
                "reflector depth {} must exceed the slab thickness {}",
                self.reflector.depth, self.medium.length
            )));
        }
        if !(self.point_cutoff > 0.0 && self.point_cutoff <= 1.0) {
            return Err(Error::config("point_cutoff must lie in (0, 1]"));
        }
        Ok(())
    }

    fn node(&self, x: [f64; 2]) -> Result<usize> {
        let tol = 1e-6 * self.grid.dx.min(self.grid.dy);
        match self.grid.nearest(x) {
            Some(i) if {
                let p = self.grid.point(i);
                (p[0] - x[0]).abs() < tol && (p[1] - x[1]).abs() < tol
            } =>
            {
                Ok(i)
            }
            _ => Err(Error::config(format!("position {x:?} is not a node of the propagation grid"))),
        }
    }
}

/// Per-frequency `Ĉ_ps` for one medium realization, row-major `(q, q')`.
fn cross_spectrum(
    survey: &ParaxialSurvey,
    prop: &Propagator,
    screens: Option<&PhaseScreenSet>,
    weight: &[f64],
    nodes: &[usize],
) -> Result<Vec<Complex64>> {
    let omega = prop.omega();
    let grid = &survey.grid;
    let gap = survey.reflector.depth - survey.medium.length;
    let mut h = SpectralField::band_limited_point(grid, omega, survey.reflector.lateral, survey.point_cutoff);
    prop.free_step(&mut h.values, gap);
    let phi_y = prop.propagate(&h, screens, Direction::Reversed)?;
    let mut w = phi_y.clone();
    for (v, &p) in w.values.iter_mut().zip(weight) {
        *v = (*v * p).conj();
    }
    let back = prop.propagate(&w, screens, Direction::Forward)?;
    let k = omega / survey.c0;
    // Each paraxial kernel is the 3D Green's function divided by i/(2k), so
    // conj(G)·G·G picks up i/(8k³).
    let common = Complex64::from_polar(
        survey.reflector.reflectivity * omega * omega * survey.pulse.power(omega) / (8.0 * k.powi(3)),
        2.0 * k * gap + std::f64::consts::FRAC_PI_2,
    ) * grid.cell_area();
    let s: Vec<Complex64> = nodes.iter().map(|&i| back.values[i].conj()).collect();
    let g: Vec<Complex64> = nodes.iter().map(|&i| h.values[i]).collect();
    let n = nodes.len();
    Ok((0..n * n).map(|p| common * s[p / n] * g[p % n]).collect())
}

/// Realization-averaged correlations of the survey.
pub fn synthesize_paraxial_correlations(survey: &ParaxialSurvey) -> Result<ParaxialSynthesis> {
    survey.validate()?;
    let cfg = PropagationConfig::new(survey.c0, survey.medium.length, survey.n_steps, survey.absorbing_margin)?;
    let (omegas, h) = survey.frequencies.nodes(&survey.pulse)?;
    let nodes: Vec<usize> = survey.receivers.iter().map(|&x| survey.node(x)).collect::<Result<_>>()?;
    survey.node(survey.reflector.lateral)?;
    let window = absorbing_window(&survey.grid, survey.absorbing_margin);
    let weight: Vec<f64> = (0..survey.grid.len())
        .map(|i| survey.source.eval(survey.grid.point(i)) * window.as_ref().map_or(1.0, |w| w[i]))
        .collect();
    let props: Vec<Propagator> = omegas
        .iter()
        .map(|&w| Propagator::new(&survey.grid, w, &cfg))
        .collect::<Result<_>>()?;
    let nq = nodes.len();
    let nw = omegas.len();
    let random = survey.medium.sigma2 > 0.0;
    let mut sum = vec![Complex64::new(0.0, 0.0); nq * nq * nw];
    for r in 0..survey.n_realizations {
        let screens = if random {
            Some(generate_screens(&survey.medium, &survey.grid, cfg.dz, cfg.n_steps, derive_seed(survey.seed, r as u64))?)
        } else {
            None
        };
        let per: Vec<Vec<Complex64>> = props
            .par_iter()
            .map(|p| cross_spectrum(survey, p, screens.as_ref(), &weight, &nodes))
            .collect::<Result<_>>()
            .map_err(|e| Error::numerical(format!("realization {r}: {e}")))?;
        for (j, c) in per.iter().enumerate() {
            for (p, v) in c.iter().enumerate() {
                sum[p * nw + j] += v;
            }
        }
        if !random {
            break;
        }
    }
    let count = if random { survey.n_realizations } else { 1 } as f64;
    let spectra: Vec<Complex64> = sum.iter().map(|v| v / count).collect();
    let gate = ps_gate(&survey.receivers, survey.medium.length, &survey.reflector, survey.c0, survey.gate_margin)?;
    let receivers3 = survey
        .receivers
        .iter()
        .map(|x| [x[0], x[1], survey.medium.length])
        .collect();
    let correlations = CorrelationMatrix::from_gated_spectra(
        &omegas,
        &vec![h; nw],
        &spectra,
        receivers3,
        survey.lags.dtau,
        survey.lags.max_lag,
        gate,
    )?;
    Ok(ParaxialSynthesis {
        correlations,
        omegas,
        spectra,
    })
}
