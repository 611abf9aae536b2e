//! Limiting primary/secondary cross-correlation of a layered slab with a
//! point reflector underneath, synthesized from `Ψ_eff` rather than from
//! explicit layer realizations.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::{psi_eff, LayeredGeometry, PsiEffOptions, PsiEstimate};
use crate::correlation::CorrelationMatrix;
use crate::error::Result;
use crate::medium::LayeredMediumSpec;
use crate::pulse::{FrequencySampling, GaussianPulse};
use crate::survey::{ps_gate, ps_peak_lag, LagGrid, Reflector, SourceDensity};

/// Inputs of the layered synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredSurvey {
    /// Lateral receiver positions; receivers sit at depth `L`.
    pub receivers: Vec<[f64; 2]>,
    pub reflector: Reflector,
    pub source: SourceDensity,
    pub pulse: GaussianPulse,
    pub medium: LayeredMediumSpec,
    pub frequencies: FrequencySampling,
    pub lags: LagGrid,
    pub psi: PsiEffOptions,
    /// Lag margin around the ps peaks kept by the gate.
    pub gate_margin: f64,
}

/// Synthesized correlations plus the `Ψ_eff` values behind them.
#[derive(Debug, Clone)]
pub struct LayeredSynthesis {
    pub correlations: CorrelationMatrix,
    pub omegas: Vec<f64>,
    /// `psi[q][j]` at receiver `q`, frequency `omegas[j]`.
    pub psi: Vec<Vec<PsiEstimate>>,
}

/// Geometric factor of `Ĉ_ps`, without `Ψ_eff|f̂|²ω³`.
fn ps_prefactor(x_q: [f64; 2], x_qp: [f64; 2], slab: f64, reflector: &Reflector, c0: f64) -> Complex64 {
    let y = reflector.lateral;
    let d = reflector.depth - slab;
    let a = [y[0] - x_q[0], y[1] - x_q[1]];
    let b = [x_qp[0] - y[0], x_qp[1] - y[1]];
    let r_q = a[0].hypot(a[1]).hypot(d);
    let r_qp = b[0].hypot(b[1]).hypot(d);
    let two_pi = 2.0 * std::f64::consts::PI;
    let scale = reflector.reflectivity / (2.0 * two_pi.powi(3) * c0.powi(3));
    let geo = d * (a[0] * b[0] + a[1] * b[1] - d * d) / (r_q.powi(3) * r_qp.powi(2));
    Complex64::new(0.0, scale * geo)
}

/// Key under which `Ψ_eff` is shared between receivers.
fn psi_key(source: &SourceDensity, x: [f64; 2], y: [f64; 2]) -> [u64; 3] {
    match source {
        SourceDensity::Box { .. } => [x[0].to_bits(), x[1].to_bits(), u64::MAX],
        _ => {
            // Radial densities only see |x_q|², x_q·(y−x_q) and |y−x_q|².
            let d = [y[0] - x[0], y[1] - x[1]];
            let q = |v: f64| (v * 1e9).round().to_bits();
            [q(x[0] * x[0] + x[1] * x[1]), q(x[0] * d[0] + x[1] * d[1]), q(d[0] * d[0] + d[1] * d[1])]
        }
    }
}

/// Evaluates the ps cross-correlation of every receiver pair on the lag grid.
///
/// Positive lags hold the gated ps term; negative lags hold its sp mirror
/// `C_sp(τ,q,q') = C_ps(−τ,q',q)`. All `Ψ_eff` estimates share one seed,
/// which correlates their Monte-Carlo errors across receivers and
/// frequencies and keeps measured profiles smooth.
pub fn synthesize_layered_correlations(survey: &LayeredSurvey) -> Result<LayeredSynthesis> {
    survey.medium.validate()?;
    survey.pulse.validate()?;
    let geometry = LayeredGeometry {
        slab: survey.medium.length,
        reflector_depth: survey.reflector.depth,
    };
    geometry.validate()?;
    let c0 = survey.medium.c0;
    let (omegas, h) = survey.frequencies.nodes(&survey.pulse)?;
    let nq = survey.receivers.len();
    let nw = omegas.len();

    let gate = ps_gate(&survey.receivers, geometry.slab, &survey.reflector, c0, survey.gate_margin)?;

    let mut keys: Vec<[u64; 3]> = Vec::new();
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut rep: Vec<usize> = Vec::new();
    let key_of: Vec<usize> = survey
        .receivers
        .iter()
        .enumerate()
        .map(|(q, &x)| {
            let k = psi_key(&survey.source, x, survey.reflector.lateral);
            *index.entry(k).or_insert_with(|| {
                keys.push(k);
                rep.push(q);
                keys.len() - 1
            })
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..rep.len()).flat_map(|u| (0..nw).map(move |j| (u, j))).collect();
    let values: Vec<PsiEstimate> = tasks
        .par_iter()
        .map(|&(u, j)| {
            psi_eff(
                omegas[j],
                survey.receivers[rep[u]],
                survey.reflector.lateral,
                &survey.source,
                survey.medium.gamma,
                c0,
                &geometry,
                &survey.psi,
            )
        })
        .collect::<Result<_>>()?;
    let psi: Vec<Vec<PsiEstimate>> = key_of.iter().map(|&u| values[u * nw..(u + 1) * nw].to_vec()).collect();

    let ps = |q: usize, qp: usize, j: usize| -> Complex64 {
        let (xq, xqp) = (survey.receivers[q], survey.receivers[qp]);
        let w = omegas[j];
        let tau0 = ps_peak_lag(xq, xqp, geometry.slab, &survey.reflector, c0);
        ps_prefactor(xq, xqp, geometry.slab, &survey.reflector, c0)
            * psi[q][j].value
            * survey.pulse.power(w)
            * w.powi(3)
            * Complex64::from_polar(1.0, w * tau0)
    };
    let spectra: Vec<Complex64> = (0..nq * nq * nw).map(|i| ps(i / (nq * nw), (i / nw) % nq, i % nw)).collect();
    let weights = vec![h; nw];
    let receivers3 = survey
        .receivers
        .iter()
        .map(|x| [x[0], x[1], geometry.slab])
        .collect();
    let correlations = CorrelationMatrix::from_gated_spectra(
        &omegas,
        &weights,
        &spectra,
        receivers3,
        survey.lags.dtau,
        survey.lags.max_lag,
        gate,
    )?;
    Ok(LayeredSynthesis {
        correlations,
        omegas,
        psi,
    })
}
