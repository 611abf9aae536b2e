//! Cross-correlation of passive-array recordings, summed over sources.
//!
//! Convention: `p(t) = (1/2π)∫ p̂(ω) e^{−iωt} dω`, so
//! `C(τ,q,q') = Σ_s ∫ p_q(t) p_{q'}(t+τ) dt = (1/π) Re ∫₀^∞ Ĉ(ω) e^{−iωτ} dω`
//! with `Ĉ(ω,q,q') = Σ_s conj(p̂_q) p̂_{q'}`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recordings `p(t, x_q; x_s)` on a uniform time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub dt: f64,
    pub t0: f64,
    pub n_samples: usize,
    pub sources: Vec<[f64; 3]>,
    pub receivers: Vec<[f64; 3]>,
    /// Row-major `(source, receiver, time)`.
    pub samples: Vec<f64>,
}

impl TraceSet {
    pub fn zeros(dt: f64, t0: f64, n_samples: usize, sources: Vec<[f64; 3]>, receivers: Vec<[f64; 3]>) -> Result<Self> {
        let n = sources.len() * receivers.len() * n_samples;
        let t = Self {
            dt,
            t0,
            n_samples,
            sources,
            receivers,
            samples: vec![0.0; n],
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !self.t0.is_finite() {
            return Err(Error::config(format!("trace sampling must be finite with dt > 0, got dt={}", self.dt)));
        }
        if self.samples.len() != self.sources.len() * self.receivers.len() * self.n_samples {
            return Err(Error::config("trace sample count does not match sources × receivers × length"));
        }
        let finite = |p: &[f64; 3]| p.iter().all(|v| v.is_finite());
        if !self.sources.iter().all(finite) || !self.receivers.iter().all(finite) {
            return Err(Error::config("array coordinates must be finite"));
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn trace(&self, s: usize, q: usize) -> &[f64] {
        let off = (s * self.n_receivers() + q) * self.n_samples;
        &self.samples[off..off + self.n_samples]
    }

    pub fn trace_mut(&mut self, s: usize, q: usize) -> &mut [f64] {
        let nr = self.n_receivers();
        let off = (s * nr + q) * self.n_samples;
        &mut self.samples[off..off + self.n_samples]
    }
}

/// `C(τ, q, q')` on the lags `τ_k = k·dtau`, `k = −max_lag..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub dtau: f64,
    pub max_lag: usize,
    pub receivers: Vec<[f64; 3]>,
    /// Row-major `(q, q', lag)`, lag index `k + max_lag`.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn zeros(dtau: f64, max_lag: usize, receivers: Vec<[f64; 3]>) -> Self {
        let n = receivers.len();
        Self {
            dtau,
            max_lag,
            receivers,
            values: vec![0.0; n * n * (2 * max_lag + 1)],
        }
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn n_lags(&self) -> usize {
        2 * self.max_lag + 1
    }

    pub fn lag(&self, k: usize) -> f64 {
        (k as f64 - self.max_lag as f64) * self.dtau
    }

    pub fn max_lag_time(&self) -> f64 {
        self.max_lag as f64 * self.dtau
    }

    pub fn series(&self, q: usize, qp: usize) -> &[f64] {
        let nl = self.n_lags();
        let off = (q * self.n_receivers() + qp) * nl;
        &self.values[off..off + nl]
    }

    fn series_mut(&mut self, q: usize, qp: usize) -> &mut [f64] {
        let nl = self.n_lags();
        let off = (q * self.n_receivers() + qp) * nl;
        &mut self.values[off..off + nl]
    }

    /// Value at `τ` by linear interpolation; `None` outside the window.
    pub fn at(&self, q: usize, qp: usize, tau: f64) -> Option<f64> {
        interpolate(self.series(q, qp), self.dtau, self.max_lag, tau)
    }

    /// Analytic signal along the lag axis, `C + i·H[C]`.
    pub fn analytic(&self) -> AnalyticCorrelation {
        let nl = self.n_lags();
        let n = nl.next_power_of_two() * 2;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let values: Vec<Complex64> = self
            .values
            .par_chunks(nl)
            .flat_map_iter(|s| {
                let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                buf.resize(n, Complex64::new(0.0, 0.0));
                fwd.process(&mut buf);
                for (i, b) in buf.iter_mut().enumerate() {
                    let h = if i == 0 || i == n / 2 {
                        1.0
                    } else if i < n / 2 {
                        2.0
                    } else {
                        0.0
                    };
                    *b *= h / n as f64;
                }
                inv.process(&mut buf);
                buf.truncate(nl);
                buf
            })
            .collect();
        AnalyticCorrelation {
            dtau: self.dtau,
            max_lag: self.max_lag,
            receivers: self.receivers.clone(),
            values,
        }
    }

    /// Restores `C(τ,q,q') = C(−τ,q',q)` exactly by copying the `q ≤ q'` half.
    pub fn enforce_exchange_symmetry(&mut self) {
        let n = self.n_receivers();
        let nl = self.n_lags();
        for q in 0..n {
            for qp in q..n {
                let src: Vec<f64> = self.series(q, qp).to_vec();
                let dst = self.series_mut(qp, q);
                for k in 0..nl {
                    dst[k] = src[nl - 1 - k];
                }
            }
        }
    }

    /// Lag-domain correlations from spectra sampled at `omegas` with
    /// quadrature `weights` (positive frequencies only).
    ///
    /// `spectra` is row-major `(q, q', ω)`. Only `q ≤ q'` is read; the rest
    /// follows from exchange symmetry.
    pub fn from_spectra(
        omegas: &[f64],
        weights: &[f64],
        spectra: &[Complex64],
        receivers: Vec<[f64; 3]>,
        dtau: f64,
        max_lag: usize,
    ) -> Result<Self> {
        let n = receivers.len();
        let nw = omegas.len();
        if weights.len() != nw || spectra.len() != n * n * nw {
            return Err(Error::config("spectra, frequencies and weights have inconsistent sizes"));
        }
        let mut c = Self::zeros(dtau, max_lag, receivers);
        let nl = c.n_lags();
        // e^{−iωτ_k} by recurrence from τ_{−max_lag}, restarted per block to bound drift.
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|q| (q..n).map(move |qp| (q, qp))).collect();
        let rows: Vec<Vec<f64>> = pairs
            .par_iter()
            .map(|&(q, qp)| {
                let spec = &spectra[(q * n + qp) * nw..(q * n + qp + 1) * nw];
                let mut row = vec![0.0; nl];
                for j in 0..nw {
                    let a = spec[j] * weights[j] / std::f64::consts::PI;
                    if a == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let step = Complex64::from_polar(1.0, -omegas[j] * dtau);
                    let mut k = 0;
                    while k < nl {
                        let mut ph = Complex64::from_polar(1.0, -omegas[j] * c_lag(k, max_lag, dtau));
                        let end = (k + 256).min(nl);
                        for r in &mut row[k..end] {
                            *r += (a * ph).re;
                            ph *= step;
                        }
                        k = end;
                    }
                }
                row
            })
            .collect();
        for (&(q, qp), row) in pairs.iter().zip(rows) {
            c.series_mut(q, qp).copy_from_slice(&row);
        }
        c.enforce_exchange_symmetry();
        Ok(c)
    }
}

/// Positive-lag window `[start, end]` with raised-cosine edges of width `taper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagGate {
    pub start: f64,
    pub end: f64,
    pub taper: f64,
}

impl LagGate {
    pub fn weight(&self, tau: f64) -> f64 {
        if tau < self.start || tau > self.end {
            return 0.0;
        }
        let d = (tau - self.start).min(self.end - tau);
        if d >= self.taper {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * d / self.taper).cos())
        }
    }
}

impl CorrelationMatrix {
    /// Correlations whose positive lags carry a gated one-sided spectrum and
    /// whose negative lags are its exchange mirror.
    ///
    /// `spectra` is row-major `(q, q', ω)` over all ordered pairs and holds
    /// only the causal part (here the primary/secondary term). Gating
    /// removes the periodic copies that sampling `ω` creates, so the alias
    /// period `2π/Δω` must exceed the gate length.
    pub fn from_gated_spectra(
        omegas: &[f64],
        weights: &[f64],
        spectra: &[Complex64],
        receivers: Vec<[f64; 3]>,
        dtau: f64,
        max_lag: usize,
        gate: LagGate,
    ) -> Result<Self> {
        let n = receivers.len();
        let nw = omegas.len();
        if weights.len() != nw || spectra.len() != n * n * nw {
            return Err(Error::config("spectra, frequencies and weights have inconsistent sizes"));
        }
        if !(gate.start > 0.0 && gate.end > gate.start && gate.taper >= 0.0) {
            return Err(Error::config(format!("lag gate must satisfy 0 < start < end, got {gate:?}")));
        }
        if gate.end > max_lag as f64 * dtau {
            return Err(Error::config(format!(
                "lag gate ends at {} beyond the lag window {}",
                gate.end,
                max_lag as f64 * dtau
            )));
        }
        if nw > 1 {
            let spacing = omegas.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
            let period = 2.0 * std::f64::consts::PI / spacing;
            if period <= gate.end - gate.start {
                return Err(Error::config(format!(
                    "frequency spacing {spacing} aliases with period {period} inside a lag gate of length {}",
                    gate.end - gate.start
                )));
            }
        }
        let k0 = (gate.start / dtau).ceil() as usize;
        let k1 = (gate.end / dtau).floor() as usize;
        let rows: Vec<Vec<f64>> = (0..n * n)
            .into_par_iter()
            .map(|p| {
                let spec = &spectra[p * nw..(p + 1) * nw];
                (k0..=k1)
                    .map(|k| {
                        let tau = k as f64 * dtau;
                        let w = gate.weight(tau);
                        if w == 0.0 {
                            return 0.0;
                        }
                        let sum: f64 = (0..nw)
                            .map(|j| (spec[j] * Complex64::from_polar(weights[j], -omegas[j] * tau)).re)
                            .sum();
                        w * sum / std::f64::consts::PI
                    })
                    .collect()
            })
            .collect();
        let mut c = Self::zeros(dtau, max_lag, receivers);
        for (p, row) in rows.iter().enumerate() {
            let (q, qp) = (p / n, p % n);
            for (i, &v) in row.iter().enumerate() {
                let k = k0 + i;
                c.series_mut(q, qp)[max_lag + k] = v;
                c.series_mut(qp, q)[max_lag - k] = v;
            }
        }
        Ok(c)
    }
}

fn c_lag(k: usize, max_lag: usize, dtau: f64) -> f64 {
    (k as f64 - max_lag as f64) * dtau
}

fn interpolate<T>(s: &[T], dtau: f64, max_lag: usize, tau: f64) -> Option<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let x = tau / dtau + max_lag as f64;
    if !(x >= 0.0) || x > (s.len() - 1) as f64 {
        return None;
    }
    let i = (x.floor() as usize).min(s.len() - 2);
    let f = x - i as f64;
    Some(s[i] * (1.0 - f) + s[i + 1] * f)
}

/// Complex (analytic) correlation on the same lag grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCorrelation {
    pub dtau: f64,
    pub max_lag: usize,
    pub receivers: Vec<[f64; 3]>,
    pub values: Vec<Complex64>,
}

impl AnalyticCorrelation {
    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn series(&self, q: usize, qp: usize) -> &[Complex64] {
        let nl = 2 * self.max_lag + 1;
        let off = (q * self.n_receivers() + qp) * nl;
        &self.values[off..off + nl]
    }

    pub fn at(&self, q: usize, qp: usize, tau: f64) -> Option<Complex64> {
        interpolate(self.series(q, qp), self.dtau, self.max_lag, tau)
    }
}

/// FFT correlation summed over sources, `dt`-scaled, lags `±max_lag·dt`.
pub fn cross_correlate(data: &TraceSet, max_lag: usize) -> Result<CorrelationMatrix> {
    data.validate()?;
    let nt = data.n_samples;
    if max_lag >= nt {
        return Err(Error::domain(format!(
            "lag window ±{max_lag} samples exceeds the trace length {nt}"
        )));
    }
    let nq = data.n_receivers();
    let ns = data.n_sources();
    let n = (nt + max_lag + 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // spectra[s][q]
    let spectra: Vec<Vec<Complex64>> = (0..ns * nq)
        .into_par_iter()
        .map(|i| {
            let (s, q) = (i / nq, i % nq);
            let mut buf: Vec<Complex64> = data.trace(s, q).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(n, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            buf
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..nq).flat_map(|q| (q..nq).map(move |qp| (q, qp))).collect();
    let scale = data.dt / n as f64;
    let rows: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(q, qp)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for s in 0..ns {
                let a = &spectra[s * nq + q];
                let b = &spectra[s * nq + qp];
                for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
                    *o += x.conj() * y;
                }
            }
            inv.process(&mut acc);
            (0..2 * max_lag + 1)
                .map(|k| {
                    let idx = (k + n - max_lag) % n;
                    acc[idx].re * scale
                })
                .collect()
        })
        .collect();
    let mut c = CorrelationMatrix::zeros(data.dt, max_lag, data.receivers.clone());
    for (&(q, qp), row) in pairs.iter().zip(rows) {
        c.series_mut(q, qp).copy_from_slice(&row);
    }
    c.enforce_exchange_symmetry();
    Ok(c)
}

/// Direct `O(T·lags)` correlation; the reference for the FFT path.
pub fn cross_correlate_direct(data: &TraceSet, max_lag: usize) -> Result<CorrelationMatrix> {
    data.validate()?;
    let nt = data.n_samples;
    if max_lag >= nt {
        return Err(Error::domain(format!(
            "lag window ±{max_lag} samples exceeds the trace length {nt}"
        )));
    }
    let nq = data.n_receivers();
    let mut c = CorrelationMatrix::zeros(data.dt, max_lag, data.receivers.clone());
    for q in 0..nq {
        for qp in 0..nq {
            let out = c.series_mut(q, qp);
            for (k, o) in out.iter_mut().enumerate() {
                let shift = k as isize - max_lag as isize;
                let mut acc = 0.0;
                for s in 0..data.n_sources() {
                    let a = data.trace(s, q);
                    let b = data.trace(s, qp);
                    for t in 0..nt as isize {
                        let u = t + shift;
                        if u >= 0 && u < nt as isize {
                            acc += a[t as usize] * b[u as usize];
                        }
                    }
                }
                *o = acc * data.dt;
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_traces(ns: usize, nq: usize, nt: usize, seed: u64) -> TraceSet {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let src = (0..ns).map(|i| [i as f64, 0.0, 0.0]).collect();
        let rec = (0..nq).map(|i| [i as f64, 1.0, 5.0]).collect();
        let mut t = TraceSet::zeros(0.01, 0.0, nt, src, rec).unwrap();
        for v in &mut t.samples {
            *v = rng.random::<f64>() - 0.5;
        }
        t
    }

    #[test]
    fn fft_matches_direct() {
        let t = random_traces(3, 4, 70, 1);
        let a = cross_correlate(&t, 25).unwrap();
        let b = cross_correlate_direct(&t, 25).unwrap();
        let scale = b.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn delayed_pulse_peaks_at_delay() {
        let mut t = TraceSet::zeros(0.5, 0.0, 200, vec![[0.0; 3]], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        let pulse = |i: usize, c: f64| (-((i as f64 - c) / 3.0).powi(2)).exp();
        for i in 0..200 {
            t.trace_mut(0, 0)[i] = pulse(i, 60.0);
            t.trace_mut(0, 1)[i] = pulse(i, 77.0);
        }
        let c = cross_correlate(&t, 40).unwrap();
        let s = c.series(0, 1);
        let k = (0..s.len()).max_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap();
        assert!((c.lag(k) - 17.0 * 0.5).abs() <= 0.5);
    }

    #[test]
    fn window_longer_than_trace_is_rejected() {
        let t = random_traces(1, 1, 10, 2);
        assert!(matches!(cross_correlate(&t, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn analytic_envelope_of_cosine_packet() {
        let mut c = CorrelationMatrix::zeros(0.05, 400, vec![[0.0; 3]]);
        for k in 0..c.n_lags() {
            let tau = c.lag(k);
            c.values[k] = (-tau * tau / 8.0).exp() * (6.0 * tau).cos();
        }
        let a = c.analytic();
        for k in (300..500).step_by(17) {
            let tau = c.lag(k);
            assert!((a.values[k].norm() - (-tau * tau / 8.0).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn gated_spectra_mirror_and_match_one_sided_sum() {
        let omegas: Vec<f64> = (0..60).map(|i| 4.0 + 0.05 * i as f64).collect();
        let weights = vec![0.05; 60];
        let spectra: Vec<Complex64> = (0..4)
            .flat_map(|p| {
                let d = 3.0 + p as f64;
                omegas.iter().map(move |&w| Complex64::from_polar((-(w - 5.5).powi(2)).exp(), w * d))
            })
            .collect();
        let gate = LagGate { start: 1.0, end: 10.0, taper: 0.5 };
        let c = CorrelationMatrix::from_gated_spectra(&omegas, &weights, &spectra, vec![[0.0; 3]; 2], 0.01, 1200, gate).unwrap();
        let k = 1200 + 450;
        let tau = c.lag(k);
        let direct: f64 = omegas
            .iter()
            .map(|&w| (-(w - 5.5f64).powi(2)).exp() * (w * (4.0 - tau)).cos() * 0.05)
            .sum::<f64>()
            / std::f64::consts::PI;
        assert!((c.series(0, 1)[k] - direct).abs() < 1e-12);
        for k in 0..c.n_lags() {
            assert_eq!(c.series(0, 1)[k], c.series(1, 0)[c.n_lags() - 1 - k]);
        }
        assert_eq!(c.series(0, 1)[1200 - 450], c.series(1, 0)[k]);
        let coarse: Vec<f64> = (0..60).map(|i| 4.0 + 1.0 * i as f64).collect();
        assert!(CorrelationMatrix::from_gated_spectra(&coarse, &weights, &spectra, vec![[0.0; 3]; 2], 0.01, 1200, gate).is_err());
    }

    #[test]
    fn spectra_round_trip_matches_time_correlation() {
        // Gaussian pulse pair, closed-form spectrum.
        let (w0, bw, delay) = (5.0, 1.0, 2.0);
        let omegas: Vec<f64> = (0..400).map(|i| 0.025 * i as f64).collect();
        let weights = vec![0.025; omegas.len()];
        let spectra: Vec<Complex64> = [0.0, delay, -delay, 0.0]
            .iter()
            .flat_map(|&d| {
                omegas.iter().map(move |&w| {
                    let g = (-(w - w0).powi(2) / (bw * bw)).exp();
                    g * Complex64::from_polar(1.0, w * d)
                })
            })
            .collect();
        let c = CorrelationMatrix::from_spectra(&omegas, &weights, &spectra, vec![[0.0; 3]; 2], 0.05, 100).unwrap();
        for k in 0..c.n_lags() {
            let tau = c.lag(k) - delay;
            let expect = bw / std::f64::consts::PI.sqrt() * (-bw * bw * tau * tau / 4.0).exp() * (w0 * tau).cos();
            assert!((c.series(0, 1)[k] - expect).abs() < 1e-6, "k={k}");
        }
        assert_eq!(c.series(1, 0)[10], c.series(0, 1)[c.n_lags() - 11]);
    }
}
