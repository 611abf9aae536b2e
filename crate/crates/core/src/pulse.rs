//! Gaussian source pulse and the frequency samples used to integrate over it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f̂(ω) = exp(−(ω−ω0)²/(2B²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    pub omega0: f64,
    pub bandwidth: f64,
}

impl GaussianPulse {
    pub fn new(omega0: f64, bandwidth: f64) -> Result<Self> {
        let p = Self { omega0, bandwidth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.bandwidth > 0.0 && self.omega0.is_finite() && self.bandwidth.is_finite()) {
            return Err(Error::config(format!(
                "pulse needs ω0 > 0 and B > 0, got ω0={}, B={}",
                self.omega0, self.bandwidth
            )));
        }
        Ok(())
    }

    pub fn spectrum(&self, omega: f64) -> f64 {
        let d = (omega - self.omega0) / self.bandwidth;
        (-0.5 * d * d).exp()
    }

    /// `|f̂(ω)|²`.
    pub fn power(&self, omega: f64) -> f64 {
        let d = (omega - self.omega0) / self.bandwidth;
        (-d * d).exp()
    }

    pub fn wavelength(&self, c0: f64) -> f64 {
        2.0 * std::f64::consts::PI * c0 / self.omega0
    }
}

/// Midpoint samples of `ω0 ± span·B`, clipped to positive frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySampling {
    pub n: usize,
    pub span: f64,
}

impl FrequencySampling {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.span > 0.0) {
            return Err(Error::config("frequency sampling needs n > 0 and span > 0"));
        }
        Ok(())
    }

    /// `(ω_j, Δω)`.
    pub fn nodes(&self, pulse: &GaussianPulse) -> Result<(Vec<f64>, f64)> {
        self.validate()?;
        let lo = (pulse.omega0 - self.span * pulse.bandwidth).max(0.0);
        let hi = pulse.omega0 + self.span * pulse.bandwidth;
        let h = (hi - lo) / self.n as f64;
        Ok(((0..self.n).map(|j| lo + (j as f64 + 0.5) * h).collect(), h))
    }

    /// Lag period `2π/Δω` beyond which sampled spectra alias.
    pub fn alias_period(&self, pulse: &GaussianPulse) -> Result<f64> {
        let (_, h) = self.nodes(pulse)?;
        Ok(2.0 * std::f64::consts::PI / h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_cover_band() {
        let p = GaussianPulse::new(10.0, 1.0).unwrap();
        let (w, h) = FrequencySampling { n: 40, span: 4.0 }.nodes(&p).unwrap();
        assert_eq!(w.len(), 40);
        assert!((h - 0.2).abs() < 1e-14);
        assert!((w[0] - 6.1).abs() < 1e-12);
        let total: f64 = w.iter().map(|&x| p.power(x) * h).sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_pulse() {
        assert!(GaussianPulse::new(0.0, 1.0).is_err());
        assert!(GaussianPulse::new(1.0, -1.0).is_err());
    }
}
