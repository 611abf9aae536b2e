//! Compensated accumulators and Monte-Carlo summaries.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean of a complex quantity with per-component standard errors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexMean {
    n: u64,
    re: CompensatedSum,
    im: CompensatedSum,
    re2: CompensatedSum,
    im2: CompensatedSum,
}

impl ComplexMean {
    pub fn push(&mut self, z: Complex64) {
        self.n += 1;
        self.re.add(z.re);
        self.im.add(z.im);
        self.re2.add(z.re * z.re);
        self.im2.add(z.im * z.im);
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.re.merge(&o.re);
        self.im.merge(&o.im);
        self.re2.merge(&o.re2);
        self.im2.merge(&o.im2);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> ComplexEstimate {
        let n = self.n as f64;
        let mr = self.re.value() / n;
        let mi = self.im.value() / n;
        let var = |s2: f64, m: f64| ((s2 / n - m * m) * n / (n - 1.0)).max(0.0);
        ComplexEstimate {
            mean: Complex64::new(mr, mi),
            stderr_re: (var(self.re2.value(), mr) / n).sqrt(),
            stderr_im: (var(self.im2.value(), mi) / n).sqrt(),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub n: u64,
}

impl ComplexEstimate {
    /// Standard error of |mean|, by the delta method.
    pub fn stderr_abs(&self) -> f64 {
        let a = self.mean.norm();
        if a == 0.0 {
            return self.stderr_re.hypot(self.stderr_im);
        }
        let (c, s) = (self.mean.re / a, self.mean.im / a);
        ((c * self.stderr_re).powi(2) + (s * self.stderr_im).powi(2)).sqrt()
    }
}

/// Mean and standard error of a real sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = CompensatedSum::default();
    for &x in xs {
        s.add(x);
    }
    let m = s.value() / n;
    let mut v = CompensatedSum::default();
    for &x in xs {
        v.add((x - m) * (x - m));
    }
    let var = if xs.len() > 1 { v.value() / (n - 1.0) } else { 0.0 };
    (m, (var / n).sqrt())
}

/// Ordinary least-squares fit y = a + b x; returns (a, b, r²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn complex_mean_and_errors() {
        let mut m = ComplexMean::default();
        for k in 0..4 {
            m.push(Complex64::new(k as f64, 1.0));
        }
        let e = m.estimate();
        assert_eq!(e.mean, Complex64::new(1.5, 1.0));
        let expected = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((e.stderr_re - expected).abs() < 1e-14);
        assert_eq!(e.stderr_im, 0.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
