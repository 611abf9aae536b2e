//! Gauss–Legendre rules and an adaptive bisecting integrator.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes and weights of an n-point rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n from Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of an adaptive integration with its diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub max_depth_reached: bool,
}

/// Adaptive Gauss–Legendre integration by recursive bisection.
///
/// Each panel is accepted when the n-point estimate and the sum over its
/// two halves agree to `abs_tol + rel_tol·|value|` (scaled by panel share).
#[derive(Debug, Clone)]
pub struct AdaptiveGl {
    rule: GaussLegendre,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl AdaptiveGl {
    pub fn new(order: usize, abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            rule: GaussLegendre::new(order),
            abs_tol,
            rel_tol,
            max_depth: 40,
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> Integral {
        let mut evals = 0usize;
        let whole = self.rule.integrate(a, b, |x| {
            evals += 1;
            f(x)
        });
        let mut out = Integral {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            max_depth_reached: false,
        };
        let scale = whole.abs();
        self.recurse(a, b, whole, 0, scale, &mut f, &mut out);
        out.evaluations += evals;
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        whole: f64,
        depth: usize,
        scale: f64,
        f: &mut F,
        out: &mut Integral,
    ) {
        let m = 0.5 * (a + b);
        let mut evals = 0usize;
        let left = self.rule.integrate(a, m, |x| {
            evals += 1;
            f(x)
        });
        let right = self.rule.integrate(m, b, |x| {
            evals += 1;
            f(x)
        });
        out.evaluations += evals;
        let refined = left + right;
        let err = (refined - whole).abs();
        let tol = self.abs_tol.max(self.rel_tol * scale.max(refined.abs()));
        if err <= tol || depth >= self.max_depth {
            if depth >= self.max_depth && err > tol {
                out.max_depth_reached = true;
            }
            out.value += refined;
            out.error_estimate += err;
            return;
        }
        let sub = Self {
            rule: self.rule.clone(),
            abs_tol: 0.5 * self.abs_tol,
            rel_tol: self.rel_tol,
            max_depth: self.max_depth,
        };
        sub.recurse(a, m, left, depth + 1, scale, f, out);
        sub.recurse(m, b, right, depth + 1, scale, f, out);
    }

    /// Integrate over consecutive panels `[edges[i], edges[i+1]]`.
    pub fn integrate_panels<F: FnMut(f64) -> f64>(&self, edges: &[f64], mut f: F) -> Integral {
        let mut total = Integral {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            max_depth_reached: false,
        };
        for w in edges.windows(2) {
            let r = self.integrate(w[0], w[1], &mut f);
            total.value += r.value;
            total.error_estimate += r.error_estimate;
            total.evaluations += r.evaluations;
            total.max_depth_reached |= r.max_depth_reached;
        }
        total
    }
}

/// Fails when an integral did not meet its tolerance.
pub fn require_converged(what: &str, r: &Integral) -> Result<f64> {
    if r.max_depth_reached || !r.value.is_finite() {
        return Err(Error::numerical(format!(
            "quadrature for {what} did not converge: value {}, error estimate {:.3e}, {} evaluations",
            r.value, r.error_estimate, r.evaluations
        )));
    }
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-10);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let gl = GaussLegendre::new(11);
        for w in gl.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(gl.nodes[5].abs() < 1e-15);
        assert!((gl.nodes[0] + gl.nodes[10]).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let q = AdaptiveGl::new(10, 1e-13, 1e-13);
        let r = q.integrate(-1.0, 1.0, |x| 1.0 / (1e-4 + x * x));
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((r.value - exact).abs() / exact < 1e-11);
        assert!(!r.max_depth_reached);
    }

    #[test]
    fn gaussian_integral() {
        let q = AdaptiveGl::new(10, 1e-14, 1e-14);
        let r = q.integrate(-10.0, 10.0, |x| (-x * x).exp());
        assert!((r.value - PI.sqrt()).abs() < 1e-12);
    }
}
