//! Transition probabilities of the jump process on ℕ with rates
//! `(N+1)²` up and `N²` down, in scaled depth `z̃`:
//!
//! `P(N(z̃)=n | N(0)=p) = e^{−z̃/4} ∫₀^∞ e^{−u²z̃} P_n(u)P_p(u) w(u) du`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::polynomials::{poly_p, poly_p_all, poly_p_bound, weight};
use crate::error::{Error, Result};
use crate::quadrature::{AdaptiveGl, GaussLegendre};

/// Tail level of `e^{−u²z̃}` that fixes the upper integration limit.
pub const GAUSSIAN_TAIL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionProbability {
    /// Value clamped into `[0, 1]`.
    pub value: f64,
    /// Quadrature value before clamping.
    pub raw: f64,
    /// `|raw − value|`.
    pub clamped_by: f64,
    pub error_estimate: f64,
    pub u_max: f64,
}

/// Upper limit: the Gaussian tail bound, shortened where the polynomial
/// envelope times the weight is already negligible.
pub fn upper_limit(n: usize, p: usize, z_tilde: f64) -> f64 {
    let u_gauss = ((1.0 / GAUSSIAN_TAIL).ln() / z_tilde).sqrt();
    let env = |u: f64| (-u * u * z_tilde).exp() * weight(u) * poly_p_bound(n, u) * poly_p_bound(p, u);
    let mut u = 1.0;
    while u < u_gauss {
        if env(u) < 1e-18 && env(u + 1.0) < env(u) {
            return u;
        }
        u += 0.5;
    }
    u_gauss
}

pub fn transition_probability(n: usize, p: usize, z_tilde: f64) -> Result<TransitionProbability> {
    if !(z_tilde > 0.0 && z_tilde.is_finite()) {
        return Err(Error::domain(format!("scaled depth must be > 0, got {z_tilde}")));
    }
    let u_max = upper_limit(n, p, z_tilde);
    let panel = (1.0 / (1.0 + (n.max(p) as f64).sqrt())).min(0.5);
    let m = (u_max / panel).ceil() as usize;
    let edges: Vec<f64> = (0..=m).map(|i| u_max * i as f64 / m as f64).collect();
    let q = AdaptiveGl::new(16, 1e-16, 1e-13);
    let r = q.integrate_panels(&edges, |u| (-u * u * z_tilde).exp() * poly_p(n, u) * poly_p(p, u) * weight(u));
    if r.max_depth_reached || !r.value.is_finite() {
        return Err(Error::numerical(format!(
            "transition probability ({n}|{p}, z̃={z_tilde}) did not converge: value {}, error {:.3e}, {} evaluations",
            r.value, r.error_estimate, r.evaluations
        )));
    }
    let pre = (-z_tilde / 4.0).exp();
    let raw = pre * r.value;
    let value = raw.clamp(0.0, 1.0);
    Ok(TransitionProbability {
        value,
        raw,
        clamped_by: (raw - value).abs(),
        error_estimate: pre * r.error_estimate,
        u_max,
    })
}

/// Dense block `T[n][p]` for `n, p ≤ n_max` from a shared composite rule.
///
/// All polynomials are evaluated once per node, so the cost is
/// `O(nodes · n_max²)` rather than one adaptive integral per entry.
pub fn transition_matrix(n_max: usize, z_tilde: f64) -> Result<Vec<Vec<f64>>> {
    if !(z_tilde > 0.0 && z_tilde.is_finite()) {
        return Err(Error::domain(format!("scaled depth must be > 0, got {z_tilde}")));
    }
    let u_max = ((1.0 / GAUSSIAN_TAIL).ln() / z_tilde).sqrt();
    let coarse = matrix_on_panels(n_max, z_tilde, u_max, 0.25);
    let fine = matrix_on_panels(n_max, z_tilde, u_max, 0.125);
    let mut worst: f64 = 0.0;
    for (a, b) in coarse.iter().zip(&fine) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::numerical(format!(
            "transition matrix quadrature unresolved at z̃={z_tilde}, n_max={n_max}: panel refinement changed entries by {worst:.3e}"
        )));
    }
    Ok(fine)
}

fn matrix_on_panels(n_max: usize, z_tilde: f64, u_max: f64, panel: f64) -> Vec<Vec<f64>> {
    let rule = GaussLegendre::new(16);
    let m = (u_max / panel).ceil() as usize;
    let h = u_max / m as f64;
    let pre = (-z_tilde / 4.0).exp();
    let partials: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 * h;
            let mut acc = vec![0.0; (n_max + 1) * (n_max + 1)];
            let mut ps = Vec::with_capacity(n_max + 1);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let u = a + 0.5 * h * (1.0 + x);
                let g = 0.5 * h * w * (-u * u * z_tilde).exp() * weight(u);
                if g == 0.0 {
                    continue;
                }
                poly_p_all(n_max, u, &mut ps);
                for n in 0..=n_max {
                    let gn = g * ps[n];
                    let row = &mut acc[n * (n_max + 1)..(n + 1) * (n_max + 1)];
                    for (r, pp) in row.iter_mut().zip(&ps) {
                        *r += gn * pp;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; (n_max + 1) * (n_max + 1)];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    (0..=n_max)
        .map(|n| total[n * (n_max + 1)..(n + 1) * (n_max + 1)].iter().map(|v| pre * v).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let cases = [
            (0, 0, 1.0, 0.46877444098),
            (1, 0, 1.0, 0.17535590496),
            (2, 0, 1.0, 0.09309589439),
            (0, 0, 0.1, 0.90885948912),
            (1, 0, 0.1, 0.07624647498),
        ];
        for (n, p, z, expect) in cases {
            let t = transition_probability(n, p, z).unwrap();
            assert!((t.value - expect).abs() < 1e-10, "({n}|{p},{z}) = {}", t.value);
            assert_eq!(t.clamped_by, 0.0);
        }
    }

    #[test]
    fn near_identity_for_small_depth() {
        // Staying put to first order: exp(−(total exit rate)·z̃).
        let z = 1e-3;
        for p in 0..3usize {
            let exit = ((p + 1) * (p + 1) + p * p) as f64;
            let t = transition_probability(p, p, z).unwrap();
            assert!((t.value - (-exit * z).exp()).abs() < 1e-4, "p={p}: {}", t.value);
        }
    }

    #[test]
    fn matrix_matches_adaptive_entries() {
        let m = transition_matrix(8, 0.7).unwrap();
        for n in [0, 3, 8] {
            for p in [0, 2, 5] {
                let t = transition_probability(n, p, 0.7).unwrap();
                assert!((m[n][p] - t.raw).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn symmetric_in_states() {
        let a = transition_probability(3, 1, 0.4).unwrap().value;
        let b = transition_probability(1, 3, 0.4).unwrap().value;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_depth() {
        assert!(matches!(transition_probability(0, 0, 0.0), Err(Error::Domain(_))));
    }
}
