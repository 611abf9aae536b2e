//! Orthonormal polynomials of the transition-probability representation.
//!
//! `P_n` are orthonormal on `[0, ∞)` for the weight
//! `w(u) = 2πu·sinh(πu)/cosh²(πu)`.

use std::f64::consts::PI;

/// `P_n(u)` by the three-term recursion
/// `P_{n+1} = ((2n²+2n+3/4−u²)P_n − n²P_{n−1})/(n+1)²`.
pub fn poly_p(n: usize, u: f64) -> f64 {
    let u2 = u * u;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 0.75 - u2;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf * kf + 2.0 * kf + 0.75 - u2) * cur - kf * kf * prev) / ((kf + 1.0) * (kf + 1.0));
        prev = cur;
        cur = next;
    }
    cur
}

/// `P_0(u), …, P_{n_max}(u)` in one pass.
pub fn poly_p_all(n_max: usize, u: f64, out: &mut Vec<f64>) {
    out.clear();
    let u2 = u * u;
    out.push(1.0);
    if n_max == 0 {
        return;
    }
    out.push(0.75 - u2);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf * kf + 2.0 * kf + 0.75 - u2) * out[k] - kf * kf * out[k - 1]) / ((kf + 1.0) * (kf + 1.0));
        out.push(next);
    }
}

/// `K_n(u) = Π_{j=1}^n (u² + (j−½)²)/j²`.
pub fn poly_k(n: usize, u: f64) -> f64 {
    let u2 = u * u;
    (1..=n).fold(1.0, |acc, j| {
        let jf = j as f64;
        acc * (u2 + (jf - 0.5) * (jf - 0.5)) / (jf * jf)
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P_n(u) = Σ_j C(n,j)(−1)^j K_j(u)`, an independent route to the recursion.
pub fn poly_p_binomial(n: usize, u: f64) -> f64 {
    (0..=n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(n, j) * poly_k(j, u)
        })
        .sum()
}

/// Upper bound on `|P_n(u)|` from the binomial form.
pub fn poly_p_bound(n: usize, u: f64) -> f64 {
    (0..=n).map(|j| binomial(n, j) * poly_k(j, u)).sum()
}

/// Orthogonality weight `2πu·sinh(πu)/cosh²(πu)`, stable for large `u`.
pub fn weight(u: f64) -> f64 {
    let x = PI * u;
    let e = (-2.0 * x).exp();
    let sech = 2.0 * (-x).exp() / (1.0 + e);
    let tanh = (1.0 - e) / (1.0 + e);
    2.0 * x * tanh * sech
}
