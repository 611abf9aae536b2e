//! Free-space 3D Helmholtz Green's function and the source-sum correlation
//! of a closed source surface.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `Ĝ(ω, x; x0) = e^{i(ω/c0)|x−x0|} / (4π|x−x0|)`.
pub fn green_3d(omega: f64, c0: f64, x: [f64; 3], x0: [f64; 3]) -> Result<Complex64> {
    let r = dist(x, x0);
    if r == 0.0 {
        return Err(Error::domain("Green's function is singular at the source"));
    }
    Ok(Complex64::from_polar(1.0 / (4.0 * std::f64::consts::PI * r), omega / c0 * r))
}

/// `Im Ĝ`, including the finite limit `k/(4π)` at coincident points.
pub fn green_3d_imag(omega: f64, c0: f64, x: [f64; 3], x0: [f64; 3]) -> f64 {
    let k = omega / c0;
    let r = dist(x, x0);
    let kr = k * r;
    let sinc = if kr.abs() < 1e-8 { 1.0 - kr * kr / 6.0 } else { kr.sin() / kr };
    k * sinc / (4.0 * std::f64::consts::PI)
}

pub fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Nearly uniform points on a sphere (golden-angle spiral).
pub fn fibonacci_sphere(n: usize, radius: f64, center: [f64; 3]) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [
                center[0] + radius * r * phi.cos(),
                center[1] + radius * r * phi.sin(),
                center[2] + radius * z,
            ]
        })
        .collect()
}

/// `Ĉ(ω, x_q, x_q') = Σ_s conj(Ĝ(x_q; x_s)) Ĝ(x_q'; x_s)·ΔS` for sources `x_s`
/// each carrying surface element `ΔS`. Row-major `(q, q')`.
pub fn source_sum_correlation(omega: f64, c0: f64, receivers: &[[f64; 3]], sources: &[[f64; 3]], area: f64) -> Result<Vec<Complex64>> {
    let nq = receivers.len();
    let g: Vec<Vec<Complex64>> = receivers
        .par_iter()
        .map(|&x| sources.iter().map(|&s| green_3d(omega, c0, x, s)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok((0..nq * nq)
        .into_par_iter()
        .map(|i| {
            let (q, qp) = (i / nq, i % nq);
            g[q].iter().zip(&g[qp]).map(|(a, b)| a.conj() * b).sum::<Complex64>() * area
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imaginary_part_limit() {
        let k = 3.0;
        let x = [0.1, 0.2, 0.3];
        let v = green_3d_imag(k, 1.0, x, x);
        assert!((v - k / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        let y = [0.1, 0.2, 1.3];
        assert!((green_3d_imag(k, 1.0, x, y) - green_3d(k, 1.0, x, y).unwrap().im).abs() < 1e-15);
    }

    #[test]
    fn sphere_points_are_on_sphere() {
        for p in fibonacci_sphere(100, 2.0, [1.0, 0.0, 0.0]) {
            assert!((dist(p, [1.0, 0.0, 0.0]) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_surface_sum_matches_helmholtz_kirchhoff() {
        // Σ conj(G)G ΔS ≈ (c0/ω) Im G for a large enclosing sphere.
        let (omega, c0, radius) = (2.0 * std::f64::consts::PI, 1.0, 30.0);
        let n = 60_000;
        let src = fibonacci_sphere(n, radius, [0.0; 3]);
        let area = 4.0 * std::f64::consts::PI * radius * radius / n as f64;
        let rec = [[0.0; 3], [0.4, 0.0, 0.0], [0.0, 0.9, 0.3]];
        let c = source_sum_correlation(omega, c0, &rec, &src, area).unwrap();
        for qp in 0..3 {
            let expect = c0 / omega * green_3d_imag(omega, c0, rec[0], rec[qp]);
            assert!((c[qp].re - expect).abs() < 0.02 * c[0].re, "{qp}: {} vs {expect}", c[qp]);
        }
    }
}
