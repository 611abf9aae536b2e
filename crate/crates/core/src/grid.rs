//! Periodic transverse grids and their 2D FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid centred on the origin, stored row-major (x fastest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::config(format!("grid needs at least 2x2 points, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::config(format!("grid spacing must be positive, got ({dx}, {dy})")));
        }
        Ok(Self { nx, ny, dx, dy })
    }

    pub fn square(n: usize, d: f64) -> Result<Self> {
        Self::new(n, n, d, d)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.x(i % self.nx), self.y(i / self.nx)]
    }

    /// Index of the grid origin.
    pub fn center(&self) -> usize {
        self.index(self.nx / 2, self.ny / 2)
    }

    /// Nearest node to a transverse position, if inside the grid.
    pub fn nearest(&self, p: [f64; 2]) -> Option<usize> {
        let ix = (p[0] / self.dx).round() + (self.nx / 2) as f64;
        let iy = (p[1] / self.dy).round() + (self.ny / 2) as f64;
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            return None;
        }
        Some(self.index(ix as usize, iy as usize))
    }

    pub fn width_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn width_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    fn wavenumber(i: usize, n: usize, d: f64) -> f64 {
        let f = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
        2.0 * PI * f / (n as f64 * d)
    }

    /// Angular wavenumber of FFT bin `ix` along x.
    pub fn kx(&self, ix: usize) -> f64 {
        Self::wavenumber(ix, self.nx, self.dx)
    }

    pub fn ky(&self, iy: usize) -> f64 {
        Self::wavenumber(iy, self.ny, self.dy)
    }

    /// |κ|² for every FFT bin, in storage order.
    pub fn k_squared(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.ny {
            let ky = self.ky(iy);
            for ix in 0..self.nx {
                let kx = self.kx(ix);
                out.push(kx * kx + ky * ky);
            }
        }
        out
    }

    /// Minimum-image offset of node `i` from the origin node, for periodic covariances.
    pub fn periodic_offset(&self, i: usize) -> [f64; 2] {
        let ix = (i % self.nx) as isize;
        let iy = (i / self.nx) as isize;
        let wrap = |k: isize, n: usize| {
            let n = n as isize;
            if k <= n / 2 {
                k
            } else {
                k - n
            }
        };
        [wrap(ix, self.nx) as f64 * self.dx, wrap(iy, self.ny) as f64 * self.dy]
    }
}

/// Planned forward and inverse 2D transforms for one grid shape.
///
/// Both directions are unnormalized; `inverse_normalized` divides by the
/// number of points.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(grid: &Grid2) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            fwd_x: planner.plan_fft_forward(grid.nx),
            inv_x: planner.plan_fft_inverse(grid.nx),
            fwd_y: planner.plan_fft_forward(grid.ny),
            inv_y: planner.plan_fft_inverse(grid.ny),
        }
    }

    fn run(&self, data: &mut [Complex64], fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.nx * self.ny, "buffer does not match planned grid");
        fx.process(data);
        let mut t = transpose(data, self.nx, self.ny);
        fy.process(&mut t);
        let back = transpose(&t, self.ny, self.nx);
        data.copy_from_slice(&back);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd_x, &self.fwd_y);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv_x, &self.inv_y);
    }

    pub fn inverse_normalized(&self, data: &mut [Complex64]) {
        self.inverse(data);
        let s = 1.0 / (self.nx * self.ny) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

fn transpose(data: &[Complex64], rows_len: usize, n_rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    const B: usize = 32;
    for r0 in (0..n_rows).step_by(B) {
        for c0 in (0..rows_len).step_by(B) {
            for r in r0..(r0 + B).min(n_rows) {
                for c in c0..(c0 + B).min(rows_len) {
                    out[c * n_rows + r] = data[r * rows_len + c];
                }
            }
        }
    }
    out
}
