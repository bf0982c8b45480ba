//! Spectral fractional powers of the discrete Dirichlet Laplacian.
//!
//! `A` is the five-point stencil of `-Δ` on the interior nodes of the unit
//! square with homogeneous Dirichlet data. Its eigenvectors are tensor
//! products of sine modes, so `A^s = V G(s) V^T` and
//! `d/ds A^s = V H(s) V^T` with `g = ζ^s`, `h = ζ^s ln ζ` are applied with two
//! orthonormal 2D sine transforms (DST-I, computed through an FFT of length
//! `2(n + 1)`) and a diagonal scaling in between.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};

#[derive(Clone)]
pub struct SpectralLaplacian {
    grid: Grid,
    /// `ζ_{p,q}` stored at `p * n + q` (0-based mode indices).
    eigenvalues: Vec<f64>,
    log_eigenvalues: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralLaplacian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralLaplacian")
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl SpectralLaplacian {
    pub fn build(grid: Grid) -> Self {
        let n = grid.n();
        let h = grid.h();
        let one_d: Vec<f64> = (1..=n)
            .map(|p| {
                let s = (p as f64 * PI / (2.0 * (n as f64 + 1.0))).sin();
                4.0 / (h * h) * s * s
            })
            .collect();
        let mut eigenvalues = Vec::with_capacity(n * n);
        for p in 0..n {
            for q in 0..n {
                eigenvalues.push(one_d[p] + one_d[q]);
            }
        }
        let log_eigenvalues = eigenvalues.iter().map(|z| z.ln()).collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self {
            grid,
            eigenvalues,
            log_eigenvalues,
            fft,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Eigenvalue of the mode with 1-based indices `(p, q)`.
    pub fn eigenvalue(&self, p: usize, q: usize) -> f64 {
        self.eigenvalues[(p - 1) * self.grid.n() + (q - 1)]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unit-norm (Euclidean) eigenvector for the 1-based mode `(p, q)`.
    pub fn eigenvector(&self, p: usize, q: usize) -> Image {
        let n = self.grid.n();
        let np1 = n as f64 + 1.0;
        let scale = 2.0 / np1;
        Image::from_fn(self.grid, |row, col| {
            scale
                * ((row + 1) as f64 * p as f64 * PI / np1).sin()
                * ((col + 1) as f64 * q as f64 * PI / np1).sin()
        })
    }

    /// Five-point stencil `A u`.
    pub fn apply_stencil(&self, u: &Image) -> Result<Image> {
        self.check_grid(u)?;
        let mut out = vec![0.0; self.grid.len()];
        stencil(self.grid, u.values(), &mut out);
        Image::from_vec(self.grid, out)
    }

    /// `A^s u` for `0 < s <= 1`.
    pub fn apply_power(&self, s: f64, u: &Image) -> Result<Image> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain(format!("fractional exponent {s} outside (0, 1]")));
        }
        self.check_grid(u)?;
        let mut coeffs = self.forward(u.values());
        for (c, lz) in coeffs.iter_mut().zip(&self.log_eigenvalues) {
            *c *= (s * lz).exp();
        }
        Image::from_vec(self.grid, self.forward(&coeffs))
    }

    /// `(d/ds A^s) u` for `0 < s < 1`.
    pub fn apply_power_derivative(&self, s: f64, u: &Image) -> Result<Image> {
        Ok(self.apply_power_with_derivative(s, u)?.1)
    }

    /// `A^s u` and `(d/ds A^s) u`, sharing one forward transform.
    pub fn apply_power_with_derivative(&self, s: f64, u: &Image) -> Result<(Image, Image)> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("fractional exponent {s} outside (0, 1)")));
        }
        self.check_grid(u)?;
        let coeffs = self.forward(u.values());
        let mut power = coeffs.clone();
        let mut deriv = coeffs;
        for ((p, d), lz) in power.iter_mut().zip(deriv.iter_mut()).zip(&self.log_eigenvalues) {
            let g = (s * lz).exp();
            *p *= g;
            *d *= g * lz;
        }
        Ok((
            Image::from_vec(self.grid, self.forward(&power))?,
            Image::from_vec(self.grid, self.forward(&deriv))?,
        ))
    }

    /// Coefficients of `u` in the orthonormal sine basis. The transform is
    /// its own inverse.
    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let m = 2 * (n + 1);
        let scale = (2.0 / (n as f64 + 1.0)).sqrt();
        let mut buf = vec![Complex64::new(0.0, 0.0); n * m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];

        // Along rows: line r holds u[r, :].
        fill_odd_extension(&mut buf, n, |line, j| u[line * n + j]);
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        let mut half = vec![0.0; n * n];
        for r in 0..n {
            for q in 0..n {
                half[r * n + q] = -0.5 * scale * buf[r * m + q + 1].im;
            }
        }

        // Along columns: line q holds half[:, q].
        fill_odd_extension(&mut buf, n, |line, j| half[j * n + line]);
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        let mut out = vec![0.0; n * n];
        for q in 0..n {
            for p in 0..n {
                out[p * n + q] = -0.5 * scale * buf[q * m + p + 1].im;
            }
        }
        out
    }

    fn check_grid(&self, u: &Image) -> Result<()> {
        if u.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "laplacian grid",
                expected: self.grid.n(),
                actual: u.grid().n(),
            })
        }
    }
}

/// Writes the odd extension `[0, x_1..x_n, 0, -x_n..-x_1]` of each of the `n` lines.
fn fill_odd_extension(buf: &mut [Complex64], n: usize, value: impl Fn(usize, usize) -> f64) {
    let m = 2 * (n + 1);
    for (line, chunk) in buf.chunks_exact_mut(m).enumerate() {
        chunk[0] = Complex64::new(0.0, 0.0);
        chunk[n + 1] = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let v = value(line, j);
            chunk[j + 1] = Complex64::new(v, 0.0);
            chunk[m - 1 - j] = Complex64::new(-v, 0.0);
        }
    }
}

/// `out = A u` with the Dirichlet five-point stencil scaled by `1/h²`.
pub(crate) fn stencil(grid: Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    for r in 0..n {
        for c in 0..n {
            let k = r * n + c;
            let mut acc = 4.0 * u[k];
            if r > 0 {
                acc -= u[k - n];
            }
            if r + 1 < n {
                acc -= u[k + n];
            }
            if c > 0 {
                acc -= u[k - 1];
            }
            if c + 1 < n {
                acc -= u[k + 1];
            }
            out[k] = inv_h2 * acc;
        }
    }
}
