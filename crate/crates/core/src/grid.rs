//! Pixel grid, image and sinogram containers, and the quadrature inner
//! product on the unit square.
//!
//! Pixel `(row, col)` is stored at `row * n + col`. Pixel centres sit at the
//! interior nodes `x = (col + 1) h`, `y = (row + 1) h` of the unit square with
//! `h = 1 / (n + 1)`, so the image itself covers a centred square of side
//! `n h`. This is the same node set the Dirichlet Laplacian lives on.

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("grid needs n >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    /// Pixels per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Pixel width `1 / (n + 1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Side length of the square covered by the pixels.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.h()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    grid: Grid,
    values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len("image pixels", grid.len(), values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel at index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for row in 0..n {
            for col in 0..n {
                values.push(f(row, col));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`, elementwise.
    pub fn axpy(&self, a: f64, other: &Image) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// Plain Euclidean dot product of the pixel vectors.
    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.same_grid(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm2(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn same_grid(&self, other: &Image) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "image grid",
                expected: self.grid.n(),
                actual: other.grid.n(),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    n_theta: usize,
    n_tau: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(n_theta: usize, n_tau: usize) -> Self {
        Self {
            n_theta,
            n_tau,
            values: vec![0.0; n_theta * n_tau],
        }
    }

    /// Angle-major storage: entry `(angle, beamlet)` lives at `angle * n_tau + beamlet`.
    pub fn from_vec(n_theta: usize, n_tau: usize, values: Vec<f64>) -> Result<Self> {
        check_len("sinogram entries", n_theta * n_tau, values.len())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sinogram entry at index {k}")));
        }
        Ok(Self {
            n_theta,
            n_tau,
            values,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_tau(&self) -> usize {
        self.n_tau
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, angle: usize, beamlet: usize) -> f64 {
        self.values[angle * self.n_tau + beamlet]
    }

    pub fn dot(&self, other: &Sinogram) -> Result<f64> {
        check_len("sinogram entries", self.values.len(), other.values.len())?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm2(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Root mean square of the entries.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.norm2() / (self.values.len() as f64).sqrt()
        }
    }
}

/// Uniform-quadrature approximation of `∫_Ω a b`: `h² Σ a_k b_k`.
pub fn l2_inner(a: &Image, b: &Image) -> Result<f64> {
    let h = a.grid().h();
    Ok(h * h * a.dot(b)?)
}

pub fn l2_norm(a: &Image) -> f64 {
    a.grid().h() * a.norm2()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
