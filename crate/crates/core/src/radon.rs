//! Parallel-beam discrete Radon transform.
//!
//! Entry `k_{i,j}` of the system matrix is the length of the intersection of
//! beamlet `i` with pixel `j`, traced exactly in the manner of Siddon. Lengths
//! are in the same units as the pixel width `h`, so a beamlet crossing the
//! whole image along an axis integrates to the image side `n h`.
//!
//! Beamlet `i = angle * n_tau + k` is the line `x cos θ + y sin θ = τ_k`,
//! where `(x, y)` are measured from the image centre with `y` pointing up
//! (row 0 is the top row). The offsets `τ_k` are cell centres of a uniform
//! partition of the image diagonal.

use std::sync::OnceLock;

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, Image, Sinogram};

/// Default number of beamlets per angle: enough to cover the diagonal at
/// pixel resolution, rounded up to an even count. With an even count no
/// beamlet passes through the centre, so at 0° and 90° the rays near the
/// middle of the image do not line up with pixel edges and do not sample
/// the central columns twice.
pub fn default_n_tau(n: usize) -> usize {
    let k = (std::f64::consts::SQRT_2 * n as f64).ceil() as usize;
    k + k % 2
}

#[derive(Clone, Debug)]
pub struct RadonOperator {
    grid: Grid,
    angles_deg: Vec<f64>,
    n_tau: usize,
    offsets: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    normal_norm: OnceLock<f64>,
}

impl RadonOperator {
    /// Assembles the matrix for `n_theta` angles `180 k / n_theta` degrees and
    /// `n_tau` beamlets per angle.
    pub fn assemble(grid: Grid, n_theta: usize, n_tau: usize) -> Result<Self> {
        if n_theta == 0 || n_tau == 0 {
            return Err(Error::Domain(format!(
                "need at least one angle and one beamlet (got {n_theta} x {n_tau})"
            )));
        }
        let angles_deg: Vec<f64> = (0..n_theta)
            .map(|k| 180.0 * k as f64 / n_theta as f64)
            .collect();
        let spacing = grid.side() * std::f64::consts::SQRT_2 / n_tau as f64;
        let offsets: Vec<f64> = (0..n_tau)
            .map(|k| (k as f64 + 0.5 - n_tau as f64 / 2.0) * spacing)
            .collect();

        let mut row_ptr = Vec::with_capacity(n_theta * n_tau + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut scratch = Vec::new();
        for &deg in &angles_deg {
            let (sin, cos) = deg.to_radians().sin_cos();
            for &tau in &offsets {
                trace_line(grid, cos, sin, tau, &mut scratch);
                for &(j, len) in &scratch {
                    cols.push(j as u32);
                    vals.push(len);
                }
                row_ptr.push(cols.len());
            }
        }
        Ok(Self {
            grid,
            angles_deg,
            n_tau,
            offsets,
            row_ptr,
            cols,
            vals,
            normal_norm: OnceLock::new(),
        })
    }

    /// Assembles with the default beamlet count.
    pub fn with_default_beamlets(grid: Grid, n_theta: usize) -> Result<Self> {
        Self::assemble(grid, n_theta, default_n_tau(grid.n()))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_theta(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn n_tau(&self) -> usize {
        self.n_tau
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Spacing between neighbouring beamlets.
    pub fn beamlet_spacing(&self) -> f64 {
        self.grid.side() * std::f64::consts::SQRT_2 / self.n_tau as f64
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros `(pixel, length)` of one beamlet.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn apply(&self, u: &Image) -> Result<Sinogram> {
        if u.grid() != self.grid {
            return Err(Error::Dimension {
                what: "radon input grid",
                expected: self.grid.n(),
                actual: u.grid().n(),
            });
        }
        let mut out = vec![0.0; self.rows()];
        self.apply_slice(u.values(), &mut out);
        Sinogram::from_vec(self.n_theta(), self.n_tau, out)
    }

    pub fn apply_adjoint(&self, f: &Sinogram) -> Result<Image> {
        check_len("sinogram angles", self.n_theta(), f.n_theta())?;
        check_len("sinogram beamlets", self.n_tau, f.n_tau())?;
        let mut out = vec![0.0; self.grid.len()];
        self.adjoint_slice(f.values(), &mut out);
        Image::from_vec(self.grid, out)
    }

    /// `K^T K u`.
    pub fn apply_normal(&self, u: &Image) -> Result<Image> {
        let f = self.apply(u)?;
        self.apply_adjoint(&f)
    }

    /// Upper bound on `‖KᵀK‖₂`: power iteration from the all-ones image,
    /// padded by 1% because the Rayleigh quotient approaches from below.
    /// Computed once per operator.
    pub fn normal_norm(&self) -> f64 {
        *self.normal_norm.get_or_init(|| {
            let mut v = vec![1.0 / (self.grid.len() as f64).sqrt(); self.grid.len()];
            let mut kv = vec![0.0; self.rows()];
            let mut w = vec![0.0; self.grid.len()];
            let mut estimate = 0.0;
            for _ in 0..500 {
                self.apply_slice(&v, &mut kv);
                self.adjoint_slice(&kv, &mut w);
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return 0.0;
                }
                let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / norm);
                let done = (next - estimate).abs() <= 1e-9 * next;
                estimate = next;
                if done {
                    break;
                }
            }
            1.01 * estimate
        })
    }

    /// `out = K u` on raw storage.
    pub fn apply_slice(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.grid.len());
        debug_assert_eq!(out.len(), self.rows());
        for (i, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&j, &v)| v * u[j as usize])
                .sum();
        }
    }

    /// `out = K^T f` on raw storage.
    pub fn adjoint_slice(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.rows());
        debug_assert_eq!(out.len(), self.grid.len());
        out.fill(0.0);
        for (i, &fi) in f.iter().enumerate() {
            if fi == 0.0 {
                continue;
            }
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            for (&j, &v) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                out[j as usize] += v * fi;
            }
        }
    }

    /// Row-major dense copy of the matrix. Only sensible for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| {
                let mut row = vec![0.0; self.grid.len()];
                for (j, v) in self.row(i) {
                    row[j] += v;
                }
                row
            })
            .collect()
    }
}

const AXIS_EPS: f64 = 1e-12;

/// Exact intersection lengths of the line `x cos + y sin = tau` with the pixels.
const EDGE_EPS: f64 = 1e-9;

fn trace_line(grid: Grid, cos: f64, sin: f64, tau: f64, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let n = grid.n();
    let h = grid.h();
    let half = grid.side() / 2.0;
    // Point on the line closest to the centre, and the unit direction.
    let (px, py) = (tau * cos, tau * sin);
    let (dx, dy) = (-sin, cos);

    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < AXIS_EPS {
            if p <= -half || p >= half {
                return;
            }
        } else {
            let (a, b) = ((-half - p) / d, (half - p) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    if t_hi <= t_lo {
        return;
    }

    let mut ts = Vec::with_capacity(2 * n + 4);
    ts.push(t_lo);
    ts.push(t_hi);
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < AXIS_EPS {
            continue;
        }
        for k in 1..n {
            let edge = -half + k as f64 * h;
            let t = (edge - p) / d;
            if t > t_lo && t < t_hi {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);

    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-14 * h {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let (x, y) = (px + tm * dx, py + tm * dy);
        let cols = cells((x + half) / h, n);
        let rows = cells((half - y) / h, n);
        // A ray running along a grid line is shared evenly by the pixels on
        // either side, the limit of rays approaching it from both sides.
        let share = len / (cols.len() * rows.len()) as f64;
        for &row in &rows {
            for &col in &cols {
                let j = grid.index(row, col);
                match out.iter_mut().rev().take(4).find(|(k, _)| *k == j) {
                    Some((_, acc)) => *acc += share,
                    None => out.push((j, share)),
                }
            }
        }
    }
    out.sort_unstable_by_key(|&(j, _)| j);
}

/// Pixel index along one axis for a position in pixel units, or both
/// neighbours when the position sits on an interior grid line.
fn cells(pos: f64, n: usize) -> Vec<usize> {
    let nearest = pos.round();
    if (pos - nearest).abs() < EDGE_EPS && nearest >= 1.0 && nearest <= (n - 1) as f64 {
        let k = nearest as usize;
        vec![k - 1, k]
    } else {
        vec![(pos.floor() as isize).clamp(0, n as isize - 1) as usize]
    }
}
