//! Shepp–Logan phantoms, randomized variations of them, and measurement noise.

use crate::grid::{Grid, Image, Sinogram};
use crate::rng::Stream;

/// One ellipse of a phantom, in normalized coordinates where the image spans
/// `[-1, 1]²` with `y` pointing up (row 0 is the top row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    pub intensity: f64,
}

impl EllipseSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (sin, cos) = self.rotation.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }

    /// Reflection through the vertical axis.
    pub fn mirrored(&self) -> Self {
        Self {
            center: (-self.center.0, self.center.1),
            rotation: -self.rotation,
            ..*self
        }
    }
}

// (intensity, a, b, x0, y0, rotation in degrees); the high-contrast variant
// whose values stay in [0, 1].
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

pub fn shepp_logan_ellipses() -> Vec<EllipseSpec> {
    SHEPP_LOGAN
        .iter()
        .map(|&(intensity, a, b, x0, y0, deg)| EllipseSpec {
            center: (x0, y0),
            axes: (a, b),
            rotation: deg.to_radians(),
            intensity,
        })
        .collect()
}

/// Normalized coordinates of a pixel centre. Exact negation symmetry under
/// `col -> n - 1 - col` and `row -> n - 1 - row`.
pub fn pixel_center(grid: Grid, row: usize, col: usize) -> (f64, f64) {
    let n = grid.n() as f64;
    let x = (2.0 * col as f64 + 1.0 - n) / n;
    let y = (n - 1.0 - 2.0 * row as f64) / n;
    (x, y)
}

/// Rasterizes an ellipse set by point sampling at pixel centres, clamping to `[0, 1]`.
pub fn rasterize(grid: Grid, ellipses: &[EllipseSpec]) -> Image {
    Image::from_fn(grid, |row, col| {
        let (x, y) = pixel_center(grid, row, col);
        let v: f64 = ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum();
        v.clamp(0.0, 1.0)
    })
}

pub fn shepp_logan(grid: Grid) -> Image {
    rasterize(grid, &shepp_logan_ellipses())
}

/// Bounds of the random variation applied to each ellipse, multiplied by `scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    /// Absolute shift of each centre coordinate.
    pub center_shift: f64,
    /// Relative change of each semi-axis.
    pub axis_rel: f64,
    /// Relative change of each intensity.
    pub intensity_rel: f64,
    pub scale: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            center_shift: 0.05,
            axis_rel: 0.10,
            intensity_rel: 0.10,
            scale: 1.0,
        }
    }
}

impl Perturbation {
    pub fn apply(&self, base: &[EllipseSpec], stream: &mut Stream) -> Vec<EllipseSpec> {
        let mut sym = |bound: f64| stream.uniform_in(-bound, bound) * self.scale;
        base.iter()
            .map(|e| {
                let cx = e.center.0 + sym(self.center_shift);
                let cy = e.center.1 + sym(self.center_shift);
                let a = e.axes.0 * (1.0 + sym(self.axis_rel));
                let b = e.axes.1 * (1.0 + sym(self.axis_rel));
                let intensity = e.intensity * (1.0 + sym(self.intensity_rel));
                EllipseSpec {
                    center: (cx, cy),
                    axes: (a, b),
                    rotation: e.rotation,
                    intensity,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub images: Vec<Image>,
    pub seed: u64,
    pub m_train: usize,
    pub m_test: usize,
}

impl SampleSet {
    pub fn grid(&self) -> Grid {
        self.images[0].grid()
    }

    pub fn train(&self) -> &[Image] {
        &self.images[..self.m_train]
    }

    pub fn test(&self) -> &[Image] {
        &self.images[self.m_train..]
    }

    /// Re-splits the set; the first `m_train` images become the training part.
    pub fn with_split(mut self, m_train: usize) -> crate::Result<Self> {
        if m_train > self.images.len() {
            return Err(crate::Error::Domain(format!(
                "cannot take {m_train} training samples from {}",
                self.images.len()
            )));
        }
        self.m_train = m_train;
        self.m_test = self.images.len() - m_train;
        Ok(self)
    }
}

pub fn generate_ensemble(grid: Grid, count: usize, seed: u64) -> SampleSet {
    generate_ensemble_with(grid, count, seed, &Perturbation::default())
}

/// Draws `count` phantoms from one seeded stream, in order. The whole set is
/// the training split until [`SampleSet::with_split`] says otherwise.
pub fn generate_ensemble_with(
    grid: Grid,
    count: usize,
    seed: u64,
    perturbation: &Perturbation,
) -> SampleSet {
    assert!(count >= 1, "ensemble needs at least one sample");
    let base = shepp_logan_ellipses();
    let mut stream = Stream::new(seed);
    let images = (0..count)
        .map(|_| rasterize(grid, &perturbation.apply(&base, &mut stream)))
        .collect();
    SampleSet {
        images,
        seed,
        m_train: count,
        m_test: 0,
    }
}

/// Adds i.i.d. Gaussian noise with standard deviation `level * rms(f)`.
pub fn add_noise(f: &Sinogram, level: f64, seed: u64) -> Sinogram {
    assert!(level >= 0.0, "noise level must be nonnegative");
    let mut out = f.clone();
    if level == 0.0 {
        return out;
    }
    let sigma = level * f.rms();
    let mut stream = Stream::new(seed);
    for v in out.values_mut() {
        *v += sigma * stream.normal();
    }
    out
}
