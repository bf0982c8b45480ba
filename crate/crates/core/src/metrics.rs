//! Reconstruction quality metrics.
//!
//! MSE is the plain sum of squared pixel errors of one sample. PSNR uses the
//! per-pixel mean of that sum and the peak of the reference image. SSIM is
//! the mean over all fully contained 11×11 Gaussian windows (σ = 1.5) with
//! `K₁ = 0.01`, `K₂ = 0.03`.

use crate::error::{Error, Result};
use crate::grid::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(u: &Image, truth: &Image) -> Result<f64> {
    let d = u.axpy(-1.0, truth)?;
    Ok(d.values().iter().map(|v| v * v).sum())
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images agree.
pub fn psnr(u: &Image, truth: &Image) -> Result<f64> {
    let peak = truth.max();
    if peak <= 0.0 {
        return Err(Error::Degenerate("reference image has no positive peak".into()));
    }
    let err = mse(u, truth)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let per_pixel = err / truth.values().len() as f64;
    Ok(10.0 * (peak * peak / per_pixel).log10())
}

/// SSIM with the dynamic range of the reference image.
pub fn ssim(u: &Image, truth: &Image) -> Result<f64> {
    let range = truth.max() - truth.min();
    if !(range > 0.0) {
        return Err(Error::Degenerate("reference image is constant".into()));
    }
    ssim_with_range(u, truth, range)
}

/// SSIM with an explicit dynamic range; symmetric in its image arguments.
pub fn ssim_with_range(a: &Image, b: &Image, range: f64) -> Result<f64> {
    a.same_grid(b)?;
    if !(range > 0.0) {
        return Err(Error::Degenerate(format!("dynamic range {range}")));
    }
    let n = a.grid().n();
    let size = if n >= SSIM_WINDOW {
        SSIM_WINDOW
    } else if n % 2 == 1 {
        n
    } else {
        n - 1
    };
    let weights = gaussian(size, SSIM_SIGMA);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let (x, y) = (a.values(), b.values());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(x, n, &weights);
    let my = filter_valid(y, n, &weights);
    let mxx = filter_valid(&xx, n, &weights);
    let myy = filter_valid(&yy, n, &weights);
    let mxy = filter_valid(&xy, n, &weights);

    let count = mx.len() as f64;
    let total: f64 = (0..mx.len())
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let vx = mxx[k] - ux * ux;
            let vy = myy[k] - uy * uy;
            let cov = mxy[k] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / count)
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable correlation keeping only fully contained windows.
fn filter_valid(img: &[f64], n: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let out_n = n - k + 1;
    let mut rows = vec![0.0; n * out_n];
    for r in 0..n {
        for c in 0..out_n {
            rows[r * out_n + c] = (0..k).map(|i| w[i] * img[r * n + c + i]).sum();
        }
    }
    let mut out = vec![0.0; out_n * out_n];
    for r in 0..out_n {
        for c in 0..out_n {
            out[r * out_n + c] = (0..k).map(|i| w[i] * rows[(r + i) * out_n + c]).sum();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn evaluate(u: &Image, truth: &Image) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        mse: mse(u, truth)?,
        psnr: psnr(u, truth)?,
        ssim: ssim(u, truth)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub samples: Vec<SampleMetrics>,
    pub average: SampleMetrics,
}

impl MetricsReport {
    pub fn from_pairs(recon: &[Image], truths: &[Image]) -> Result<Self> {
        if recon.len() != truths.len() || recon.is_empty() {
            return Err(Error::Dimension {
                what: "metric sample count",
                expected: truths.len(),
                actual: recon.len(),
            });
        }
        let samples = recon
            .iter()
            .zip(truths)
            .map(|(u, t)| evaluate(u, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            average: mean(&samples),
            samples,
        })
    }
}

pub fn mean(samples: &[SampleMetrics]) -> SampleMetrics {
    let m = samples.len() as f64;
    SampleMetrics {
        mse: samples.iter().map(|s| s.mse).sum::<f64>() / m,
        psnr: samples.iter().map(|s| s.psnr).sum::<f64>() / m,
        ssim: samples.iter().map(|s| s.ssim).sum::<f64>() / m,
    }
}
