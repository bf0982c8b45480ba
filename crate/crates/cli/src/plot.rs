//! Bare line plots (axes, tick marks, polylines with markers) drawn straight
//! into an RGB buffer. There is no text; the numbers live in the CSV next to
//! each plot.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: i64 = 30;
const AXIS: Rgb<u8> = Rgb([90, 90, 90]);

pub struct Series {
    pub color: Rgb<u8>,
    pub points: Vec<(f64, f64)>,
}

/// Series colours: black for no regularization, blue for TV, red for the
/// fractional Laplacian, green when its exponent is learned.
pub fn color_for(label: &str) -> Rgb<u8> {
    match label {
        "none" => Rgb([0, 0, 0]),
        "tv" => Rgb([0, 70, 220]),
        "frac" => Rgb([220, 20, 20]),
        _ => Rgb([0, 150, 60]),
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    Some((lo - pad, hi + pad))
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham, thickened by one pixel vertically.
fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        put(img, x, y + 1, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws every series against shared axes; non-finite points are skipped.
pub fn line_plot(series: &[Series], path: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), AXIS);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), AXIS);

    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    if let (Some((x0, x1)), Some((y0, y1))) = (bounds(finite().map(|p| p.0)), bounds(finite().map(|p| p.1))) {
        let to_px = |(x, y): (f64, f64)| {
            let px = MARGIN + ((x - x0) / (x1 - x0) * (w - 2 * MARGIN) as f64).round() as i64;
            let py = h - MARGIN - ((y - y0) / (y1 - y0) * (h - 2 * MARGIN) as f64).round() as i64;
            (px, py)
        };
        for p in finite() {
            let (px, _) = to_px(*p);
            line(&mut img, (px, h - MARGIN), (px, h - MARGIN + 5), AXIS);
        }
        for s in series {
            let pts: Vec<(i64, i64)> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|p| to_px(*p))
                .collect();
            for pair in pts.windows(2) {
                line(&mut img, pair[0], pair[1], s.color);
            }
            for &(px, py) in &pts {
                for dx in -3..=3 {
                    for dy in -3..=3 {
                        put(&mut img, px + dx, py + dy, s.color);
                    }
                }
            }
        }
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_series_in_their_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let series = vec![
            Series { color: color_for("frac"), points: vec![(10.0, 1.0), (20.0, 2.0), (50.0, f64::INFINITY)] },
            Series { color: color_for("tv"), points: vec![(10.0, 0.5)] },
        ];
        line_plot(&series, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!((img.width(), img.height()), (WIDTH, HEIGHT));
        for s in &series {
            assert!(img.pixels().any(|p| *p == s.color));
        }
    }

    #[test]
    fn empty_plot_still_writes_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        line_plot(&[], &path).unwrap();
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
    }
}
