//! File formats: headered CSV of 17-significant-digit decimals for images
//! and sinograms, 8-bit PNG renders, TOML for manifests and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bonnet_core::grid::{Grid, Image, Sinogram};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// `{:.16e}` prints 17 significant digits, enough to round-trip any f64.
fn push_value(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

/// One header line `c0,c1,...`, then one line per image row.
pub fn image_to_csv(u: &Image) -> String {
    let n = u.grid().n();
    let mut out = String::with_capacity(n * n * 24);
    out.push_str(&(0..n).map(|c| format!("c{c}")).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in u.values().chunks(n) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            push_value(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// Header `theta_deg,b0,b1,...`, then one line per angle.
pub fn sinogram_to_csv(f: &Sinogram, angles_deg: &[f64]) -> String {
    let nt = f.n_tau();
    let mut out = String::with_capacity(f.values().len() * 24);
    out.push_str("theta_deg,");
    out.push_str(&(0..nt).map(|k| format!("b{k}")).collect::<Vec<_>>().join(","));
    out.push('\n');
    for (row, angle) in f.values().chunks(nt).zip(angles_deg) {
        push_value(&mut out, *angle);
        for v in row {
            out.push(',');
            push_value(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    lines.next().context("empty CSV")?;
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|s| s.trim().parse::<f64>().with_context(|| format!("line {}: bad value {s:?}", i + 2)))
                .collect()
        })
        .collect()
}

pub fn image_from_csv(text: &str) -> Result<Image> {
    let rows = parse_rows(text)?;
    let n = rows.len();
    if n < 2 || rows.iter().any(|r| r.len() != n) {
        bail!("image CSV must be square with at least 2 rows");
    }
    Ok(Image::from_vec(Grid::new(n)?, rows.concat())?)
}

/// Returns the sinogram and its angle column.
pub fn sinogram_from_csv(text: &str) -> Result<(Sinogram, Vec<f64>)> {
    let rows = parse_rows(text)?;
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 || rows.iter().any(|r| r.len() != width) {
        bail!("sinogram CSV rows must have equal length of at least 2");
    }
    let angles = rows.iter().map(|r| r[0]).collect();
    let values: Vec<f64> = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Ok((Sinogram::from_vec(rows.len(), width - 1, values)?, angles))
}

/// Min-max scaled 8-bit grayscale; a constant image renders black.
pub fn image_to_png(u: &Image, path: &Path) -> Result<()> {
    let n = u.grid().n() as u32;
    let (lo, hi) = (u.min(), u.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = u
        .values()
        .iter()
        .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(n, n, pixels).expect("buffer matches dimensions");
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_image(dir: &Path, stem: &str, u: &Image) -> Result<()> {
    write(&dir.join(format!("{stem}.csv")), &image_to_csv(u))?;
    image_to_png(u, &dir.join(format!("{stem}.png")))
}

pub fn read_image(path: &Path) -> Result<Image> {
    image_from_csv(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &toml::to_string(value).context("serializing TOML")?)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bonnet_core::phantom::shepp_logan;

    #[test]
    fn image_csv_round_trip_is_exact() {
        let grid = Grid::new(9).unwrap();
        let u = shepp_logan(grid).map(|v| v / 3.0 + 1e-300);
        let back = image_from_csv(&image_to_csv(&u)).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn sinogram_csv_round_trip_is_exact() {
        let f = Sinogram::from_vec(2, 3, vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0, 0.0, std::f64::consts::PI]).unwrap();
        let (back, angles) = sinogram_from_csv(&sinogram_to_csv(&f, &[0.0, 90.0])).unwrap();
        assert_eq!(back, f);
        assert_eq!(angles, vec![0.0, 90.0]);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(image_from_csv("").is_err());
        assert!(image_from_csv("c0,c1\n1,2\n3\n").is_err());
        assert!(image_from_csv("c0,c1\n1,2\n3,x\n").is_err());
        assert!(sinogram_from_csv("theta\n0\n").is_err());
    }

    #[test]
    fn png_render_keeps_the_brightest_pixel() {
        let grid = Grid::new(16).unwrap();
        let u = shepp_logan(grid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.png");
        image_to_png(&u, &path).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        let argmax = |v: &mut dyn Iterator<Item = f64>| {
            v.enumerate().fold((0, f64::MIN), |b, (i, x)| if x > b.1 { (i, x) } else { b }).0
        };
        let a = argmax(&mut u.values().iter().copied());
        let b = argmax(&mut img.pixels().map(|p| p.0[0] as f64));
        assert_eq!(a, b);
        assert_eq!(img.pixels().map(|p| p.0[0]).max(), Some(255));
    }
}
