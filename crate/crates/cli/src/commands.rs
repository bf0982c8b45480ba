//! The four commands. Everything lives under one output directory:
//!
//! ```text
//! OUT/data-nt10/      manifest.toml, truth/u_000.{csv,png}, clean/f_000.csv, noisy/f_000.csv
//! OUT/runs/frac-nt10/ train/{report.toml, recon_000.*}, test/{report.toml, recon_020.*}
//! OUT/eval/           <run>-<phase>.csv, summary.csv, <phase>_{mse,psnr,ssim}.png
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bonnet_core::grid::Image;
use bonnet_core::metrics::{MetricsReport, SampleMetrics};
use bonnet_core::regularizer::{RegKind, RegParams};
use serde::{Deserialize, Serialize};

use crate::config::{format_mu, parse_mu, RunConfig};
use crate::io;
use crate::pipeline::{self, Dataset, TrainReport};
use crate::plot::{self, Series};

pub fn data_dir(out: &Path, n_theta: usize) -> PathBuf {
    out.join(format!("data-nt{n_theta}"))
}

pub fn run_dir(out: &Path, config: &RunConfig) -> Result<PathBuf> {
    Ok(out.join("runs").join(format!("{}-nt{}", config.label()?, config.n_theta)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataInfo {
    pub n: usize,
    pub n_theta: usize,
    pub n_tau: usize,
    pub angles_deg: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
    pub noise_seeds: Vec<u64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub data: DataInfo,
    pub config: RunConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainFile {
    result: TrainReport,
    config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub label: String,
    pub n_theta: usize,
    /// `"λ"` or `"λ,s"` as used for the reconstructions.
    pub mu: String,
    pub samples: Vec<usize>,
    pub layers: Vec<usize>,
    pub final_residual: Vec<f64>,
    pub converged: Vec<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TestFile {
    result: TestReport,
    config: RunConfig,
}

fn sample_stem(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:03}")
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let data = Dataset::synthesize(config)?;
    let dir = data_dir(out, config.n_theta);
    for (i, u) in data.truths.iter().enumerate() {
        io::write_image(&dir.join("truth"), &sample_stem("u", i), u)?;
    }
    let angles = data.op.angles_deg();
    for (i, (clean, noisy)) in data.clean.iter().zip(&data.noisy).enumerate() {
        let name = format!("{}.csv", sample_stem("f", i));
        io::write(&dir.join("clean").join(&name), &io::sinogram_to_csv(clean, angles))?;
        io::write(&dir.join("noisy").join(&name), &io::sinogram_to_csv(noisy, angles))?;
    }
    let manifest = Manifest {
        data: DataInfo {
            n: config.n,
            n_theta: config.n_theta,
            n_tau: data.op.n_tau(),
            angles_deg: angles.to_vec(),
            noise: config.noise,
            seed: config.seed,
            noise_seeds: data.noise_seeds.clone(),
            train: data.train_range().collect(),
            test: data.test_range().collect(),
        },
        config: config.clone(),
    };
    io::write_toml(&dir.join("manifest.toml"), &manifest)?;
    eprintln!(
        "synth: {} samples ({} train / {} test) at n={} n_theta={} in {:.1}s -> {}",
        config.count,
        config.n_train(),
        config.n_test(),
        config.n,
        config.n_theta,
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

/// Reads a synthesized dataset back, rebuilding its operator.
pub fn load_data(out: &Path, n_theta: usize) -> Result<(Manifest, Dataset)> {
    let dir = data_dir(out, n_theta);
    let manifest: Manifest = io::read_toml(&dir.join("manifest.toml"))
        .with_context(|| format!("no dataset for n_theta={n_theta}; run `bonnet synth` first"))?;
    let info = &manifest.data;
    let op = pipeline::operator(&RunConfig {
        n_tau: Some(info.n_tau),
        ..manifest.config.clone()
    })?;
    let count = info.train.len() + info.test.len();
    let mut truths = Vec::with_capacity(count);
    let mut clean = Vec::with_capacity(count);
    let mut noisy = Vec::with_capacity(count);
    for i in 0..count {
        let u = io::read_image(&dir.join("truth").join(format!("{}.csv", sample_stem("u", i))))?;
        if u.grid() != op.grid() {
            bail!("sample {i} does not match the manifest grid");
        }
        truths.push(u);
        for (kind, into) in [("clean", &mut clean), ("noisy", &mut noisy)] {
            let path = dir.join(kind).join(format!("{}.csv", sample_stem("f", i)));
            let (f, _) = io::sinogram_from_csv(&io::read(&path)?).with_context(|| format!("parsing {}", path.display()))?;
            if (f.n_theta(), f.n_tau()) != (op.n_theta(), op.n_tau()) {
                bail!("{} does not match the manifest scan geometry", path.display());
            }
            into.push(f);
        }
    }
    let data = Dataset {
        op,
        truths,
        clean,
        noisy,
        train_count: info.train.len(),
        noise_seeds: info.noise_seeds.clone(),
    };
    Ok((manifest, data))
}

/// Training uses the dataset's own phantom and scan settings; the run
/// settings (regularizer, μ₀, tolerances) come from `config`.
fn effective_config(config: &RunConfig, manifest: &Manifest) -> RunConfig {
    let d = &manifest.config;
    RunConfig {
        n: d.n,
        n_tau: Some(manifest.data.n_tau),
        noise: d.noise,
        seed: d.seed,
        count: d.count,
        train_count: d.train_count,
        ..config.clone()
    }
}

pub fn train(config: &RunConfig, out: &Path) -> Result<()> {
    let (manifest, data) = load_data(out, config.n_theta)?;
    let config = effective_config(config, &manifest);
    config.validate()?;
    let trained = pipeline::train(&config, &data)?;
    let dir = run_dir(out, &config)?.join("train");
    for (i, u) in data.train_range().zip(&trained.result.reconstructions) {
        io::write_image(&dir, &sample_stem("recon", i), u)?;
    }
    let report = trained.report;
    eprintln!(
        "train {}: lambda*={:e}{} status={} after {} outer iterations ({} evaluations) in {:.1}s",
        report.label,
        report.lambda,
        report.s.map(|s| format!(" s={s}")).unwrap_or_default(),
        report.status,
        report.outer_iterations,
        report.evaluations,
        trained.result.wall_clock.as_secs_f64()
    );
    io::write_toml(&dir.join("report.toml"), &TrainFile { result: report, config })
}

pub fn reconstruct(config: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let (manifest, data) = load_data(out, config.n_theta)?;
    let mut config = effective_config(config, &manifest);
    config.validate()?;
    let dir = run_dir(out, &config)?;
    let mu = match config.mu.clone() {
        Some(text) => {
            let given = parse_mu(&text)?;
            // An exponent given to a fixed-exponent run replaces the fixed one.
            if let (Some(s), false) = (given.s, config.learns_s()?) {
                config.s = s;
                config.validate()?;
            }
            pipeline::mu_for(&config, given.lambda, given.s.or(Some(config.s)))?
        }
        None => {
            let path = dir.join("train").join("report.toml");
            let file: TrainFile = io::read_toml(&path)
                .with_context(|| "no parameters: pass --mu or run `bonnet train` first".to_string())?;
            file.result.mu_star(&config)?
        }
    };
    let results = pipeline::reconstruct(&config, &data, &mu, data.test_range())?;
    let test_dir = dir.join("test");
    let mut report = TestReport {
        label: config.label()?,
        n_theta: config.n_theta,
        mu: reported_mu(&config, &mu)?,
        samples: data.test_range().collect(),
        layers: Vec::new(),
        final_residual: Vec::new(),
        converged: Vec::new(),
    };
    for (i, (u, trace)) in data.test_range().zip(&results) {
        io::write_image(&test_dir, &sample_stem("recon", i), u)?;
        report.layers.push(trace.layers());
        report.final_residual.push(trace.final_residual);
        report.converged.push(trace.exit == bonnet_core::solver::ExitReason::Converged);
    }
    eprintln!(
        "reconstruct {}: {} test samples with mu={} in {:.1}s",
        report.label,
        results.len(),
        report.mu,
        started.elapsed().as_secs_f64()
    );
    io::write_toml(&test_dir.join("report.toml"), &TestFile { result: report, config })
}

/// Fixed-exponent runs still record the exponent they used.
fn reported_mu(config: &RunConfig, mu: &RegParams) -> Result<String> {
    Ok(match (config.kind()?, mu.s) {
        (RegKind::Fractional, None) => format_mu(&RegParams::lambda_s(mu.lambda, config.s)),
        _ => format_mu(mu),
    })
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn metrics_csv(indices: &[usize], report: &MetricsReport) -> String {
    let mut out = String::from("sample,mse,psnr,ssim\n");
    let row = |name: String, m: &SampleMetrics| format!("{name},{},{},{}\n", fmt(m.mse), fmt(m.psnr), fmt(m.ssim));
    for (i, m) in indices.iter().zip(&report.samples) {
        out.push_str(&row(i.to_string(), m));
    }
    out.push_str(&row("average".into(), &report.average));
    out
}

struct Scored {
    run: String,
    label: String,
    n_theta: usize,
    phase: &'static str,
    mu: String,
    average: SampleMetrics,
}

/// Scores every reconstruction set under `OUT/runs` against its ground
/// truth and draws the metric-versus-angles plots.
pub fn eval(out: &Path) -> Result<()> {
    let runs_root = out.join("runs");
    let mut runs: Vec<PathBuf> = std::fs::read_dir(&runs_root)
        .with_context(|| format!("no runs under {}", runs_root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    runs.sort();
    let eval_dir = out.join("eval");
    let mut scored = Vec::new();
    let mut loaded: BTreeMap<usize, Dataset> = BTreeMap::new();
    for run in &runs {
        let name = run.file_name().unwrap().to_string_lossy().into_owned();
        for phase in ["train", "test"] {
            let report_path = run.join(phase).join("report.toml");
            if !report_path.exists() {
                continue;
            }
            let (label, n_theta, mu, indices) = if phase == "train" {
                let f: TrainFile = io::read_toml(&report_path)?;
                let mu = f.result.mu_star(&f.config).map(|m| format_mu(&m))?;
                let mu = if f.result.label == "none" { "0".into() } else { mu };
                (f.result.label, f.result.n_theta, mu, (0..f.config.train_count).collect::<Vec<_>>())
            } else {
                let f: TestFile = io::read_toml(&report_path)?;
                (f.result.label, f.result.n_theta, f.result.mu, f.result.samples)
            };
            if !loaded.contains_key(&n_theta) {
                loaded.insert(n_theta, load_data(out, n_theta)?.1);
            }
            let data = &loaded[&n_theta];
            let mut recon: Vec<Image> = Vec::with_capacity(indices.len());
            let mut truths = Vec::with_capacity(indices.len());
            for &i in &indices {
                recon.push(io::read_image(&run.join(phase).join(format!("{}.csv", sample_stem("recon", i))))?);
                truths.push(data.truths.get(i).context("reconstruction index outside the dataset")?.clone());
            }
            let report = MetricsReport::from_pairs(&recon, &truths)?;
            io::write(&eval_dir.join(format!("{name}-{phase}.csv")), &metrics_csv(&indices, &report))?;
            scored.push(Scored {
                run: name.clone(),
                label,
                n_theta,
                phase,
                mu,
                average: report.average,
            });
        }
    }
    if scored.is_empty() {
        bail!("nothing to evaluate under {}", runs_root.display());
    }
    let mut summary = String::from("run,label,n_theta,phase,mu,mse,psnr,ssim\n");
    for s in &scored {
        summary.push_str(&format!(
            "{},{},{},{},\"{}\",{},{},{}\n",
            s.run,
            s.label,
            s.n_theta,
            s.phase,
            s.mu,
            fmt(s.average.mse),
            fmt(s.average.psnr),
            fmt(s.average.ssim)
        ));
    }
    io::write(&eval_dir.join("summary.csv"), &summary)?;

    for phase in ["train", "test"] {
        let rows: Vec<&Scored> = scored.iter().filter(|s| s.phase == phase).collect();
        if rows.is_empty() {
            continue;
        }
        let metrics: [(&str, fn(&SampleMetrics) -> f64); 3] =
            [("mse", |m| m.mse), ("psnr", |m| m.psnr), ("ssim", |m| m.ssim)];
        for (metric, pick) in metrics {
            let mut by_label: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
            for s in &rows {
                by_label.entry(&s.label).or_default().push((s.n_theta as f64, pick(&s.average)));
            }
            let series: Vec<Series> = by_label
                .into_iter()
                .map(|(label, mut points)| {
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series { color: plot::color_for(label), points }
                })
                .collect();
            plot::line_plot(&series, &eval_dir.join(format!("{phase}_{metric}.png")))?;
        }
    }
    eprintln!("eval: scored {} reconstruction sets -> {}", scored.len(), eval_dir.display());
    Ok(())
}
