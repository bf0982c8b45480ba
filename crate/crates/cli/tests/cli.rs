use std::path::{Path, PathBuf};
use std::process::Command;

use bonnet_cli::commands::{self, data_dir, Manifest};
use bonnet_cli::io;

const TINY: &str = "n = 16\nn_theta = 5\ncount = 4\ntrain_count = 2\nlayers_test = 300\n";

struct Workspace {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn workspace(config: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config).unwrap();
    let out = dir.path().join("out");
    Workspace { config: path, out, _dir: dir }
}

fn bonnet(ws: &Workspace, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_bonnet"))
        .args(args)
        .arg("--config")
        .arg(&ws.config)
        .arg("--out")
        .arg(&ws.out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "bonnet {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    io::read(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let (a, b) = (workspace(TINY), workspace(TINY));
    bonnet(&a, &["synth"]);
    bonnet(&b, &["synth"]);
    let da = data_dir(&a.out, 5);
    let db = data_dir(&b.out, 5);
    for rel in ["manifest.toml", "truth/u_003.csv", "truth/u_003.png", "clean/f_001.csv", "noisy/f_002.csv"] {
        assert_eq!(std::fs::read(da.join(rel)).unwrap(), std::fs::read(db.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn default_split_is_twenty_train_ten_test() {
    let ws = workspace("n = 8\nn_theta = 3\n");
    bonnet(&ws, &["synth"]);
    let manifest: Manifest = io::read_toml(&data_dir(&ws.out, 3).join("manifest.toml")).unwrap();
    assert_eq!(manifest.data.train, (0..20).collect::<Vec<_>>());
    assert_eq!(manifest.data.test, (20..30).collect::<Vec<_>>());
    assert_eq!(manifest.data.noise_seeds.len(), 30);
}

#[test]
fn zero_noise_leaves_sinograms_clean() {
    let ws = workspace(&format!("{TINY}noise = 0.0\n"));
    bonnet(&ws, &["synth"]);
    let dir = data_dir(&ws.out, 5);
    for i in 0..4 {
        let name = format!("f_{i:03}.csv");
        assert_eq!(io::read(&dir.join("clean").join(&name)).unwrap(), io::read(&dir.join("noisy").join(&name)).unwrap());
    }
}

#[test]
fn flags_override_the_config_file() {
    let ws = workspace(TINY);
    bonnet(&ws, &["synth", "--ntheta", "7", "--seed", "3"]);
    let manifest: Manifest = io::read_toml(&data_dir(&ws.out, 7).join("manifest.toml")).unwrap();
    assert_eq!(manifest.data.n_theta, 7);
    assert_eq!(manifest.data.seed, 3);
}

#[test]
fn tiny_training_lowers_the_loss() {
    let ws = workspace(&format!("{TINY}mu0 = \"1e-3,0.5\"\n"));
    bonnet(&ws, &["synth"]);
    let started = std::time::Instant::now();
    bonnet(&ws, &["train"]);
    assert!(started.elapsed().as_secs() < 60);
    let report: toml::Table = io::read_toml(&ws.out.join("runs/frac-s-nt5/train/report.toml")).unwrap();
    let phi: Vec<f64> = report["result"]["phi"].as_array().unwrap().iter().map(|v| v.as_float().unwrap()).collect();
    assert!(phi.last().unwrap() < &phi[0], "{phi:?}");
    assert!(ws.out.join("runs/frac-s-nt5/train/recon_001.png").exists());
}

#[test]
fn unregularized_run_reports_zero_lambda() {
    let ws = workspace(TINY);
    bonnet(&ws, &["synth"]);
    bonnet(&ws, &["train", "--reg", "none"]);
    let report: toml::Table = io::read_toml(&ws.out.join("runs/none-nt5/train/report.toml")).unwrap();
    assert_eq!(report["result"]["lambda"].as_float(), Some(0.0));
    bonnet(&ws, &["reconstruct", "--reg", "none"]);
    assert!(ws.out.join("runs/none-nt5/test/recon_003.csv").exists());
}

#[test]
fn explicit_mu_reconstructs_every_test_sample() {
    let ws = workspace(TINY);
    bonnet(&ws, &["synth"]);
    bonnet(&ws, &["reconstruct", "--mu", "1e-4,0.3"]);
    let test = ws.out.join("runs/frac-nt5/test");
    for i in 2..4 {
        assert!(test.join(format!("recon_{i:03}.csv")).exists());
        assert!(test.join(format!("recon_{i:03}.png")).exists());
    }
    assert!(!test.join("recon_001.csv").exists());
    let report: toml::Table = io::read_toml(&test.join("report.toml")).unwrap();
    assert_eq!(report["result"]["mu"].as_str(), Some("1e-4,3e-1"));
}

#[test]
fn reconstruct_without_training_or_mu_fails() {
    let ws = workspace(TINY);
    bonnet(&ws, &["synth"]);
    let status = Command::new(env!("CARGO_BIN_EXE_bonnet"))
        .args(["reconstruct", "--config"])
        .arg(&ws.config)
        .arg("--out")
        .arg(&ws.out)
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
}

#[test]
fn perfect_reconstructions_score_zero_error() {
    let ws = workspace(TINY);
    bonnet(&ws, &["synth"]);
    bonnet(&ws, &["reconstruct", "--mu", "1e-4"]);
    let test = ws.out.join("runs/frac-nt5/test");
    let truth = data_dir(&ws.out, 5).join("truth");
    for i in 2..4 {
        std::fs::copy(truth.join(format!("u_{i:03}.csv")), test.join(format!("recon_{i:03}.csv"))).unwrap();
    }
    commands::eval(&ws.out).unwrap();
    let rows = csv_rows(&ws.out.join("eval/frac-nt5-test.csv"));
    for row in rows {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[2], "inf");
        assert!((row[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sweep_produces_plots_and_consistent_averages() {
    let ws = workspace(TINY);
    for nt in ["3", "5", "7"] {
        bonnet(&ws, &["synth", "--ntheta", nt]);
        bonnet(&ws, &["reconstruct", "--ntheta", nt, "--reg", "none", "--mu", "1"]);
        bonnet(&ws, &["reconstruct", "--ntheta", nt, "--reg", "tv", "--mu", "1e-4"]);
        bonnet(&ws, &["reconstruct", "--ntheta", nt, "--mu", "1e-4"]);
    }
    bonnet(&ws, &["eval"]);
    for metric in ["mse", "psnr", "ssim"] {
        let png = ws.out.join(format!("eval/test_{metric}.png"));
        assert!(image::open(&png).is_ok(), "{}", png.display());
    }
    let summary = csv_rows(&ws.out.join("eval/summary.csv"));
    assert_eq!(summary.len(), 9);
    for run in ["none-nt3", "tv-nt5", "frac-nt7"] {
        let rows = csv_rows(&ws.out.join(format!("eval/{run}-test.csv")));
        let (samples, average) = rows.split_at(rows.len() - 1);
        assert_eq!(average[0][0], "average");
        for col in 1..4 {
            let mean = samples.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / samples.len() as f64;
            let avg: f64 = average[0][col].parse().unwrap();
            assert!((mean - avg).abs() <= 1e-12 * avg.abs().max(1.0), "{run} column {col}: {mean} vs {avg}");
        }
    }
}
