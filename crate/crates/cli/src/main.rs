use std::path::PathBuf;

use anyhow::{Context, Result};
use bonnet_cli::commands;
use bonnet_cli::config::RunConfig;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bonnet", version, about = "Learn regularization parameters for tomographic reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all commands.
    #[arg(long, global = true, default_value = "bonnet-out")]
    out: PathBuf,
    /// Regularizer: none, tv or frac.
    #[arg(long, global = true)]
    reg: Option<String>,
    #[arg(long, global = true)]
    ntheta: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Noise level relative to the RMS of each sinogram.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Initial parameters "λ" or "λ,s"; giving s makes it learned.
    #[arg(long, global = true)]
    mu0: Option<String>,
    #[arg(long, global = true)]
    tol_train: Option<f64>,
    #[arg(long, global = true)]
    tol_test: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate phantoms and clean/noisy sinograms.
    Synth,
    /// Learn μ* on the training split.
    Train,
    /// Reconstruct the test split with μ* (or --mu).
    Reconstruct {
        /// Parameters "λ" or "λ,s", bypassing the training report.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Score all reconstructions and plot metrics against the number of angles.
    Eval,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = &cli.reg {
        c.reg = v.clone();
    }
    if let Some(v) = cli.ntheta {
        c.n_theta = v;
    }
    if let Some(v) = cli.n {
        c.n = v;
    }
    if let Some(v) = cli.noise {
        c.noise = v;
    }
    if let Some(v) = &cli.mu0 {
        c.mu0 = v.clone();
    }
    if let Some(v) = cli.tol_train {
        c.tol_train = v;
    }
    if let Some(v) = cli.tol_test {
        c.tol_test = v;
    }
    if let Command::Reconstruct { mu: Some(mu) } = &cli.command {
        c.mu = Some(mu.clone());
    }
    c.validate()?;
    Ok(c)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BONNET_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("BONNET_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    let config = resolve(&cli)?;
    match cli.command {
        Command::Synth => commands::synth(&config, &cli.out),
        Command::Train => commands::train(&config, &cli.out),
        Command::Reconstruct { .. } => commands::reconstruct(&config, &cli.out),
        Command::Eval => commands::eval(&cli.out),
    }
}
