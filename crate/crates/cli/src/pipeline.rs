//! The experiment pipeline behind the commands: dataset synthesis, training,
//! testing-phase reconstruction and scoring, all in memory.

use std::ops::Range;

use anyhow::{bail, Result};
use bonnet_core::bonnet::{self, TrainConfig, TrainResult, TrainingSample};
use bonnet_core::grid::{Grid, Image, Sinogram};
use bonnet_core::metrics::MetricsReport;
use bonnet_core::phantom::{add_noise, generate_ensemble};
use bonnet_core::radon::RadonOperator;
use bonnet_core::regularizer::{RegKind, RegParams, Regularizer};
use bonnet_core::solver::{SolveTrace, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Phantoms with their clean and noisy sinograms.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub op: RadonOperator,
    pub truths: Vec<Image>,
    pub clean: Vec<Sinogram>,
    pub noisy: Vec<Sinogram>,
    pub train_count: usize,
    pub noise_seeds: Vec<u64>,
}

impl Dataset {
    pub fn synthesize(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let op = operator(config)?;
        let set = generate_ensemble(op.grid(), config.count, config.seed);
        let clean: Vec<Sinogram> = set.images.par_iter().map(|u| op.apply(u)).collect::<Result<_, _>>()?;
        let noise_seeds: Vec<u64> = (0..config.count).map(|i| config.noise_seed(i)).collect();
        let noisy = clean
            .iter()
            .zip(&noise_seeds)
            .map(|(f, &seed)| add_noise(f, config.noise, seed))
            .collect();
        Ok(Self {
            op,
            truths: set.images,
            clean,
            noisy,
            train_count: config.train_count,
            noise_seeds,
        })
    }

    pub fn grid(&self) -> Grid {
        self.op.grid()
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train_count
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train_count..self.truths.len()
    }

    pub fn training_samples(&self) -> Vec<TrainingSample> {
        self.train_range()
            .map(|i| TrainingSample {
                truth: self.truths[i].clone(),
                data: self.noisy[i].clone(),
            })
            .collect()
    }

    /// The same phantoms and noise draws seen through a different scan.
    pub fn with_n_theta(&self, config: &RunConfig, n_theta: usize) -> Result<Self> {
        let config = RunConfig { n_theta, ..config.clone() };
        let op = operator(&config)?;
        let clean: Vec<Sinogram> = self.truths.par_iter().map(|u| op.apply(u)).collect::<Result<_, _>>()?;
        let noisy = clean
            .iter()
            .zip(&self.noise_seeds)
            .map(|(f, &seed)| add_noise(f, config.noise, seed))
            .collect();
        Ok(Self {
            op,
            clean,
            noisy,
            ..self.clone()
        })
    }
}

pub fn operator(config: &RunConfig) -> Result<RadonOperator> {
    let grid = Grid::new(config.n)?;
    Ok(match config.n_tau {
        Some(n_tau) => RadonOperator::assemble(grid, config.n_theta, n_tau)?,
        None => RadonOperator::with_default_beamlets(grid, config.n_theta)?,
    })
}

pub fn regularizer(config: &RunConfig, grid: Grid) -> Result<Regularizer> {
    Ok(match config.kind()? {
        RegKind::None => Regularizer::None,
        RegKind::Tv => Regularizer::tv(grid, config.xi)?,
        RegKind::Fractional if config.learns_s()? => Regularizer::fractional(grid),
        RegKind::Fractional => Regularizer::fractional_fixed_s(grid, config.s)?,
    })
}

pub fn train_config(config: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        outer_tol: config.outer_tol,
        q_max: config.outer_iters,
        inner: SolverConfig {
            tol: config.tol_train,
            max_iters: config.layers_train,
            ..SolverConfig::training()
        },
        ..TrainConfig::new(initial_mu(config)?)
    })
}

/// `mu0` restricted to the parameters `config`'s regularizer has, so one
/// `"λ,s"` setting can drive a whole sweep of regularizers.
pub fn initial_mu(config: &RunConfig) -> Result<RegParams> {
    let mu0 = config.mu0()?;
    mu_for(config, mu0.lambda, mu0.s)
}

pub fn test_solver(config: &RunConfig) -> SolverConfig {
    SolverConfig {
        tol: config.tol_test,
        max_iters: config.layers_test,
        ..SolverConfig::testing()
    }
}

/// Summary of a training run as written to `report.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub label: String,
    pub n_theta: usize,
    /// Learned strength; 0 for the unregularized baseline.
    pub lambda: f64,
    /// Exponent used by the fractional regularizer, learned or fixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub status: String,
    pub outer_iterations: usize,
    pub evaluations: usize,
    pub phi: Vec<f64>,
    pub lambda_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_history: Option<Vec<f64>>,
    /// Layers per training sample at each accepted iterate.
    pub layers: Vec<Vec<usize>>,
}

impl TrainReport {
    pub fn new(config: &RunConfig, result: &TrainResult) -> Result<Self> {
        let kind = config.kind()?;
        let none = kind == RegKind::None;
        let s_of = |mu: &RegParams| mu.s.or((kind == RegKind::Fractional).then_some(config.s));
        Ok(Self {
            label: config.label()?,
            n_theta: config.n_theta,
            lambda: if none { 0.0 } else { result.mu_star.lambda },
            s: s_of(&result.mu_star),
            status: result.status.name().into(),
            outer_iterations: result.outer_iterations(),
            evaluations: result.evaluations,
            phi: result.phi_history.clone(),
            lambda_history: result.mu_history.iter().map(|m| if none { 0.0 } else { m.lambda }).collect(),
            s_history: config
                .learns_s()?
                .then(|| result.mu_history.iter().filter_map(|m| m.s).collect()),
            layers: result.layer_counts.clone(),
        })
    }

    /// Parameters for the testing phase, in the layout the regularizer expects.
    pub fn mu_star(&self, config: &RunConfig) -> Result<RegParams> {
        mu_for(config, self.lambda, self.s)
    }
}

/// Builds `μ` from a strength and optional exponent for `config`'s regularizer.
pub fn mu_for(config: &RunConfig, lambda: f64, s: Option<f64>) -> Result<RegParams> {
    Ok(match config.kind()? {
        RegKind::None => RegParams::lambda(1.0),
        RegKind::Tv => RegParams::lambda(lambda),
        RegKind::Fractional if config.learns_s()? => match s {
            Some(s) => RegParams::lambda_s(lambda, s),
            None => bail!("this run learns s, so its parameters need an exponent"),
        },
        RegKind::Fractional => RegParams::lambda(lambda),
    })
}

pub struct Trained {
    pub result: TrainResult,
    pub report: TrainReport,
}

pub fn train(config: &RunConfig, data: &Dataset) -> Result<Trained> {
    let reg = regularizer(config, data.grid())?;
    let result = bonnet::train(&data.training_samples(), &data.op, &reg, &train_config(config)?)?;
    let report = TrainReport::new(config, &result)?;
    Ok(Trained { result, report })
}

/// Testing-phase reconstructions of `indices`, in order.
pub fn reconstruct(
    config: &RunConfig,
    data: &Dataset,
    mu: &RegParams,
    indices: Range<usize>,
) -> Result<Vec<(Image, SolveTrace)>> {
    let reg = regularizer(config, data.grid())?;
    let solver = test_solver(config);
    let items: Vec<usize> = indices.collect();
    let out = items
        .par_iter()
        .map(|&i| bonnet::reconstruct(mu, &data.noisy[i], &data.op, &reg, &solver))
        .collect::<Result<_, _>>()?;
    Ok(out)
}

pub fn score(recon: &[Image], data: &Dataset, indices: Range<usize>) -> Result<MetricsReport> {
    Ok(MetricsReport::from_pairs(recon, &data.truths[indices])?)
}
