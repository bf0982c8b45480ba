//! The bilevel network: sensitivity propagation through unrolled layers,
//! the outer loss and its gradient, training of `μ`, and testing-phase
//! reconstruction.
//!
//! For every layer `u_j = P(z_j)` with
//! `z_j = u_{j-1} − (α/m)[Kᵀ(Ku_{j-1} − f) + ∇R(μ, u_{j-1})]`, each column of
//! the sensitivity `du/dμ` is pushed forward as
//!
//! ```text
//! du_j/dμ = M_j ⊙ [ v − (α/m)(KᵀK v + ∂_u∇R · v) − (α/m) ∂_μ∇R ],   v = du_{j-1}/dμ
//! ```
//!
//! where `M_j = 1{z_j >= 0}` is the generalized derivative of the projection.
//! The step `α` chosen by line search is held constant in the derivative.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::grid::{l2_inner, l2_norm, Image, Sinogram};
use crate::radon::RadonOperator;
use crate::regularizer::{RegParams, Regularizer};
use crate::solver::{run_layers, solve_inner, Layer, Problem, SolveTrace, SolverConfig};

/// A ground-truth image and its measured sinogram.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub truth: Image,
    pub data: Sinogram,
}

/// `du/dμ`, one image-shaped column per component of `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivity {
    pub columns: Vec<Image>,
}

impl Sensitivity {
    fn zeros(dim: usize, like: &Image) -> Self {
        Self {
            columns: vec![Image::zeros(like.grid()); dim],
        }
    }
}

/// Runs the training-phase layers from `u_0 = 0`, `du_0/dμ = 0`, choosing
/// each step by line search.
pub fn forward_with_sensitivity(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    config: &SolverConfig,
    m: usize,
) -> Result<(Image, Sensitivity, SolveTrace)> {
    propagate(op, f, reg, mu, config, m, None)
}

/// Like [`forward_with_sensitivity`] but replays a recorded step schedule,
/// one layer per entry, with no line search and no stopping test.
pub fn forward_with_schedule(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    steps: &[f64],
    m: usize,
) -> Result<(Image, Sensitivity, SolveTrace)> {
    propagate(op, f, reg, mu, &SolverConfig::training(), m, Some(steps))
}

fn propagate(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    config: &SolverConfig,
    m: usize,
    schedule: Option<&[f64]>,
) -> Result<(Image, Sensitivity, SolveTrace)> {
    let problem = Problem::new(op, f, reg, mu)?;
    let u0 = Image::zeros(op.grid());
    let mut sens = Sensitivity::zeros(mu.dim(), &u0);
    let propagate_sens = !matches!(reg, Regularizer::None);
    let mut ku = vec![0.0; op.rows()];
    let mut ktku = vec![0.0; op.grid().len()];

    let (u, trace) = run_layers(&problem, config, &u0, m, schedule, |layer: &Layer<'_>| {
        if !propagate_sens {
            return Ok(());
        }
        let t = layer.step;
        let prev = &layer.prev.u;
        let dmu = reg.dmu_given_grad(mu, prev, layer.prev.reg_grad())?;
        for (k, column) in sens.columns.iter_mut().enumerate() {
            op.apply_slice(column.values(), &mut ku);
            op.adjoint_slice(&ku, &mut ktku);
            let jvp = reg.grad_term_jvp(mu, prev, column)?;
            let forcing = dmu.get(k);
            let values = column.values_mut();
            for i in 0..values.len() {
                if layer.z[i] >= 0.0 {
                    let mut w = values[i] - t * (ktku[i] + jvp.values()[i]);
                    if let Some(d) = forcing {
                        w -= t * d.values()[i];
                    }
                    values[i] = w;
                } else {
                    values[i] = 0.0;
                }
            }
        }
        Ok(())
    })?;
    Ok((u, sens, trace))
}

fn check_pairs(truths: &[&Image], recon: &[Image]) -> Result<()> {
    check_len("reconstruction count", truths.len(), recon.len())?;
    if truths.is_empty() {
        return Err(Error::Domain("need at least one sample".into()));
    }
    Ok(())
}

/// `φ = (1/2m) Σ ‖u_i − u_true,i‖²` in the quadrature norm.
pub fn outer_objective(truths: &[&Image], recon: &[Image]) -> Result<f64> {
    check_pairs(truths, recon)?;
    let mut total = 0.0;
    for (t, u) in truths.iter().zip(recon) {
        total += l2_norm(&u.axpy(-1.0, t)?).powi(2);
    }
    Ok(total / (2.0 * recon.len() as f64))
}

/// `∇φ_k = (1/m) Σ_i ⟨u_i − u_true,i, (du_i/dμ)_k⟩` in the quadrature inner product.
pub fn outer_gradient(truths: &[&Image], recon: &[Image], sens: &[Sensitivity]) -> Result<Vec<f64>> {
    check_pairs(truths, recon)?;
    check_len("sensitivity count", recon.len(), sens.len())?;
    let dim = sens[0].columns.len();
    let mut grad = vec![0.0; dim];
    for ((t, u), s) in truths.iter().zip(recon).zip(sens) {
        check_len("sensitivity columns", dim, s.columns.len())?;
        let residual = u.axpy(-1.0, t)?;
        for (g, col) in grad.iter_mut().zip(&s.columns) {
            *g += l2_inner(&residual, col)?;
        }
    }
    let m = recon.len() as f64;
    Ok(grad.into_iter().map(|g| g / m).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Relative stopping tolerance on the projected gradient of `φ`.
    pub outer_tol: f64,
    /// Cap on outer iterations.
    pub q_max: usize,
    /// Layers of the training-phase network.
    pub inner: SolverConfig,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// First trial learning rate. When absent, it is chosen so that no
    /// component of `μ` moves by more than half its magnitude.
    pub beta_init: Option<f64>,
    pub mu0: RegParams,
}

impl TrainConfig {
    pub fn new(mu0: RegParams) -> Self {
        Self {
            outer_tol: 1e-3,
            q_max: 100,
            inner: SolverConfig::training(),
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 20,
            beta_init: None,
            mu0,
        }
    }

    fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        let ok = self.outer_tol > 0.0
            && self.armijo_c > 0.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.beta_init.map_or(true, |b| b > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainStatus {
    Converged,
    MaxIterations,
    /// The outer line search gave up; the best parameters seen are returned.
    LineSearchFailed,
}

impl TrainStatus {
    pub fn name(&self) -> &'static str {
        match self {
            TrainStatus::Converged => "converged",
            TrainStatus::MaxIterations => "max_iterations",
            TrainStatus::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub mu_star: RegParams,
    /// `μ` after every accepted outer iteration, starting with `μ_0`.
    pub mu_history: Vec<RegParams>,
    pub phi_history: Vec<f64>,
    pub gradient_history: Vec<Vec<f64>>,
    /// Layers used per sample, for every accepted iterate.
    pub layer_counts: Vec<Vec<usize>>,
    /// Forward passes over the whole batch, including rejected trials.
    pub evaluations: usize,
    pub status: TrainStatus,
    /// Final-layer reconstructions of the training samples at `mu_star`.
    pub reconstructions: Vec<Image>,
    pub wall_clock: Duration,
}

impl TrainResult {
    pub fn outer_iterations(&self) -> usize {
        self.phi_history.len() - 1
    }
}

struct Evaluation {
    mu: RegParams,
    phi: f64,
    grad: Vec<f64>,
    recon: Vec<Image>,
    layers: Vec<usize>,
}

fn evaluate(
    samples: &[TrainingSample],
    op: &RadonOperator,
    reg: &Regularizer,
    mu: &RegParams,
    inner: &SolverConfig,
) -> Result<Evaluation> {
    let m = samples.len();
    let passes: Vec<(Image, Sensitivity, SolveTrace)> = samples
        .par_iter()
        .map(|s| forward_with_sensitivity(op, &s.data, reg, mu, inner, m))
        .collect::<Result<_>>()?;
    let truths: Vec<&Image> = samples.iter().map(|s| &s.truth).collect();
    let mut recon = Vec::with_capacity(m);
    let mut sens = Vec::with_capacity(m);
    let mut layers = Vec::with_capacity(m);
    for (u, s, trace) in passes {
        layers.push(trace.layers());
        recon.push(u);
        sens.push(s);
    }
    let phi = outer_objective(&truths, &recon)?;
    let grad = outer_gradient(&truths, &recon, &sens)?;
    Ok(Evaluation {
        mu: *mu,
        phi,
        grad,
        recon,
        layers,
    })
}

fn projected_step(mu: &RegParams, grad: &[f64], beta: f64) -> RegParams {
    let values: Vec<f64> = mu.to_vec().iter().zip(grad).map(|(x, g)| x - beta * g).collect();
    mu.with_values(&values).project()
}

fn distance(a: &RegParams, b: &RegParams) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Learns `μ` by projected gradient descent on `φ` with Armijo backtracking;
/// every trial `μ` re-runs all forward passes.
pub fn train(
    samples: &[TrainingSample],
    op: &RadonOperator,
    reg: &Regularizer,
    config: &TrainConfig,
) -> Result<TrainResult> {
    if samples.is_empty() {
        return Err(Error::Domain("training needs at least one sample".into()));
    }
    config.validate()?;
    reg.validate(&config.mu0)?;
    let started = Instant::now();

    let mut current = evaluate(samples, op, reg, &config.mu0, &config.inner)?;
    let mut evaluations = 1;
    let mut mu_history = vec![current.mu];
    let mut phi_history = vec![current.phi];
    let mut gradient_history = vec![current.grad.clone()];
    let mut layer_counts = vec![current.layers.clone()];

    let residual = |e: &Evaluation| distance(&e.mu, &projected_step(&e.mu, &e.grad, 1.0));
    let r0 = residual(&current);
    let mut beta = config.beta_init.unwrap_or_else(|| initial_beta(&current.mu, &current.grad));
    let mut status = TrainStatus::MaxIterations;

    for _ in 0..config.q_max {
        let r = residual(&current);
        if r == 0.0 || r <= config.outer_tol * r0 {
            status = TrainStatus::Converged;
            break;
        }
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial_mu = projected_step(&current.mu, &current.grad, beta);
            let moved = distance(&trial_mu, &current.mu);
            if moved == 0.0 {
                break;
            }
            let trial = evaluate(samples, op, reg, &trial_mu, &config.inner)?;
            evaluations += 1;
            if trial.phi <= current.phi - config.armijo_c / beta * moved * moved {
                accepted = Some(trial);
                break;
            }
            beta *= config.backtrack_factor;
        }
        let Some(next) = accepted else {
            status = TrainStatus::LineSearchFailed;
            break;
        };
        current = next;
        mu_history.push(current.mu);
        phi_history.push(current.phi);
        gradient_history.push(current.grad.clone());
        layer_counts.push(current.layers.clone());
        beta *= 2.0;
    }

    Ok(TrainResult {
        mu_star: current.mu,
        mu_history,
        phi_history,
        gradient_history,
        layer_counts,
        evaluations,
        status,
        reconstructions: current.recon,
        wall_clock: started.elapsed(),
    })
}

/// Largest rate that moves no component of `μ` by more than half its size.
fn initial_beta(mu: &RegParams, grad: &[f64]) -> f64 {
    mu.to_vec()
        .iter()
        .zip(grad)
        .filter(|(_, g)| **g != 0.0)
        .map(|(x, g)| 0.5 * x.abs() / g.abs())
        .fold(f64::INFINITY, f64::min)
        .min(1e12)
}

/// Testing-phase reconstruction from `u_0 = 0` with the learned parameters.
pub fn reconstruct(
    mu_star: &RegParams,
    f: &Sinogram,
    op: &RadonOperator,
    reg: &Regularizer,
    config: &SolverConfig,
) -> Result<(Image, SolveTrace)> {
    solve_inner(op, f, reg, mu_star, config, &Image::zeros(op.grid()))
}
