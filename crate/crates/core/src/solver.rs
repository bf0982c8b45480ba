//! Projected gradient descent with Armijo backtracking for the
//! reconstruction problem
//!
//! ```text
//! min_{u >= 0}  ½‖K u − f‖² + R(μ, u)
//! ```
//!
//! Each accepted step is one layer of the unrolled network. The step for a
//! batch of `m` samples is `α/m`; line search controls the effective step
//! either way.

use crate::error::{check_len, Error, Result};
use crate::grid::{dot, Image, Sinogram};
use crate::radon::RadonOperator;
use crate::regularizer::{RegParams, Regularizer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Stop once `‖u − P(u − ∇J(u))‖₂ <= tol`.
    pub tol: f64,
    /// Layer cap.
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// First trial step; later layers start from twice the last accepted step.
    pub alpha_init: f64,
    pub max_backtracks: usize,
    /// Keep the applied step `α/m` at or below `1/L`, `L` bounding the
    /// curvature the sensitivity recursion sees. Needed only when layers are
    /// differentiated; a standalone solve may take longer steps.
    pub cap_step: bool,
}

impl SolverConfig {
    /// Testing-phase defaults: tight tolerance, deep network.
    pub fn testing() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 2000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            alpha_init: 1.0,
            max_backtracks: 50,
            cap_step: false,
        }
    }

    /// Training-phase defaults: loose tolerance, shallow network.
    pub fn training() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 300,
            cap_step: true,
            ..Self::testing()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.armijo_c > 0.0
            && self.armijo_c < 0.5
            && self.alpha_init > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid solver configuration {self:?}")))
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::testing()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitReason {
    Converged,
    MaxIters,
    /// Ran a prescribed step schedule to the end.
    Schedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    /// Objective at `u_0` followed by the objective after every layer.
    pub objectives: Vec<f64>,
    /// Accepted `α` of every layer (the applied step is `α/m`).
    pub steps: Vec<f64>,
    /// Projected-gradient residual at the initial and final iterate.
    pub initial_residual: f64,
    pub final_residual: f64,
    pub exit: ExitReason,
}

impl SolveTrace {
    pub fn layers(&self) -> usize {
        self.steps.len()
    }
}

/// `P(z) = max(0, z)` elementwise.
pub fn project_nonneg(u: &Image) -> Image {
    u.map(|v| v.max(0.0))
}

fn check_problem(op: &RadonOperator, f: &Sinogram, u: &Image) -> Result<()> {
    check_len("sinogram angles", op.n_theta(), f.n_theta())?;
    check_len("sinogram beamlets", op.n_tau(), f.n_tau())?;
    if u.grid() != op.grid() {
        return Err(Error::Dimension {
            what: "image grid",
            expected: op.grid().n(),
            actual: u.grid().n(),
        });
    }
    Ok(())
}

/// Per-sample objective `½‖Ku − f‖² + R(μ, u)`.
pub fn inner_objective(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    u: &Image,
) -> Result<f64> {
    check_problem(op, f, u)?;
    let ku = op.apply(u)?;
    let misfit: f64 = ku
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * misfit + reg.penalty_value(mu, u)?)
}

/// One forward-propagation layer `P(u − (α/m)[Kᵀ(Ku − f) + ∇R(μ, u)])`.
pub fn gradient_step(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    u: &Image,
    alpha: f64,
    m: usize,
) -> Result<Image> {
    if !(alpha >= 0.0) || m == 0 {
        return Err(Error::Domain(format!("invalid step α = {alpha}, m = {m}")));
    }
    let problem = Problem::new(op, f, reg, mu)?;
    let point = problem.evaluate(u.clone())?;
    let grad = problem.gradient(&point);
    let t = alpha / m as f64;
    let z: Vec<f64> = u.values().iter().zip(&grad).map(|(x, g)| x - t * g).collect();
    Ok(project_nonneg(&Image::from_vec(u.grid(), z)?))
}

/// Runs projected gradient descent from `u0` until the projected-gradient
/// residual drops below `config.tol` or the layer cap is hit.
pub fn solve_inner(
    op: &RadonOperator,
    f: &Sinogram,
    reg: &Regularizer,
    mu: &RegParams,
    config: &SolverConfig,
    u0: &Image,
) -> Result<(Image, SolveTrace)> {
    let problem = Problem::new(op, f, reg, mu)?;
    run_layers(&problem, config, u0, 1, None, |_| Ok(()))
}

/// A reconstruction problem with fixed data and parameters.
pub(crate) struct Problem<'a> {
    pub op: &'a RadonOperator,
    pub f: &'a Sinogram,
    pub reg: &'a Regularizer,
    pub mu: RegParams,
}

/// An iterate together with the quantities its objective and gradient share.
pub(crate) struct Point {
    pub u: Image,
    ku: Vec<f64>,
    reg_grad: Image,
    pub value: f64,
}

impl Point {
    pub fn reg_grad(&self) -> &Image {
        &self.reg_grad
    }
}

impl<'a> Problem<'a> {
    pub fn new(
        op: &'a RadonOperator,
        f: &'a Sinogram,
        reg: &'a Regularizer,
        mu: &RegParams,
    ) -> Result<Self> {
        check_len("sinogram angles", op.n_theta(), f.n_theta())?;
        check_len("sinogram beamlets", op.n_tau(), f.n_tau())?;
        reg.validate(mu)?;
        Ok(Self {
            op,
            f,
            reg,
            mu: *mu,
        })
    }

    pub fn evaluate(&self, u: Image) -> Result<Point> {
        check_problem(self.op, self.f, &u)?;
        let mut ku = vec![0.0; self.op.rows()];
        self.op.apply_slice(u.values(), &mut ku);
        let misfit: f64 = ku
            .iter()
            .zip(self.f.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let (penalty, reg_grad) = self.reg.value_and_grad(&self.mu, &u)?;
        Ok(Point {
            u,
            ku,
            reg_grad,
            value: 0.5 * misfit + penalty,
        })
    }

    /// `Kᵀ(Ku − f) + ∇R(μ, u)`.
    pub fn gradient(&self, point: &Point) -> Vec<f64> {
        let residual: Vec<f64> = point
            .ku
            .iter()
            .zip(self.f.values())
            .map(|(a, b)| a - b)
            .collect();
        let mut g = vec![0.0; self.op.grid().len()];
        self.op.adjoint_slice(&residual, &mut g);
        for (gi, ri) in g.iter_mut().zip(point.reg_grad.values()) {
            *gi += ri;
        }
        g
    }
}

/// `‖u − P(u − g)‖₂`.
pub(crate) fn projected_residual(u: &[f64], g: &[f64]) -> f64 {
    u.iter()
        .zip(g)
        .map(|(&x, &gi)| {
            let d = x - (x - gi).max(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// What a layer hands to observers: the previous iterate, the
/// pre-projection update `z_j` and the applied step `α/m`.
pub(crate) struct Layer<'p> {
    pub prev: &'p Point,
    pub z: &'p [f64],
    pub step: f64,
}

/// The layer loop shared by standalone solves and training passes. With a
/// `schedule`, exactly those `α` are used and neither line search nor the
/// stopping test runs.
pub(crate) fn run_layers(
    problem: &Problem<'_>,
    config: &SolverConfig,
    u0: &Image,
    m: usize,
    schedule: Option<&[f64]>,
    mut on_layer: impl FnMut(&Layer<'_>) -> Result<()>,
) -> Result<(Image, SolveTrace)> {
    config.validate()?;
    if m == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    if u0.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("initial guess must be nonnegative".into()));
    }
    let grid = u0.grid();
    let mf = m as f64;

    let mut point = problem.evaluate(u0.clone())?;
    let mut grad = problem.gradient(&point);
    let initial_residual = projected_residual(point.u.values(), &grad);
    let mut trace = SolveTrace {
        objectives: vec![point.value],
        steps: Vec::new(),
        initial_residual,
        final_residual: initial_residual,
        exit: ExitReason::MaxIters,
    };

    let layers = schedule.map_or(config.max_iters, <[f64]>::len);
    // Beyond 1/L the frozen-step derivative of a layer is expansive.
    let lipschitz = problem.op.normal_norm() + problem.reg.curvature_bound(&problem.mu);
    let alpha_max = if config.cap_step && lipschitz > 0.0 { mf / lipschitz } else { f64::INFINITY };
    let mut alpha = config.alpha_init.min(alpha_max);
    let mut z = vec![0.0; grid.len()];
    for layer in 0..layers {
        if schedule.is_none() && trace.final_residual <= config.tol {
            trace.exit = ExitReason::Converged;
            break;
        }
        let mut backtracks = 0;
        let next = loop {
            if let Some(steps) = schedule {
                alpha = steps[layer];
            }
            let t = alpha / mf;
            for ((zi, &x), &g) in z.iter_mut().zip(point.u.values()).zip(&grad) {
                *zi = x - t * g;
            }
            let trial = Image::from_vec(grid, z.iter().map(|&v| v.max(0.0)).collect())?;
            let moved = squared_distance(trial.values(), point.u.values());
            let candidate = problem.evaluate(trial)?;
            if schedule.is_some() || candidate.value <= point.value - config.armijo_c / t * moved {
                break candidate;
            }
            backtracks += 1;
            if backtracks > config.max_backtracks {
                trace.exit = ExitReason::MaxIters;
                return Err(Error::LineSearch {
                    layer,
                    backtracks: config.max_backtracks,
                    trace: Box::new(trace),
                });
            }
            alpha *= config.backtrack_factor;
        };

        on_layer(&Layer {
            prev: &point,
            z: &z,
            step: alpha / mf,
        })?;

        point = next;
        grad = problem.gradient(&point);
        trace.objectives.push(point.value);
        trace.steps.push(alpha);
        trace.final_residual = projected_residual(point.u.values(), &grad);
        alpha = (2.0 * alpha).min(alpha_max);
    }
    if schedule.is_some() {
        trace.exit = ExitReason::Schedule;
    } else if trace.final_residual <= config.tol {
        trace.exit = ExitReason::Converged;
    }
    Ok((point.u, trace))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    dot(&d, &d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::phantom::shepp_logan;
    use crate::regularizer::DEFAULT_XI;

    fn setup(n: usize, n_theta: usize) -> (RadonOperator, Image, Sinogram) {
        let grid = Grid::new(n).unwrap();
        let op = RadonOperator::with_default_beamlets(grid, n_theta).unwrap();
        let truth = shepp_logan(grid);
        let f = op.apply(&truth).unwrap();
        (op, truth, f)
    }

    #[test]
    fn applied_steps_stay_below_inverse_curvature() {
        let (op, _, f) = setup(16, 10);
        let reg = Regularizer::fractional(op.grid());
        let mu = RegParams::lambda_s(1e-3, 0.4);
        let m = 20;
        let config = SolverConfig { max_iters: 100, ..SolverConfig::training() };
        let (_, _, trace) = crate::bonnet::forward_with_sensitivity(&op, &f, &reg, &mu, &config, m).unwrap();
        let limit = 1.0 / (op.normal_norm() + reg.curvature_bound(&mu));
        assert!(trace.steps.iter().all(|a| a / m as f64 <= limit * (1.0 + 1e-12)));
        // The warm start reaches the cap instead of creeping at α₀/m.
        assert!(trace.steps.iter().any(|a| a / m as f64 >= 0.5 * limit));
    }

    #[test]
    fn projection() {
        let grid = Grid::new(2).unwrap();
        let u = Image::from_vec(grid, vec![-1.0, 2.0, 0.0, 3.5]).unwrap();
        let p = project_nonneg(&u);
        assert_eq!(p.values(), &[0.0, 2.0, 0.0, 3.5]);
        assert_eq!(project_nonneg(&p), p);
    }

    #[test]
    fn objective_special_cases() {
        let (op, truth, f) = setup(8, 4);
        let none = Regularizer::None;
        let mu = RegParams::lambda(1.0);
        assert!(inner_objective(&op, &f, &none, &mu, &truth).unwrap().abs() < 1e-28);
        let zero = Image::zeros(op.grid());
        let expected = 0.5 * f.norm2().powi(2);
        let got = inner_objective(&op, &f, &none, &mu, &zero).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        let frac = Regularizer::fractional(op.grid());
        let got = inner_objective(&op, &f, &frac, &RegParams::lambda_s(1e-3, 0.4), &zero).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn step_special_cases() {
        let (op, truth, f) = setup(8, 4);
        let mu = RegParams::lambda(1.0);
        let grid = op.grid();
        let mut s = crate::rng::Stream::new(3);
        let u = Image::from_fn(grid, |_, _| s.uniform_in(-1.0, 1.0));
        let tv = Regularizer::tv(grid, DEFAULT_XI).unwrap();
        assert_eq!(gradient_step(&op, &f, &tv, &mu, &u, 0.0, 1).unwrap(), project_nonneg(&u));
        let fixed = gradient_step(&op, &f, &Regularizer::None, &mu, &truth, 3.0, 2).unwrap();
        assert!(fixed.axpy(-1.0, &truth).unwrap().norm2() < 1e-14);
    }

    #[test]
    fn noiseless_unregularized_recovery() {
        // An odd beamlet count: with an even one this grid keeps a single
        // near-null mode (eigenvalue ~3e-5) and needs ~10⁵ layers.
        let grid = Grid::new(16).unwrap();
        let op = RadonOperator::assemble(grid, 24, 25).unwrap();
        let truth = shepp_logan(grid);
        let f = op.apply(&truth).unwrap();
        let config = SolverConfig {
            tol: 1e-9,
            max_iters: 5000,
            ..SolverConfig::testing()
        };
        let (u, trace) = solve_inner(
            &op,
            &f,
            &Regularizer::None,
            &RegParams::lambda(1.0),
            &config,
            &Image::zeros(op.grid()),
        )
        .unwrap();
        let rel = u.axpy(-1.0, &truth).unwrap().norm2() / truth.norm2();
        assert!(rel < 1e-3, "relative error {rel} after {} layers, residual {}", trace.layers(), trace.final_residual);
        assert!(trace.objectives.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let (op, _, f) = setup(8, 4);
        let reg = Regularizer::fractional(op.grid());
        let mu = RegParams::lambda_s(1e-3, 0.5);
        let config = SolverConfig {
            tol: 1e-8,
            ..SolverConfig::testing()
        };
        let (u, _) = solve_inner(&op, &f, &reg, &mu, &config, &Image::zeros(op.grid())).unwrap();
        let (_, trace) = solve_inner(&op, &f, &reg, &mu, &config, &u).unwrap();
        assert!(trace.layers() <= 1);
        assert_eq!(trace.exit, ExitReason::Converged);
    }

    #[test]
    fn iterates_feasible_and_monotone() {
        let (op, _, f) = setup(12, 5);
        let grid = op.grid();
        let cases = [
            (Regularizer::tv(grid, DEFAULT_XI).unwrap(), RegParams::lambda(1e-4)),
            (Regularizer::fractional(grid), RegParams::lambda_s(1e-4, 0.3)),
        ];
        for (reg, mu) in &cases {
            let problem = Problem::new(&op, &f, reg, mu).unwrap();
            let mut feasible = true;
            let config = SolverConfig {
                max_iters: 200,
                ..SolverConfig::testing()
            };
            let (u, trace) = run_layers(&problem, &config, &Image::zeros(grid), 1, None, |layer| {
                feasible &= layer.prev.u.values().iter().all(|&v| v >= 0.0);
                Ok(())
            })
            .unwrap();
            assert!(feasible && u.min() >= 0.0);
            assert!(trace.objectives.windows(2).all(|w| w[1] <= w[0]));
            if trace.exit == ExitReason::Converged {
                assert!(trace.final_residual <= config.tol);
            }
        }
    }

    #[test]
    fn strictly_convex_solutions_agree() {
        let (op, truth, f) = setup(10, 6);
        let reg = Regularizer::fractional(op.grid());
        let mu = RegParams::lambda_s(1e-3, 0.5);
        let config = SolverConfig {
            tol: 1e-7,
            max_iters: 20_000,
            ..SolverConfig::testing()
        };
        let (a, ta) = solve_inner(&op, &f, &reg, &mu, &config, &Image::zeros(op.grid())).unwrap();
        let (b, tb) = solve_inner(&op, &f, &reg, &mu, &config, &truth.scale(2.0)).unwrap();
        assert_eq!(ta.exit, ExitReason::Converged);
        assert_eq!(tb.exit, ExitReason::Converged);
        let gap = crate::grid::l2_norm(&a.axpy(-1.0, &b).unwrap());
        assert!(gap < 10.0 * config.tol, "gap {gap}");
    }

    #[test]
    fn negative_start_rejected() {
        let (op, _, f) = setup(4, 2);
        let u0 = Image::filled(op.grid(), -1.0);
        let r = solve_inner(&op, &f, &Regularizer::None, &RegParams::lambda(1.0), &SolverConfig::default(), &u0);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
