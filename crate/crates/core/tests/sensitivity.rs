use bonnet_core::bonnet::{forward_with_schedule, forward_with_sensitivity, outer_gradient, outer_objective};
use bonnet_core::grid::{Grid, Image, Sinogram};
use bonnet_core::phantom::{add_noise, generate_ensemble};
use bonnet_core::radon::RadonOperator;
use bonnet_core::regularizer::{RegParams, Regularizer};
use bonnet_core::solver::SolverConfig;

struct Setup {
    op: RadonOperator,
    truths: Vec<Image>,
    data: Vec<Sinogram>,
}

fn setup() -> Setup {
    let grid = Grid::new(8).unwrap();
    let op = RadonOperator::with_default_beamlets(grid, 5).unwrap();
    let set = generate_ensemble(grid, 2, 11);
    let data = set
        .images
        .iter()
        .enumerate()
        .map(|(i, u)| add_noise(&op.apply(u).unwrap(), 1e-2, 50 + i as u64))
        .collect();
    Setup { op, truths: set.images, data }
}

fn five_layers() -> SolverConfig {
    SolverConfig {
        tol: 1e-14,
        max_iters: 5,
        ..SolverConfig::training()
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Central difference of the final layer along component `k` of `μ`, with
/// the step schedule frozen.
fn fd_column(s: &Setup, i: usize, reg: &Regularizer, mu: &RegParams, steps: &[f64], k: usize, eps: f64) -> Vec<f64> {
    let shifted = |sign: f64| {
        let mut v = mu.to_vec();
        v[k] += sign * eps;
        forward_with_schedule(&s.op, &s.data[i], reg, &mu.with_values(&v), steps, 2).unwrap().0
    };
    let (p, m) = (shifted(1.0), shifted(-1.0));
    p.values().iter().zip(m.values()).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

#[test]
fn sensitivity_matches_finite_differences_in_lambda() {
    let s = setup();
    let reg = Regularizer::fractional_fixed_s(s.op.grid(), 0.4).unwrap();
    let mu = RegParams::lambda(1e-3);
    for i in 0..2 {
        let (_, sens, trace) = forward_with_sensitivity(&s.op, &s.data[i], &reg, &mu, &five_layers(), 2).unwrap();
        assert_eq!(trace.layers(), 5);
        let fd = fd_column(&s, i, &reg, &mu, &trace.steps, 0, 1e-3 * 1e-3);
        let err = rel_err(sens.columns[0].values(), &fd);
        assert!(err < 1e-4, "sample {i}: {err}");
    }
}

#[test]
fn sensitivity_matches_finite_differences_in_exponent() {
    let s = setup();
    let reg = Regularizer::fractional(s.op.grid());
    let mu = RegParams::lambda_s(1e-3, 0.5);
    for i in 0..2 {
        let (_, sens, trace) = forward_with_sensitivity(&s.op, &s.data[i], &reg, &mu, &five_layers(), 2).unwrap();
        let fd_l = fd_column(&s, i, &reg, &mu, &trace.steps, 0, 1e-6);
        assert!(rel_err(sens.columns[0].values(), &fd_l) < 1e-4);
        let fd_s = fd_column(&s, i, &reg, &mu, &trace.steps, 1, 1e-4);
        let err = rel_err(sens.columns[1].values(), &fd_s);
        assert!(err < 1e-3, "sample {i}: {err}");
    }
}

#[test]
fn replaying_the_schedule_reproduces_the_forward_pass() {
    let s = setup();
    let reg = Regularizer::fractional(s.op.grid());
    let mu = RegParams::lambda_s(2e-3, 0.3);
    let (u, sens, trace) = forward_with_sensitivity(&s.op, &s.data[0], &reg, &mu, &five_layers(), 2).unwrap();
    let (v, sens2, _) = forward_with_schedule(&s.op, &s.data[0], &reg, &mu, &trace.steps, 2).unwrap();
    assert_eq!(u, v);
    assert_eq!(sens, sens2);
}

#[test]
fn outer_gradient_matches_finite_differences_of_the_loss() {
    let s = setup();
    let reg = Regularizer::fractional(s.op.grid());
    let mu = RegParams::lambda_s(1e-3, 0.5);
    let mut recon = vec![];
    let mut sens = vec![];
    let mut schedules = vec![];
    for i in 0..2 {
        let (u, d, trace) = forward_with_sensitivity(&s.op, &s.data[i], &reg, &mu, &five_layers(), 2).unwrap();
        recon.push(u);
        sens.push(d);
        schedules.push(trace.steps);
    }
    let truths: Vec<&Image> = s.truths.iter().collect();
    let grad = outer_gradient(&truths, &recon, &sens).unwrap();
    let phi_at = |values: &[f64]| {
        let p = mu.with_values(values);
        let rec: Vec<Image> = (0..2)
            .map(|i| forward_with_schedule(&s.op, &s.data[i], &reg, &p, &schedules[i], 2).unwrap().0)
            .collect();
        outer_objective(&truths, &rec).unwrap()
    };
    for (k, eps) in [(0, 1e-6), (1, 1e-4)] {
        let mut plus = mu.to_vec();
        let mut minus = mu.to_vec();
        plus[k] += eps;
        minus[k] -= eps;
        let fd = (phi_at(&plus) - phi_at(&minus)) / (2.0 * eps);
        assert!((grad[k] - fd).abs() <= 1e-3 * fd.abs(), "component {k}: {} vs {fd}", grad[k]);
    }
}

#[test]
fn no_regularizer_has_no_sensitivity() {
    let s = setup();
    let (_, sens, _) =
        forward_with_sensitivity(&s.op, &s.data[0], &Regularizer::None, &RegParams::lambda(1e-3), &five_layers(), 2).unwrap();
    assert!(sens.columns.iter().all(|c| c.values().iter().all(|v| *v == 0.0)));
}
