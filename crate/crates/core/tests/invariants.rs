use bonnet_core::fraclap::SpectralLaplacian;
use bonnet_core::grid::{Grid, Image, Sinogram};
use bonnet_core::metrics::{evaluate, ssim};
use bonnet_core::phantom::{add_noise, generate_ensemble};
use bonnet_core::radon::RadonOperator;
use bonnet_core::regularizer::{RegParams, Regularizer, DEFAULT_XI};
use bonnet_core::solver::{project_nonneg, solve_inner, SolverConfig};
use proptest::prelude::*;

fn image(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Image> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| Image::from_vec(Grid::new(n).unwrap(), v).unwrap())
}

fn close(a: &Image, b: &Image, rel: f64) -> bool {
    let diff = a.axpy(-1.0, b).unwrap().norm2();
    diff <= rel * (1.0 + b.norm2())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radon_adjoint_holds_for_any_pair(
        u in image(6, -1.0, 1.0),
        f in prop::collection::vec(-1.0f64..1.0, 4 * 10),
    ) {
        let op = RadonOperator::with_default_beamlets(u.grid(), 4).unwrap();
        let f = Sinogram::from_vec(4, op.n_tau(), f).unwrap();
        let lhs = op.apply(&u).unwrap().dot(&f).unwrap();
        let rhs = u.dot(&op.apply_adjoint(&f).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + u.norm2() * f.norm2()));
    }

    #[test]
    fn projections_of_nonnegative_images_are_nonnegative(u in image(6, 0.0, 1.0), nt in 1usize..9) {
        let op = RadonOperator::with_default_beamlets(u.grid(), nt).unwrap();
        prop_assert!(op.apply(&u).unwrap().values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn fractional_powers_compose(u in image(6, -1.0, 1.0), a in 0.05f64..0.5, b in 0.05f64..0.5) {
        let lap = SpectralLaplacian::build(u.grid());
        let two = lap.apply_power(a, &lap.apply_power(b, &u).unwrap()).unwrap();
        let one = lap.apply_power(a + b, &u).unwrap();
        prop_assert!(close(&two, &one, 1e-10 * one.norm2().max(1.0)));
    }

    #[test]
    fn fractional_power_is_symmetric_positive(u in image(6, -1.0, 1.0), v in image(6, -1.0, 1.0), s in 0.01f64..0.99) {
        let lap = SpectralLaplacian::build(u.grid());
        let au = lap.apply_power(s, &u).unwrap();
        let av = lap.apply_power(s, &v).unwrap();
        let (uav, auv) = (u.dot(&av).unwrap(), au.dot(&v).unwrap());
        prop_assert!((uav - auv).abs() <= 1e-10 * (1.0 + uav.abs()));
        prop_assert!(u.dot(&au).unwrap() >= 0.0);
    }

    #[test]
    fn penalties_are_nonnegative(u in image(6, 0.0, 1.0), lambda in 1e-8f64..1e2, s in 0.01f64..0.99) {
        let grid = u.grid();
        let tv = Regularizer::tv(grid, DEFAULT_XI).unwrap();
        let frac = Regularizer::fractional(grid);
        prop_assert!(tv.penalty_value(&RegParams::lambda(lambda), &u).unwrap() >= 0.0);
        prop_assert!(frac.penalty_value(&RegParams::lambda_s(lambda, s), &u).unwrap() >= 0.0);
        prop_assert_eq!(Regularizer::None.penalty_value(&RegParams::lambda(lambda), &u).unwrap(), 0.0);
    }

    #[test]
    fn parameter_projection_is_idempotent(lambda in -1e3f64..1e3, s in -2.0f64..3.0) {
        let p = RegParams::lambda_s(lambda, s).project();
        prop_assert!(p.is_admissible());
        prop_assert_eq!(p.project(), p);
    }

    #[test]
    fn image_projection_is_idempotent(u in image(5, -1.0, 1.0)) {
        let p = project_nonneg(&u);
        prop_assert!(p.min() >= 0.0);
        prop_assert_eq!(project_nonneg(&p), p);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(a in image(12, 0.0, 1.0), b in image(12, 0.0, 1.0)) {
        // Same dynamic range for both orders so the constants agree.
        let range = 1.0;
        let ab = bonnet_core::metrics::ssim_with_range(&a, &b, range).unwrap();
        let ba = bonnet_core::metrics::ssim_with_range(&b, &a, range).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_iterates_stay_nonnegative_and_descend(seed in 0u64..1000, lambda in 1e-6f64..1e-2) {
        let grid = Grid::new(8).unwrap();
        let op = RadonOperator::with_default_beamlets(grid, 5).unwrap();
        let truth = generate_ensemble(grid, 1, seed).train()[0].clone();
        let f = add_noise(&op.apply(&truth).unwrap(), 1e-2, seed + 1);
        let reg = Regularizer::fractional(grid);
        let config = SolverConfig { max_iters: 50, ..SolverConfig::testing() };
        let (u, trace) = solve_inner(&op, &f, &reg, &RegParams::lambda_s(lambda, 0.4), &config, &Image::zeros(grid)).unwrap();
        prop_assert!(u.min() >= 0.0);
        prop_assert!(trace.objectives.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn larger_offsets_score_worse(seed in 0u64..1000, a in 0.001f64..0.05, b in 0.001f64..0.05) {
        let grid = Grid::new(16).unwrap();
        let truth = generate_ensemble(grid, 1, seed).train()[0].clone();
        let (lo, hi) = (a.min(b), a.max(b));
        let noisy = |level: f64| truth.map(|x| x + level);
        let m_lo = evaluate(&noisy(lo), &truth).unwrap();
        let m_hi = evaluate(&noisy(hi), &truth).unwrap();
        prop_assert!(m_hi.mse >= m_lo.mse);
        prop_assert!(m_hi.psnr <= m_lo.psnr);
    }
}
