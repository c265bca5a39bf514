// Invariants of the solvers, objectives, optimizer and generator over
// randomly drawn problems.

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::objective::{joint_penalty, multiplicative_penalty};
use mmtfl::{
    fit, fit_single_task, joint_objective, kkt_residual, multiplicative_objective, soft_threshold, solve_lasso_ls,
    solve_logistic_l1, solve_ridge_ls, Decomposition, FitOptions, LossKind, MultitaskDataset, RegularizerSpec,
    SolverOptions, TaskData,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const CELLS: [(u8, u8); 4] = [(2, 2), (1, 1), (2, 1), (1, 2)];

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn regression(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(&mut rng, n, d);
    let w = gaussian(&mut rng, d, 1).column(0).into_owned();
    let noise = gaussian(&mut rng, n, 1).column(0).into_owned();
    let y = &x * w + noise * 0.1;
    (x, y)
}

fn multitask(seed: u64, tasks: usize, n: usize, d: usize) -> MultitaskDataset {
    let tasks = (0..tasks)
        .map(|t| {
            let (x, y) = regression(seed * 31 + t as u64, n, d);
            TaskData::new(format!("task_{t}"), x, y).unwrap()
        })
        .collect();
    MultitaskDataset::new(tasks).unwrap()
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert_eq!(s == 0.0, z.abs() <= t);
        prop_assert!((z - s).abs() <= t + 1e-15);
    }

    #[test]
    fn variational_factorizations_bound_the_joint_penalty(
        seed in 0u64..1000,
        cell in 0usize..4,
        log_g1 in -1.0f64..1.0,
        log_g2 in -1.0f64..1.0,
    ) {
        let (p, k) = CELLS[cell];
        let spec = RegularizerSpec::least_squares(p, k, 10f64.powf(log_g1), 10f64.powf(log_g2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, 6, 4);
        let c = DVector::from_fn(6, |_, _| 10f64.powf(rng.random_range(-1.0..1.0)));
        let dec = Decomposition::from_alpha(c, &a).unwrap();
        let bound = joint_penalty(&a, f64::from(p), spec.q(), spec.lambda());
        prop_assert!(multiplicative_penalty(&dec, &spec) >= bound * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lasso_meets_its_optimality_conditions(seed in 0u64..10_000, log_gamma in -1.0f64..1.5) {
        let (x, y) = regression(seed, 30, 12);
        let gamma = 10f64.powf(log_gamma);
        let sol = solve_lasso_ls(&x, &y, gamma, &SolverOptions::default()).unwrap();
        prop_assert!(sol.converged);
        let kkt = kkt_residual(&sol.beta, &x, &y, LossKind::LeastSquares, 1, gamma).unwrap();
        prop_assert!(kkt <= 1e-6, "kkt {}", kkt);
    }

    #[test]
    fn ridge_solves_the_normal_equations(seed in 0u64..10_000, log_gamma in -2.0f64..2.0) {
        let (x, y) = regression(seed, 20, 8);
        let gamma = 10f64.powf(log_gamma);
        let beta = solve_ridge_ls(&x, &y, gamma).unwrap();
        let kkt = kkt_residual(&beta, &x, &y, LossKind::LeastSquares, 2, gamma).unwrap();
        prop_assert!(kkt <= 1e-8 * (1.0 + y.norm() * x.norm()), "kkt {}", kkt);
    }

    #[test]
    fn fitted_models_are_consistent(seed in 0u64..10_000, cell in 0usize..4) {
        let (p, k) = CELLS[cell];
        let data = multitask(seed, 3, 20, 6);
        let spec = RegularizerSpec::least_squares(p, k, 0.5, 0.5).unwrap();
        let result = fit(&data, &spec, &FitOptions::default()).unwrap();
        prop_assert!(result.converged, "{:?}", result.termination);
        prop_assert!(result.max_relative_increase() <= 1e-10);

        let dec = &result.decomposition;
        let a = dec.alpha();
        for j in 0..6 {
            prop_assert!(dec.c()[j] >= 0.0);
            for t in 0..3 {
                prop_assert_eq!(a[(j, t)], dec.c()[j] * dec.b()[(j, t)]);
            }
        }
        let multiplicative = multiplicative_objective(dec, &data, &spec).unwrap();
        let joint = joint_objective(&a, &data, &spec).unwrap();
        prop_assert!(rel_gap(multiplicative, joint) <= 1e-6, "{} vs {}", multiplicative, joint);
        prop_assert!(rel_gap(multiplicative, result.final_objective()) <= 1e-12);
    }
}

#[test]
fn logistic_l1_is_zero_above_the_critical_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = gaussian(&mut rng, 25, 5);
    let y = DVector::from_fn(25, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let sol = solve_logistic_l1(&x, &y, 1e3, &SolverOptions::default()).unwrap();
    assert!(sol.beta.iter().all(|&b| b == 0.0), "{}", sol.beta);
}

#[test]
fn task_order_does_not_change_the_convex_fit() {
    let data = multitask(17, 4, 25, 7);
    let spec = RegularizerSpec::least_squares(2, 2, 1.0, 1.0).unwrap();
    let opts = FitOptions::default();
    let base = fit(&data, &spec, &opts).unwrap().alpha();
    let order = [2, 0, 3, 1];
    let permuted = fit(&data.permute_tasks(&order), &spec, &opts).unwrap().alpha();
    for (i, &t) in order.iter().enumerate() {
        let diff = (permuted.column(i) - base.column(t)).amax();
        assert!(diff < 1e-5, "task {t}: {diff}");
    }
}

#[test]
fn feature_order_permutes_the_rows() {
    let data = multitask(23, 3, 25, 6);
    let spec = RegularizerSpec::least_squares(2, 1, 1.0, 1.0).unwrap();
    let opts = FitOptions::default();
    let base = fit(&data, &spec, &opts).unwrap().alpha();
    let order = [5, 3, 1, 0, 2, 4];
    let permuted = fit(&data.permute_features(&order), &spec, &opts).unwrap().alpha();
    for (i, &j) in order.iter().enumerate() {
        let diff = (permuted.row(i) - base.row(j)).amax();
        assert!(diff < 1e-5, "feature {j}: {diff}");
    }
}

#[test]
fn single_task_fit_is_per_task_ridge() {
    let data = multitask(5, 3, 20, 5);
    let spec = RegularizerSpec::least_squares(2, 2, 0.7, 1.0).unwrap();
    let result = fit_single_task(&data, &spec, &FitOptions::default()).unwrap();
    let a = result.alpha();
    for (t, task) in data.tasks().iter().enumerate() {
        let ridge = solve_ridge_ls(&task.x, &task.y, 0.7).unwrap();
        assert!((a.column(t) - ridge).amax() < 1e-10);
    }
}

#[test]
fn d1_truth_has_the_irrelevant_block() {
    let (data, truth) = generate(&SyntheticSpec::d1(11)).unwrap();
    assert_eq!((data.n_tasks(), data.n_features()), (10, 100));
    assert_eq!(truth.irrelevant_features.len(), 40);
    for &j in &truth.irrelevant_features {
        assert!(truth.alpha.row(j).iter().all(|&v| v == 0.0));
    }
    assert_eq!(truth.relevant_features().len(), 60);
    for j in 0..100 {
        for t in 0..10 {
            assert_eq!(truth.support[(j, t)], truth.alpha[(j, t)] != 0.0);
        }
    }
}

#[test]
fn d2_neighbors_share_more_than_distant_groups() {
    let (_, truth) = generate(&SyntheticSpec::d2(11)).unwrap();
    let groups = &truth.task_groups;
    let first = |g: usize| groups.iter().position(|&x| x == g).unwrap();
    let (g0, g1, g3) = (first(0), first(1), first(3));
    assert!(truth.shared_features(g0, g1) > truth.shared_features(g0, g3));
    let same: Vec<usize> = (0..groups.len()).filter(|&t| groups[t] == 0).collect();
    assert!(same.len() >= 2);
    let (a, b) = (same[0], same[1]);
    for j in 0..truth.support.nrows() {
        assert_eq!(truth.support[(j, a)], truth.support[(j, b)]);
    }
}

#[test]
fn generation_is_deterministic() {
    let (a, ta) = generate(&SyntheticSpec::d2(4)).unwrap();
    let (b, tb) = generate(&SyntheticSpec::d2(4)).unwrap();
    let (c, _) = generate(&SyntheticSpec::d2(5)).unwrap();
    assert_eq!(ta.alpha, tb.alpha);
    assert_eq!(a.tasks()[0].x, b.tasks()[0].x);
    assert_ne!(a.tasks()[0].x, c.tasks()[0].x);
}
