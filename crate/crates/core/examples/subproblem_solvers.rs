// The four per-task solvers, each reporting its optimality residual.

use mmtfl::solvers::SolverOptions;
use mmtfl::{kkt_residual, solve_lasso_ls, solve_logistic_l1, solve_logistic_l2, solve_ridge_ls, LossKind};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn main() -> mmtfl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(40, 10, |_, _| StandardNormal.sample(&mut rng));
    let w = DVector::from_fn(10, |j, _| if j < 3 { 1.5 } else { 0.0 });
    let noise = DVector::from_fn(40, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.3 * z
    });
    let y = &x * &w + noise;
    let labels = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let opts = SolverOptions::default();

    let ridge = solve_ridge_ls(&x, &y, 1.0)?;
    let kkt = kkt_residual(&ridge, &x, &y, LossKind::LeastSquares, 2, 1.0)?;
    println!("ridge          kkt {kkt:.1e}  |β|_2 {:.4}", ridge.norm());

    let lasso = solve_lasso_ls(&x, &y, 20.0, &opts)?;
    let nnz = lasso.beta.iter().filter(|v| **v != 0.0).count();
    println!("lasso          kkt {:.1e}  nonzeros {nnz} of 10", lasso.kkt);

    let l2 = solve_logistic_l2(&x, &labels, 0.5, &opts)?;
    println!("logistic + l2  kkt {:.1e}  iterations {}", l2.kkt, l2.iterations);

    let l1 = solve_logistic_l1(&x, &labels, 2.0, &opts)?;
    let nnz = l1.beta.iter().filter(|v| **v != 0.0).count();
    println!("logistic + l1  kkt {:.1e}  nonzeros {nnz} of 10", l1.kkt);

    assert!(lasso.converged && l2.converged && l1.converged);
    Ok(())
}
