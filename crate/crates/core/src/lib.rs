//! Multiplicative multitask feature learning.
//!
//! Each task's linear weights factor as `α_t = diag(c) β_t`, where the
//! nonnegative gate vector `c` is shared by all tasks and `β_t` is
//! task-specific. Penalizing `β_t` with an `ℓ_p` power and `c` with an `ℓ_k`
//! power (`p, k ∈ {1, 2}`) is equivalent to a joint row penalty
//! `λ Σ_j (Σ_t |α_j^t|^p)^{1/(2q)}` on the stacked weights.
//!
//! The crate provides the objectives and the hyperparameter mappings
//! between the two forms ([`objective`], [`regularizer`]), per-task
//! subproblem solvers with optimality certificates ([`solvers`]), the
//! alternating fit with closed-form gate updates ([`optimizer`]), numerical
//! certificates of the equivalences ([`verify`]), synthetic benchmarks
//! ([`datagen`]), evaluation and cross-validation ([`eval`]), and the file
//! formats and commands behind the `mmtfl` binary ([`io`], [`cli`]).

pub mod cli;
pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod io;
pub mod loss;
pub mod objective;
pub mod optimizer;
pub mod regularizer;
pub mod solvers;
pub mod verify;

pub use data::{MultitaskDataset, TaskData};
pub use error::{Error, Result};
pub use loss::{loss_and_gradient, LossKind};
pub use objective::{
    joint_objective, multiplicative_objective, row_operator_norm, variational_objective, Decomposition,
};
pub use optimizer::{
    closed_form_c_from_b, fit, fit_single_task, scale_features, sigma_to_c, update_sigma, FitOptions, FitResult,
    Termination,
};
pub use regularizer::{map_joint_to_multiplicative, map_multiplicative_to_joint, RegularizerSpec, SigmaExponent};
pub use solvers::{
    kkt_residual, soft_threshold, solve_lasso_ls, solve_logistic_l1, solve_logistic_l2, solve_ridge_ls,
    SolverOptions, SubproblemSolution,
};
