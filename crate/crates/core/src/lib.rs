//! Scaling laws for fine-grained Mixture-of-Experts language models.
//!
//! The crate covers parameter and FLOPs accounting for dense and MoE
//! Transformers, robust fitting of the joint loss law `L(N, D, G)`,
//! compute-optimal allocation of model size, tokens and granularity under a
//! FLOPs budget, bootstrap intervals, and the file formats used by the
//! `moescale` command-line tool.

pub mod cli;
pub mod compute_optimal;
pub mod error;
pub mod fitting;
pub mod io;
pub mod laws;
pub mod optim;
pub mod shapes;

pub use compute_optimal::{
    compute_savings, frontier, optimize_dense, optimize_moe, BudgetQuery, FrontierPoint, OptimalConfig,
};
pub use error::{Error, Result};
pub use fitting::{fit_dense, fit_moe, FitConfig, FitResult, TrainingRun};
pub use laws::{dense_loss, moe_loss, ClarkCoefficients, DenseCoefficients, LossLaw, MoeCoefficients};
pub use shapes::{FlopsConstants, ModelShape, ParamCounts};
