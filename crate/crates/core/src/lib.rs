//! Low-rank matrix completion by iterative shrinkage-thresholding.
//!
//! The solvers minimize `½‖P_Ω(X − Y)‖² + g(X)` where `g` is either a weighted
//! sum of singular values with non-descending weights (nuclear and truncated
//! nuclear norms included) or the smoothed Schatten-p surrogate
//! `Σ (σ_i + ε)^p`. A multi-domain variant couples several matrices through a
//! shared block.
//!
//! ```
//! use rankmin::{ista_solve, relative_error, MaskedQuadraticLoss, PenaltySpec, SolverConfig};
//! use rankmin::synth::{gen_single, SingleGenSpec};
//!
//! let (truth, obs) = gen_single(&SingleGenSpec {
//!     rows: 30, cols: 20, rank: 2, noise: 0.0, observed_ratio: 0.6, seed: 1,
//! }).unwrap();
//! let loss = MaskedQuadraticLoss::new(obs);
//! let spec = PenaltySpec::Truncated { r: 2, lambda: 1.0 };
//! let sol = ista_solve(&loss, &spec, &SolverConfig::default(), None).unwrap();
//! assert!(relative_error(&sol.x, &truth).unwrap() < 0.1);
//! ```

pub mod bench;
pub mod error;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod penalty;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use loss::{loss_grad, loss_value, multi_loss_grad_block, multi_loss_value, MaskedQuadraticLoss, MultiDomainProblem};
pub use matrix::{mask_project, masked_frobenius_norm, numerical_rank, thin_svd, DenseMatrix, ObservationSet, SvdFactors};
pub use metrics::{psnr, psnr_channels, relative_error, rmse};
pub use penalty::{
    majorizer_value, penalty_value, reweight, shrink, shrink_factors, Exponent, PenaltySpec, Shrinkage, WeightVector,
};
pub use solver::{
    alter_ista_solve, alter_istra_solve, backtrack_step, ista_solve, istra_solve, subgradient_residual, IstraStart,
    MultiSolution, MultiStart, SchattenParams, Solution, SolverConfig,
};
