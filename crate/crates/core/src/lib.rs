//! Closed-form EM estimation for finite gamma mixture models.
//!
//! Three estimators share one EM driver and differ only in the M-step:
//! the closed-form update ([`em`]), the same update with mode constraints
//! ([`constrained`]) and an exact weighted-MLE update found numerically
//! ([`baseline`]). [`sim`] runs the comparison experiments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod constrained;
pub mod em;
pub mod error;
pub mod gamma;
pub mod mixture;
mod root;
pub mod sim;
pub mod special;

pub use baseline::{baseline_em_fit, baseline_multi_restart_fit, weighted_gamma_mle};
pub use constrained::{
    check_and_project, constrained_em_fit, constrained_multi_restart_fit, newton_solve_b,
    ModeBounds, ModeInterval, Projection,
};
pub use em::{
    em_fit, initialize, multi_restart_fit, update_component, update_weights, FitConfig, FitResult,
    FitStatus,
};
pub use error::{Error, Result};
pub use gamma::{
    gamma_log_density, gamma_mode, gamma_sample, gen_gamma_log_density, mom_estimate, GammaParams,
    GenGammaParams,
};
pub use mixture::{
    log_likelihood, responsibilities, weighted_gamma_loglik, GammaComponent, MixtureModel,
    Responsibilities, WeightedStats,
};
pub use special::{digamma, ln_gamma, trigamma};
