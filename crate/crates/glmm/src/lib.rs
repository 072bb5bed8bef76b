//! Bayesian generalized linear mixed models under the R2D2 prior and the
//! comparison priors (vague, penalized-complexity, horseshoe), sampled by
//! Metropolis-within-Gibbs.

mod adapt;
pub mod data;
pub mod error;
pub mod ess;
pub mod likelihood;
pub mod mcmc;
pub mod model;
pub mod trace;

pub use data::{standardize_columns, Dataset};
pub use error::{GlmmError, Result};
pub use ess::{effective_sample_size, effective_samples_per_second, Ess};
pub use likelihood::{r2n_from_eta, Likelihood};
pub use mcmc::{posterior_r2n, run_chain, FixedValues, McmcConfig, PosteriorSamples};
pub use model::{
    build_model, Component, Correlation, EffectGrouping, GlmmSpec, GroupSpec, Hyper, Model, PriorChoice,
};
pub use trace::write_trace;
