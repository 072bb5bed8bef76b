//! Induced priors on the global variance `W` of a generalized linear mixed
//! model, derived from a Beta prior on the model's population R².
//!
//! The closed-form cases live in [`exact`], the quasi-Monte-Carlo and linear
//! approximations in [`approx`], and the generalized-beta-prime surrogate
//! fit in [`fit`].

pub mod approx;
pub mod dist;
pub mod error;
pub mod exact;
pub mod family;
pub mod fit;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;

pub use approx::{linear_s2, qmc_moments, qmc_pdf, qmc_r2, QmcConfig, QmcMoments, QuantileSource};
pub use dist::{
    beta4_pdf, bp_pdf, dirichlet_sample, gbp_cdf, gbp_pdf, gbp_quantile, gbp_sample,
    gbp_sqrt_law, DirichletSpec, GbpParams, R2PriorSpec,
};
pub use error::{R2d2Error, Result};
pub use exact::{induced_pdf, induced_sample, origin_limit, InducedPrior};
pub use family::{mean_fn, r2_bounds, r2_exact, var_fn, FamilyKind, ModelFamily};
pub use fit::{
    chi2_divergence, estimate_beta0, estimate_theta_mle, fit_gbp, FitConfig, FitResult,
    TargetDensity, TargetSource, ThetaEstimate,
};
