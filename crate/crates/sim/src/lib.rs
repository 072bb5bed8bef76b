//! Simulation studies: generators for the Gaussian random-effects, Poisson
//! mixed and sparse logistic designs, per-replicate metrics and a parallel
//! replicate driver producing `prior,metric,mean,se,reps` tables.

pub mod concentration;
pub mod generate;
pub mod metrics;
pub mod study;

pub use generate::{gen_gaussian_re, gen_logistic_sparse, gen_poisson_mixed, holdout, Holdout, Study, Truth};
pub use metrics::{auc, metrics, poisson_log_score, MetricsRow};
pub use study::{resolve_prior, run_study, SimError, StudyConfig, StudyPrior, StudyResults, SummaryRow};
