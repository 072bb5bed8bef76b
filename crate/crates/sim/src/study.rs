//! Replicate driver and result tables.

use crate::generate::{holdout, Study, Truth};
use crate::metrics::{metric_names, metrics, MetricsRow};
use r2d2_core::fit::{fit_gbp, model_spec, FitConfig};
use r2d2_core::{DirichletSpec, GbpParams, ModelFamily, R2PriorSpec};
use r2d2_glmm::{build_model, run_chain, Dataset, EffectGrouping, GlmmSpec, GroupSpec, Hyper, McmcConfig, PriorChoice};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("prior {prior}: {failed} of {reps} replicates failed (last error: {last})")]
    TooManyFailures { prior: String, failed: usize, reps: usize, last: String },
    #[error(transparent)]
    Glmm(#[from] r2d2_glmm::GlmmError),
    #[error(transparent)]
    Core(#[from] r2d2_core::R2d2Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Prior choices as named in the study tables. R2D2 priors are given by
/// the Beta(a, b) prior on R²; the GBP carrying it is fitted per data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StudyPrior {
    R2d2 { a: f64, b: f64 },
    Vague,
    Pc,
    Horseshoe,
}

impl StudyPrior {
    pub fn label(&self) -> String {
        match self {
            StudyPrior::R2d2 { a, b } => format!("beta({a},{b})"),
            StudyPrior::Vague => "vague".into(),
            StudyPrior::Pc => "pc".into(),
            StudyPrior::Horseshoe => "horseshoe".into(),
        }
    }

    /// Parses `vague`, `pc`, `horseshoe` or `beta(a,b)`.
    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "vague" => return Some(StudyPrior::Vague),
            "pc" | "pcp" => return Some(StudyPrior::Pc),
            "horseshoe" => return Some(StudyPrior::Horseshoe),
            _ => {}
        }
        let inner = t.strip_prefix("beta(")?.strip_suffix(')')?;
        let (a, b) = inner.split_once(',')?;
        let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        (a > 0.0 && b > 0.0).then_some(StudyPrior::R2d2 { a, b })
    }

    /// The comparison set used for each study's table.
    pub fn defaults(study: Study) -> Vec<StudyPrior> {
        let comparator = if study == Study::LogisticSparse { StudyPrior::Horseshoe } else { StudyPrior::Pc };
        vec![
            StudyPrior::Vague,
            comparator,
            StudyPrior::R2d2 { a: 1.0, b: 4.0 },
            StudyPrior::R2d2 { a: 1.0, b: 1.0 },
            StudyPrior::R2d2 { a: 4.0, b: 1.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: Study,
    pub reps: usize,
    pub priors: Vec<StudyPrior>,
    pub mcmc: McmcConfig,
    pub holdout_n: usize,
    pub seed: u64,
    pub fit: FitConfig,
}

impl StudyConfig {
    /// 50 replicates of 10 000 draws with 5 000 burn-in.
    pub fn desk_scale(study: Study, seed: u64) -> Self {
        Self {
            study,
            reps: 50,
            priors: StudyPrior::defaults(study),
            mcmc: McmcConfig::default(),
            holdout_n: 1000,
            seed,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(SimError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.holdout_n < 2 {
            return Err(SimError::InvalidConfig("holdout_n must be at least 2".into()));
        }
        if self.priors.is_empty() {
            return Err(SimError::InvalidConfig("no priors to compare".into()));
        }
        if self.study != Study::LogisticSparse && self.priors.contains(&StudyPrior::Horseshoe) {
            return Err(SimError::InvalidConfig(format!(
                "the horseshoe prior has no random-effect variance and cannot be used in the {} study",
                self.study.name()
            )));
        }
        self.mcmc.validate()?;
        Ok(())
    }
}

fn model_spec_for(study: Study) -> GlmmSpec {
    match study {
        Study::GaussianRe => GlmmSpec {
            family: study.family(),
            p: 0,
            groups: vec![GroupSpec::iid(10), GroupSpec::iid(10)],
            offsets: None,
            effect_grouping: EffectGrouping::SharedFixedBlock,
        },
        Study::PoissonMixed => GlmmSpec {
            family: study.family(),
            p: 5,
            groups: vec![GroupSpec::iid(20)],
            offsets: None,
            effect_grouping: EffectGrouping::SharedFixedBlock,
        },
        Study::LogisticSparse => GlmmSpec {
            family: study.family(),
            p: 50,
            groups: vec![],
            offsets: None,
            effect_grouping: EffectGrouping::PerCoefficient,
        },
    }
}

fn hyper_for(study: Study) -> Hyper {
    match study {
        Study::GaussianRe => Hyper { tau0_sq: 100.0, ..Hyper::default() },
        _ => Hyper::default(),
    }
}

/// Intercept estimate `g(mean y)`, with the mean pulled inside the open
/// range of the mean function.
fn beta0_hat(study: Study, y: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let m = match study {
        Study::LogisticSparse => m.clamp(0.5 / n, 1.0 - 0.5 / n),
        Study::PoissonMixed => m.max(0.5 / n),
        Study::GaussianRe => m,
    };
    Ok(study.family().link(m)?)
}

/// Turns a table prior into a sampler prior for one data set.
pub fn resolve_prior(study: Study, prior: StudyPrior, data: &Dataset, fit: &FitConfig) -> Result<PriorChoice> {
    let spec = model_spec_for(study);
    let n_components = match spec.effect_grouping {
        EffectGrouping::PerCoefficient => spec.p + spec.groups.len(),
        EffectGrouping::SharedFixedBlock => usize::from(spec.p > 0) + spec.groups.len(),
    };
    Ok(match prior {
        StudyPrior::Vague => PriorChoice::vague(),
        StudyPrior::Pc => PriorChoice::pc(),
        StudyPrior::Horseshoe => PriorChoice::horseshoe(),
        StudyPrior::R2d2 { a, b } => {
            let xi = DirichletSpec::symmetric(n_components, 1.0)?;
            if study == Study::GaussianRe {
                // W / sigma² ~ BP(a, b) exactly
                PriorChoice::R2d2 { spec: R2PriorSpec::new(a, b)?, gbp: GbpParams::beta_prime(a, b)?, xi }
            } else {
                let fam: ModelFamily = study.family();
                let b0 = beta0_hat(study, &data.y)?;
                let r2 = model_spec(&fam, b0, a, b)?;
                let fitted = fit_gbp(&fam, b0, &r2, fit)?;
                log::debug!("{} beta0_hat={b0:.3} gbp={:?}", prior.label(), fitted.params.as_array());
                PriorChoice::R2d2 { spec: r2, gbp: fitted.params, xi }
            }
        }
    })
}

fn replicate_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Replicate {
    truth: Truth,
    rows: Vec<std::result::Result<MetricsRow, (String, String)>>,
}

fn run_replicate(cfg: &StudyConfig, rep: usize) -> Replicate {
    let seed = replicate_seed(cfg.seed, rep);
    let (data, truth) = cfg.study.generate(seed);
    let hold = holdout(&truth, cfg.holdout_n, seed);
    let rows = cfg
        .priors
        .iter()
        .enumerate()
        .map(|(pi, &prior)| {
            let run = || -> Result<MetricsRow> {
                let choice = resolve_prior(cfg.study, prior, &data, &cfg.fit)?;
                let model = build_model(model_spec_for(cfg.study), choice, &data, hyper_for(cfg.study))?;
                let mcmc = McmcConfig { seed: seed.wrapping_add(pi as u64 * 7919), ..cfg.mcmc.clone() };
                let samples = run_chain(&model, &mcmc)?;
                let mut row = metrics(&truth, &samples, &hold);
                row.prior = prior.label();
                Ok(row)
            };
            run().map_err(|e| {
                log::warn!("{} replicate {rep}, prior {}: {e}", cfg.study.name(), prior.label());
                (prior.label(), e.to_string())
            })
        })
        .collect();
    Replicate { truth, rows }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub prior: String,
    pub metric: String,
    pub mean: f64,
    /// Missing when fewer than two replicates succeeded.
    pub se: Option<f64>,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResults {
    pub study: Study,
    pub rows: Vec<SummaryRow>,
    pub replicates: Vec<MetricsRow>,
    pub failures: BTreeMap<String, usize>,
    /// Plug-in sample R² of each replicate's truth (the `r2n` metrics
    /// compare against this) and the population value at the same effects.
    pub truth_r2n: Vec<f64>,
    pub truth_r2_population: Vec<f64>,
}

impl StudyResults {
    pub fn get(&self, prior: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.prior == prior && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["prior", "metric", "mean", "se", "reps"])?;
        for r in &self.rows {
            let se = r.se.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.prior.clone(), r.metric.clone(), r.mean.to_string(), se, r.reps.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn summarize(prior: &str, metric: &str, xs: &[f64]) -> SummaryRow {
    let k = xs.len();
    let mean = xs.iter().sum::<f64>() / k as f64;
    let se = (k >= 2).then(|| {
        let v = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (v / k as f64).sqrt()
    });
    SummaryRow { prior: prior.into(), metric: metric.into(), mean, se, reps: k }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("R2D2_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            b = b.num_threads(n);
        }
    }
    b.build().map_err(|e| SimError::ThreadPool(e.to_string()))
}

/// Runs every replicate under every prior and averages the metrics.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResults> {
    cfg.validate()?;
    let pool = thread_pool()?;
    let reps: Vec<Replicate> = pool.install(|| (0..cfg.reps).into_par_iter().map(|r| run_replicate(cfg, r)).collect());

    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let mut last_error: BTreeMap<String, String> = BTreeMap::new();
    let mut replicates = Vec::new();
    for rep in &reps {
        for row in &rep.rows {
            match row {
                Ok(m) => replicates.push(m.clone()),
                Err((label, e)) => {
                    *failures.entry(label.clone()).or_default() += 1;
                    last_error.insert(label.clone(), e.clone());
                }
            }
        }
    }
    for (label, &failed) in &failures {
        if failed * 10 > cfg.reps {
            return Err(SimError::TooManyFailures {
                prior: label.clone(),
                failed,
                reps: cfg.reps,
                last: last_error[label].clone(),
            });
        }
    }

    let truth_r2n: Vec<f64> = reps.iter().map(|r| r.truth.r2n).collect();
    let truth_r2_population: Vec<f64> = reps.iter().map(|r| r.truth.r2_population).collect();
    let mut rows = vec![summarize("truth", "r2n_sample", &truth_r2n), summarize("truth", "r2_population", &truth_r2_population)];
    for prior in &cfg.priors {
        let label = prior.label();
        let mine: Vec<&MetricsRow> = replicates.iter().filter(|m| m.prior == label).collect();
        if mine.is_empty() {
            continue;
        }
        for metric in metric_names(cfg.study) {
            let xs: Vec<f64> = mine.iter().filter_map(|m| m.get(&metric)).collect();
            rows.push(summarize(&label, &metric, &xs));
        }
    }
    Ok(StudyResults { study: cfg.study, rows, replicates, failures, truth_r2n, truth_r2_population })
}
