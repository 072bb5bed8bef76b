//! Subcommand definitions and their handlers. Handlers write to a caller
//! supplied sink so they can be driven without a process boundary.

use crate::error::{CliError, Result};
use crate::io::{load_csv, CsvSchema, LoadedData, SpatialColumns};
use clap::{Args, Parser, Subcommand, ValueEnum};
use r2d2_core::approx::{linear_prior, QmcCurve};
use r2d2_core::rng::seeded_rng;
use r2d2_core::{
    estimate_beta0, estimate_theta_mle, fit_gbp, r2_exact, DirichletSpec, FamilyKind, FitConfig, FitResult, GbpParams,
    InducedPrior, ModelFamily, QmcConfig, R2PriorSpec,
};
use r2d2_glmm::{
    build_model, effective_sample_size, run_chain, EffectGrouping, GlmmSpec, GroupSpec, Hyper, McmcConfig, Model,
    PosteriorSamples, PriorChoice,
};
use r2d2_sim::{run_study, Study, StudyConfig, StudyPrior};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "r2d2", version, about = "R2D2 priors for generalized linear mixed models")]
pub struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact, QMC, linear-approximation and fitted GBP prior densities of W on a grid.
    Density(DensityArgs),
    /// Fit the generalized beta prime surrogate and print it as JSON.
    FitGbp(FitGbpArgs),
    /// Draw W from a prior and report the R² each draw implies.
    Sample(SampleArgs),
    /// Run a simulation study and write the summary table.
    Simulate(SimulateArgs),
    /// Fit a mixed model to a CSV data set.
    Analyze(AnalyzeArgs),
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn nonnegative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a nonnegative number, got {s:?}")),
    }
}

fn family_kind(s: &str) -> std::result::Result<FamilyKind, String> {
    FamilyKind::parse(s).ok_or_else(|| {
        format!("unknown family {s:?}; expected gaussian, poisson, poisson-offset, negbin, zip, weibull or logistic")
    })
}

/// Likelihood family and intercept.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = family_kind)]
    pub family: FamilyKind,
    /// Dispersion: sigma² (gaussian), overdispersion (negbin), zero-inflation
    /// probability (zip), shape (weibull) or log-offset variance (poisson-offset).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta0: f64,
}

impl ModelArgs {
    pub fn family(&self) -> Result<ModelFamily> {
        make_family(self.family, self.theta)
    }
}

fn make_family(kind: FamilyKind, theta: Option<f64>) -> Result<ModelFamily> {
    let fam = if kind == FamilyKind::PoissonOffset {
        let s2 = theta.ok_or_else(|| CliError::Usage("poisson-offset needs --theta (log-offset variance)".into()))?;
        ModelFamily::poisson_offset(s2)
    } else {
        ModelFamily::new(kind, theta)
    };
    fam.map_err(|e| CliError::Usage(e.to_string()))
}

/// Beta(a, b) prior on R².
#[derive(Debug, Clone, Args)]
pub struct BetaArgs {
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub b: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub prior: BetaArgs,
    /// Largest W on the grid; 0 gives an empty grid.
    #[arg(long, default_value_t = 5.0, value_parser = nonnegative)]
    pub w_max: f64,
    /// Grid points in (0, w-max].
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Quantile levels in the QMC approximation.
    #[arg(long, default_value_t = 1000)]
    pub qmc_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitGbpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub prior: BetaArgs,
    /// Weight of the penalty toward GBP(a, b, 1, 1).
    #[arg(long, value_parser = nonnegative)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleKind {
    /// The exact induced prior; by QMC inversion for the logistic family.
    Induced,
    /// The fitted GBP surrogate.
    Gbp,
    /// The beta prime prior from the linear approximation.
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub prior: BetaArgs,
    #[arg(long, value_enum, default_value_t = SampleKind::Induced)]
    pub kind: SampleKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub qmc_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn study(s: &str) -> std::result::Result<Study, String> {
    Study::parse(s).ok_or_else(|| format!("unknown study {s:?}; expected gaussian, poisson or logistic"))
}

fn study_prior(s: &str) -> std::result::Result<StudyPrior, String> {
    StudyPrior::parse(s).ok_or_else(|| format!("unknown prior {s:?}; expected vague, pc, horseshoe or beta(a,b)"))
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = study)]
    pub study: Study,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    pub holdout_n: usize,
    /// Priors to compare, e.g. "vague;pc;beta(1,4)". Defaults to the study's table.
    #[arg(long, value_delimiter = ';', value_parser = study_prior)]
    pub priors: Vec<StudyPrior>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzePrior {
    R2d2,
    Vague,
    Pc,
    Horseshoe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grouping {
    /// All fixed effects share one Dirichlet component.
    Shared,
    /// Every fixed effect has its own component.
    PerCoefficient,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = family_kind)]
    pub family: FamilyKind,
    /// Dispersion; estimated by maximum likelihood when omitted.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// Grouping factor with exponential spatial correlation.
    #[arg(long)]
    pub spatial: Option<String>,
    /// Coordinate columns of the spatial factor, "x,y".
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub coords: Vec<String>,
    /// Exposure column; its log is centered and used as an offset.
    #[arg(long)]
    pub offset: Option<String>,
    #[arg(long, value_enum, default_value_t = AnalyzePrior::R2d2)]
    pub prior: AnalyzePrior,
    #[command(flatten)]
    pub beta: BetaArgs,
    /// Symmetric Dirichlet concentration.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub xi: f64,
    #[arg(long, value_enum, default_value_t = Grouping::Shared)]
    pub effect_grouping: Grouping,
    /// Prior variance of the intercept.
    #[arg(long, default_value_t = 3.0, value_parser = positive)]
    pub tau0_sq: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Retained draws, one column per parameter.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Posterior summary JSON; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Runs a parsed command, writing to `stdout` wherever no output path is set.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Density(a) => with_output(a.out.as_deref(), stdout, |w| density(a, w)),
        Command::FitGbp(a) => with_output(a.out.as_deref(), stdout, |w| fit_gbp_cmd(a, w)),
        Command::Sample(a) => with_output(a.out.as_deref(), stdout, |w| sample(a, w)),
        Command::Simulate(a) => with_output(a.out.as_deref(), stdout, |w| simulate(a, w)),
        Command::Analyze(a) => analyze(a, stdout),
    }
}

fn with_output(path: Option<&Path>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => f(stdout),
    }
}

fn fit_config(lambda: Option<f64>) -> FitConfig {
    let mut cfg = FitConfig::default();
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
    cfg
}

fn r2_spec(fam: &ModelFamily, beta0: f64, p: &BetaArgs) -> Result<R2PriorSpec> {
    Ok(r2d2_core::fit::model_spec(fam, beta0, p.a, p.b)?)
}

fn csv_f64(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn density(args: &DensityArgs, out: &mut dyn Write) -> Result<()> {
    let fam = args.model.family()?;
    let beta0 = args.model.beta0;
    let spec = r2_spec(&fam, beta0, &args.prior)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["w", "exact", "qmc", "linear", "gbp"])?;
    let grid: Vec<f64> = if args.w_max > 0.0 {
        (1..=args.points).map(|i| args.w_max * i as f64 / args.points as f64).collect()
    } else {
        Vec::new()
    };
    if !grid.is_empty() {
        let exact = fam.has_exact_r2().then(|| InducedPrior::with_spec(fam, beta0, spec)).transpose()?;
        let curve = QmcCurve::new(fam, beta0, QmcConfig::with_k(args.qmc_k))?;
        let linear = linear_prior(&fam, beta0, args.prior.a, args.prior.b)?;
        let gbp = fit_gbp(&fam, beta0, &spec, &FitConfig::default())?.params;
        for &x in &grid {
            let e = exact.as_ref().map_or(f64::NAN, |p| p.pdf(x));
            w.write_record([x.to_string(), csv_f64(e), csv_f64(curve.pdf(&spec, x)), csv_f64(linear.pdf(x)), csv_f64(gbp.pdf(x))])?;
        }
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub family: String,
    pub theta: Option<f64>,
    pub beta0: f64,
    pub a: f64,
    pub b: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub c_star: f64,
    pub d_star: f64,
    pub divergence: f64,
    pub penalty: f64,
    pub ks: f64,
}

impl FitReport {
    fn new(fam: &ModelFamily, beta0: f64, a: f64, b: f64, fit: &FitResult) -> Self {
        let [a_star, b_star, c_star, d_star] = fit.params.as_array();
        Self {
            family: fam.kind().name().into(),
            theta: fam.theta(),
            beta0,
            a,
            b,
            a_star,
            b_star,
            c_star,
            d_star,
            divergence: fit.divergence,
            penalty: fit.penalty,
            ks: fit.ks_to_target_r2,
        }
    }
}

pub fn fit_gbp_cmd(args: &FitGbpArgs, out: &mut dyn Write) -> Result<()> {
    let fam = args.model.family()?;
    let spec = r2_spec(&fam, args.model.beta0, &args.prior)?;
    let fit = fit_gbp(&fam, args.model.beta0, &spec, &fit_config(args.lambda))?;
    let report = FitReport::new(&fam, args.model.beta0, args.prior.a, args.prior.b, &fit);
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out).map_err(|e| CliError::io("<output>", e))
}

pub fn sample(args: &SampleArgs, out: &mut dyn Write) -> Result<()> {
    let fam = args.model.family()?;
    let beta0 = args.model.beta0;
    let spec = r2_spec(&fam, beta0, &args.prior)?;
    let mut rng = seeded_rng(args.seed);
    let curve = (!fam.has_exact_r2()).then(|| QmcCurve::new(fam, beta0, QmcConfig::with_k(args.qmc_k))).transpose()?;
    let r2_of = |w: f64| -> Result<f64> {
        match &curve {
            Some(c) => Ok(c.r2(w)),
            None => Ok(r2_exact(&fam, beta0, w)?),
        }
    };
    let ws: Vec<f64> = match args.kind {
        SampleKind::Induced => match &curve {
            None => InducedPrior::with_spec(fam, beta0, spec)?.sample(args.n, &mut rng)?,
            Some(c) => (0..args.n).map(|_| c.invert(spec.sample(&mut rng))).collect::<r2d2_core::Result<_>>()?,
        },
        SampleKind::Gbp => fit_gbp(&fam, beta0, &spec, &FitConfig::default())?.params.sample_n(args.n, &mut rng),
        SampleKind::Linear => linear_prior(&fam, beta0, args.prior.a, args.prior.b)?.sample_n(args.n, &mut rng),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["w", "r2"])?;
    for x in ws {
        w.write_record([x.to_string(), r2_of(x)?.to_string()])?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = StudyConfig::desk_scale(args.study, args.seed);
    cfg.reps = args.reps;
    cfg.mcmc.iters = args.iters;
    cfg.mcmc.burn_in = args.burn_in;
    cfg.holdout_n = args.holdout_n;
    if !args.priors.is_empty() {
        cfg.priors = args.priors.clone();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let res = run_study(&cfg)?;
    for f in &res.failures {
        log::warn!("{f:?}");
    }
    res.write_csv(out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Self { mean, sd, ess: effective_sample_size(xs).ess }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedMoments {
    pub name: String,
    #[serde(flatten)]
    pub moments: Moments,
}

#[derive(Debug, Clone, Serialize)]
pub struct Posterior {
    pub r2n: Moments,
    #[serde(rename = "W")]
    pub w: Option<Moments>,
    pub sigma2_u: Vec<NamedMoments>,
    pub rho: Vec<NamedMoments>,
    pub beta0: Moments,
    pub beta: Vec<NamedMoments>,
    pub sigma2: Option<Moments>,
    pub theta: Option<Moments>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub family: String,
    pub theta_hat: Option<f64>,
    pub beta0_hat: f64,
    pub n: usize,
    pub p: usize,
    pub prior: String,
    pub gbp: Option<FitReport>,
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub posterior: Posterior,
    pub acceptance: BTreeMap<String, f64>,
    /// Level labels of each grouping factor, in index order.
    pub labels: BTreeMap<String, Vec<String>>,
    pub wall_seconds: f64,
}

/// Everything `analyze` produces, for callers that want the values
/// rather than the files.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub loaded: LoadedData,
    pub model: Model,
    pub samples: PosteriorSamples,
    pub summary: AnalysisSummary,
}

fn analyze_schema(args: &AnalyzeArgs) -> Result<CsvSchema> {
    let spatial = match (&args.spatial, args.coords.as_slice()) {
        (None, []) => None,
        (Some(g), [x, y]) => Some(SpatialColumns { group: g.clone(), x: x.clone(), y: y.clone() }),
        (Some(_), _) => return Err(CliError::Usage("--spatial needs --coords x,y".into())),
        (None, _) => return Err(CliError::Usage("--coords needs --spatial".into())),
    };
    Ok(CsvSchema {
        response: args.response.clone(),
        covariates: args.covariates.clone(),
        groups: args.groups.clone(),
        spatial,
        offset: args.offset.clone(),
    })
}

/// Placeholder dispersion for building a family before theta is estimated.
fn provisional_theta(kind: FamilyKind) -> Option<f64> {
    match kind {
        FamilyKind::LocationScale | FamilyKind::Weibull => Some(1.0),
        FamilyKind::NegBinomial => Some(2.0),
        FamilyKind::ZeroInflatedPoisson => Some(0.1),
        _ => None,
    }
}

fn analysis_family(args: &AnalyzeArgs, loaded: &LoadedData) -> Result<ModelFamily> {
    let kind = args.family;
    if let Some(s2) = loaded.offset_variance {
        if !matches!(kind, FamilyKind::Poisson | FamilyKind::PoissonOffset) {
            return Err(CliError::Usage(format!("offsets are only supported for the poisson family, not {}", kind.name())));
        }
        return Ok(ModelFamily::poisson_offset(s2)?);
    }
    if kind == FamilyKind::PoissonOffset {
        return Err(CliError::Usage("poisson-offset needs --offset".into()));
    }
    if !kind.requires_theta() {
        return make_family(kind, None);
    }
    if let Some(t) = args.theta {
        return make_family(kind, Some(t));
    }
    let provisional = ModelFamily::new(kind, provisional_theta(kind))?;
    let est = estimate_theta_mle(&loaded.data.y, &provisional)?;
    if est.at_boundary {
        log::warn!("theta estimate {} is on the boundary of the parameter space", est.theta);
    }
    Ok(ModelFamily::new(kind, Some(est.theta))?)
}

pub fn run_analysis(args: &AnalyzeArgs) -> Result<Analysis> {
    if args.burn_in >= args.iters {
        return Err(CliError::Usage(format!("--burn-in ({}) must be smaller than --iters ({})", args.burn_in, args.iters)));
    }
    let loaded = load_csv(&args.data, &analyze_schema(args)?)?;
    let data = &loaded.data;
    let fam = analysis_family(args, &loaded)?;
    let beta0 = estimate_beta0(&data.y, &fam)?;
    log::info!("family {fam}, beta0_hat {beta0:.4}");

    let groups: Vec<GroupSpec> = (0..data.groups.len())
        .map(|k| match (loaded.spatial_group, &data.coords) {
            (Some(s), Some(c)) if s == k => GroupSpec::spatial(c.clone()),
            _ => GroupSpec::iid(data.levels(k)),
        })
        .collect();
    let effect_grouping = match args.effect_grouping {
        Grouping::Shared => EffectGrouping::SharedFixedBlock,
        Grouping::PerCoefficient => EffectGrouping::PerCoefficient,
    };
    let n_components = match effect_grouping {
        EffectGrouping::PerCoefficient => data.p() + groups.len(),
        EffectGrouping::SharedFixedBlock => usize::from(data.p() > 0) + groups.len(),
    };
    let mut gbp_report = None;
    let prior = match args.prior {
        AnalyzePrior::Vague => PriorChoice::vague(),
        AnalyzePrior::Pc => PriorChoice::pc(),
        AnalyzePrior::Horseshoe => PriorChoice::horseshoe(),
        AnalyzePrior::R2d2 => {
            let xi = DirichletSpec::symmetric(n_components, args.xi)?;
            if fam.kind() == FamilyKind::LocationScale {
                // W / sigma² is exactly beta prime
                let spec = R2PriorSpec::new(args.beta.a, args.beta.b)?;
                PriorChoice::R2d2 { spec, gbp: GbpParams::beta_prime(args.beta.a, args.beta.b)?, xi }
            } else {
                let spec = r2_spec(&fam, beta0, &args.beta)?;
                let fit = fit_gbp(&fam, beta0, &spec, &FitConfig::default())?;
                gbp_report = Some(FitReport::new(&fam, beta0, args.beta.a, args.beta.b, &fit));
                PriorChoice::R2d2 { spec, gbp: fit.params, xi }
            }
        }
    };
    let spec = GlmmSpec { family: fam, p: data.p(), groups, offsets: None, effect_grouping };
    let hyper = Hyper { tau0_sq: args.tau0_sq, ..Hyper::default() };
    let model = build_model(spec, prior, data, hyper)?;
    let mcmc = McmcConfig { iters: args.iters, burn_in: args.burn_in, seed: args.seed, ..McmcConfig::default() };
    let samples = run_chain(&model, &mcmc)?;

    let named = |rows: &[Vec<f64>], names: &[String]| -> Vec<NamedMoments> {
        names
            .iter()
            .enumerate()
            .map(|(j, name)| NamedMoments {
                name: name.clone(),
                moments: Moments::of(&rows.iter().map(|r| r[j]).collect::<Vec<f64>>()),
            })
            .collect()
    };
    let spatial_names: Vec<String> =
        (0..data.groups.len()).filter(|&k| model.is_spatial(k)).map(|k| data.group_names[k].clone()).collect();
    let nonempty = |v: &[f64]| (!v.is_empty()).then(|| Moments::of(v));
    let posterior = Posterior {
        r2n: Moments::of(&samples.r2n),
        w: nonempty(&samples.w),
        sigma2_u: if samples.sigma2_u.is_empty() { Vec::new() } else { named(&samples.sigma2_u, &data.group_names) },
        rho: if samples.rho.is_empty() { Vec::new() } else { named(&samples.rho, &spatial_names) },
        beta0: Moments::of(&samples.beta0),
        beta: if samples.beta.is_empty() { Vec::new() } else { named(&samples.beta, &data.covariate_names) },
        sigma2: nonempty(&samples.sigma2),
        theta: nonempty(&samples.theta),
    };
    let summary = AnalysisSummary {
        family: fam.kind().name().into(),
        theta_hat: fam.theta(),
        beta0_hat: beta0,
        n: data.n(),
        p: data.p(),
        prior: model.prior.label(),
        gbp: gbp_report,
        iters: args.iters,
        burn_in: args.burn_in,
        seed: args.seed,
        posterior,
        acceptance: samples.acceptance.clone(),
        labels: data.group_names.iter().cloned().zip(data.group_labels.iter().cloned()).collect(),
        wall_seconds: samples.wall_seconds,
    };
    Ok(Analysis { loaded, model, samples, summary })
}

/// Trace column names with covariate names and group labels substituted
/// for positional indices.
pub fn labelled_columns(samples: &PosteriorSamples, model: &Model) -> Vec<(String, Vec<f64>)> {
    let d = &model.data;
    let spatial: Vec<usize> = (0..d.groups.len()).filter(|&k| model.is_spatial(k)).collect();
    let index = |s: &str| -> Vec<usize> {
        s.split(['[', ']']).filter_map(|t| t.parse::<usize>().ok()).map(|i| i - 1).collect()
    };
    samples
        .columns()
        .into_iter()
        .map(|(name, v)| {
            let ix = index(&name);
            let renamed = if name.starts_with("beta[") {
                format!("beta[{}]", d.covariate_names[ix[0]])
            } else if name.starts_with("u[") {
                format!("u[{}][{}]", d.group_names[ix[0]], d.group_labels[ix[0]][ix[1]])
            } else if name.starts_with("sigma2_u[") {
                format!("sigma2_u[{}]", d.group_names[ix[0]])
            } else if name.starts_with("rho[") {
                format!("rho[{}]", d.group_names[spatial[ix[0]]])
            } else {
                name
            };
            (renamed, v)
        })
        .collect()
}

fn write_labelled_trace(cols: &[(String, Vec<f64>)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cols.iter().map(|(n, _)| n.as_str()))?;
    let len = cols.first().map_or(0, |(_, v)| v.len());
    for i in 0..len {
        w.write_record(cols.iter().map(|(_, v)| v[i].to_string()))?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let a = run_analysis(args)?;
    if let Some(p) = &args.trace {
        let file = File::create(p).map_err(|e| CliError::io(p, e))?;
        write_labelled_trace(&labelled_columns(&a.samples, &a.model), BufWriter::new(file))?;
    }
    with_output(args.summary.as_deref(), stdout, |w| {
        serde_json::to_writer_pretty(&mut *w, &a.summary)?;
        writeln!(w).map_err(|e| CliError::io("<output>", e))
    })
}
