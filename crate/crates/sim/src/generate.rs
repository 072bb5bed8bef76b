//! Data generators for the three simulation designs.

use nalgebra::DMatrix;
use r2d2_core::approx::{qmc_r2, QmcConfig, QuantileSource};
use r2d2_core::rng::{stream_rng, SeededRng};
use r2d2_core::{r2_exact, ModelFamily};
use r2d2_glmm::{r2n_from_eta, Dataset};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};

/// Which simulation design to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Study {
    /// Gaussian response, two crossed random intercepts, no covariates.
    GaussianRe,
    /// Poisson response, five correlated covariates and one random intercept.
    PoissonMixed,
    /// Bernoulli response, fifty correlated covariates of which five matter.
    LogisticSparse,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::GaussianRe => "gaussian",
            Study::PoissonMixed => "poisson",
            Study::LogisticSparse => "logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussian-re" => Some(Study::GaussianRe),
            "poisson" | "poisson-mixed" => Some(Study::PoissonMixed),
            "logistic" | "logistic-sparse" => Some(Study::LogisticSparse),
            _ => None,
        }
    }

    /// Family with the generating dispersion.
    pub fn family(self) -> ModelFamily {
        match self {
            Study::GaussianRe => ModelFamily::location_scale(GAUSS_SIGMA2).expect("positive variance"),
            Study::PoissonMixed => ModelFamily::poisson(),
            Study::LogisticSparse => ModelFamily::logistic(),
        }
    }

    pub fn generate(self, seed: u64) -> (Dataset, Truth) {
        match self {
            Study::GaussianRe => gen_gaussian_re(seed),
            Study::PoissonMixed => gen_poisson_mixed(seed),
            Study::LogisticSparse => gen_logistic_sparse(seed),
        }
    }
}

const GAUSS_SIGMA2: f64 = 0.25;
const GAUSS_SIGMA2_U: [f64; 2] = [0.15, 0.10];
const POIS_SIGMA2_U: f64 = 0.5;
const AR_RHO: f64 = 0.8;

/// Generating parameters and realized effects of one simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub study: Study,
    pub beta0: f64,
    /// Coefficients on the standardized covariates.
    pub beta: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub sigma2_u: Vec<f64>,
    /// Residual variance (Gaussian design only).
    pub sigma2: Option<f64>,
    /// Column means and standard deviations used to standardize the
    /// covariates; holdout rows are transformed with the same values.
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
    /// Sample R² with the realized effects plugged in.
    pub r2n: f64,
    /// Population R² with `eta ~ Normal(beta0, W)` at the realized `W`.
    pub r2_population: f64,
}

/// Fresh observations from the same truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Holdout {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub groups: Vec<Vec<usize>>,
}

impl Holdout {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// `Normal(0, Sigma)` rows with `Sigma_ij = rho^|i-j|`.
pub fn ar1_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        if p > 0 {
            x[(i, 0)] = prev;
        }
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            x[(i, j)] = prev;
        }
    }
    x
}

fn standardize(x: &mut DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let names: Vec<String> = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
    r2d2_glmm::standardize_columns(x, &names).expect("continuous covariates are never constant")
}

fn linear_predictor(x: &DMatrix<f64>, groups: &[Vec<usize>], t: &Truth) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let mut e = t.beta0;
            for (j, b) in t.beta.iter().enumerate() {
                e += x[(i, j)] * b;
            }
            for (k, g) in groups.iter().enumerate() {
                e += t.u[k][g[i]];
            }
            e
        })
        .collect()
}

fn draw_response(study: Study, eta: &[f64], rng: &mut SeededRng) -> Vec<f64> {
    match study {
        Study::GaussianRe => {
            let noise = Normal::new(0.0, GAUSS_SIGMA2.sqrt()).expect("positive sd");
            eta.iter().map(|e| e + noise.sample(rng)).collect()
        }
        Study::PoissonMixed => eta.iter().map(|e| Poisson::new(e.exp()).expect("positive mean").sample(rng)).collect(),
        Study::LogisticSparse => eta
            .iter()
            .map(|e| {
                let p = 1.0 / (1.0 + (-e).exp());
                f64::from(Bernoulli::new(p).expect("probability").sample(rng))
            })
            .collect(),
    }
}

fn finish(study: Study, x: DMatrix<f64>, groups: Vec<Vec<usize>>, mut truth: Truth, rng: &mut SeededRng) -> (Dataset, Truth) {
    let eta = linear_predictor(&x, &groups, &truth);
    let fam = study.family();
    truth.r2n = r2n_from_eta(&fam, &eta);
    let y = draw_response(study, &eta, rng);
    (Dataset::new(y, x, groups).expect("generator dimensions agree"), truth)
}

/// Population variance of the linear predictor implied by the truth.
fn population_w(truth: &Truth, p: usize) -> f64 {
    // AR(1) correlation between standardized covariates
    let mut w: f64 = truth.sigma2_u.iter().sum();
    for i in 0..p {
        for j in 0..p {
            w += truth.beta[i] * truth.beta[j] * AR_RHO.powi((i as i32 - j as i32).abs());
        }
    }
    w
}

pub fn gen_gaussian_re(seed: u64) -> (Dataset, Truth) {
    let mut rng = stream_rng(seed, 11);
    let (l1, l2) = (10, 10);
    let u: Vec<Vec<f64>> = GAUSS_SIGMA2_U
        .iter()
        .zip([l1, l2])
        .map(|(&v, l)| {
            let d = Normal::new(0.0, v.sqrt()).expect("positive sd");
            (0..l).map(|_| d.sample(&mut rng)).collect()
        })
        .collect();
    let g1: Vec<usize> = (0..l1 * l2).map(|i| i / l2).collect();
    let g2: Vec<usize> = (0..l1 * l2).map(|i| i % l2).collect();
    let w: f64 = GAUSS_SIGMA2_U.iter().sum();
    let truth = Truth {
        study: Study::GaussianRe,
        beta0: 1.0,
        beta: vec![],
        u,
        sigma2_u: GAUSS_SIGMA2_U.to_vec(),
        sigma2: Some(GAUSS_SIGMA2),
        x_center: vec![],
        x_scale: vec![],
        r2n: f64::NAN,
        r2_population: w / (w + GAUSS_SIGMA2),
    };
    finish(Study::GaussianRe, DMatrix::zeros(l1 * l2, 0), vec![g1, g2], truth, &mut rng)
}

pub fn gen_poisson_mixed(seed: u64) -> (Dataset, Truth) {
    let mut rng = stream_rng(seed, 12);
    let (p, l, m) = (5, 20, 5);
    let n = l * m;
    let mut x = ar1_design(n, p, AR_RHO, &mut rng);
    let (center, scale) = standardize(&mut x);
    let bd = Normal::new(0.0, 0.1f64.sqrt()).expect("positive sd");
    let beta: Vec<f64> = (0..p).map(|_| bd.sample(&mut rng)).collect();
    let ud = Normal::new(0.0, POIS_SIGMA2_U.sqrt()).expect("positive sd");
    let u = vec![(0..l).map(|_| ud.sample(&mut rng)).collect::<Vec<f64>>()];
    let g: Vec<usize> = (0..n).map(|i| i / m).collect();
    let mut truth = Truth {
        study: Study::PoissonMixed,
        beta0: 0.25,
        beta,
        u,
        sigma2_u: vec![POIS_SIGMA2_U],
        sigma2: None,
        x_center: center,
        x_scale: scale,
        r2n: f64::NAN,
        r2_population: f64::NAN,
    };
    let w = population_w(&truth, p);
    truth.r2_population = r2_exact(&ModelFamily::poisson(), truth.beta0, w).unwrap_or(f64::NAN);
    finish(Study::PoissonMixed, x, vec![g], truth, &mut rng)
}

/// Positions of the nonzero coefficients in the sparse logistic design.
pub const SPARSE_SIGNAL: std::ops::Range<usize> = 22..27;

pub fn gen_logistic_sparse(seed: u64) -> (Dataset, Truth) {
    let mut rng = stream_rng(seed, 13);
    let (n, p) = (60, 50);
    let mut x = ar1_design(n, p, AR_RHO, &mut rng);
    let (center, scale) = standardize(&mut x);
    let mut beta = vec![0.0; p];
    for b in &mut beta[SPARSE_SIGNAL] {
        *b = rng.sample(StandardNormal);
    }
    let mut truth = Truth {
        study: Study::LogisticSparse,
        beta0: 0.5,
        beta,
        u: vec![],
        sigma2_u: vec![],
        sigma2: None,
        x_center: center,
        x_scale: scale,
        r2n: f64::NAN,
        r2_population: f64::NAN,
    };
    let w = population_w(&truth, p);
    let src = QuantileSource::StandardNormalShifted { beta0: truth.beta0, w };
    truth.r2_population = qmc_r2(&ModelFamily::logistic(), &src, &QmcConfig::default()).unwrap_or(f64::NAN);
    finish(Study::LogisticSparse, x, vec![], truth, &mut rng)
}

/// `n` new observations at fresh covariates and uniformly drawn group
/// levels, using the realized effects in `truth`.
pub fn holdout(truth: &Truth, n: usize, seed: u64) -> Holdout {
    let mut rng = stream_rng(seed, 14);
    let p = truth.beta.len();
    let mut x = ar1_design(n, p, AR_RHO, &mut rng);
    for j in 0..p {
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - truth.x_center[j]) / truth.x_scale[j];
        }
    }
    let groups: Vec<Vec<usize>> =
        truth.u.iter().map(|uk| (0..n).map(|_| rng.random_range(0..uk.len())).collect()).collect();
    let eta = linear_predictor(&x, &groups, truth);
    let y = draw_response(truth.study, &eta, &mut rng);
    Holdout { y, x, groups }
}

/// True linear predictor at holdout rows.
pub fn holdout_eta(truth: &Truth, h: &Holdout) -> Vec<f64> {
    linear_predictor(&h.x, &h.groups, truth)
}
