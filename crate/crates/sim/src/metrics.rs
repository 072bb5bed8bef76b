//! Per-replicate accuracy metrics.

use crate::generate::{Holdout, Study, Truth};
use r2d2_core::special::ln_gamma;
use r2d2_glmm::PosteriorSamples;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn squared_error_mean(est: &[f64], truth: &[f64]) -> f64 {
    est.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / est.len() as f64
}

/// Mean log Poisson mass of `y` at means `mu`.
pub fn poisson_log_score(y: &[f64], mu: &[f64]) -> f64 {
    y.iter().zip(mu).map(|(&k, &m)| k * m.ln() - m - ln_gamma(k + 1.0)).sum::<f64>() / y.len() as f64
}

/// Area under the ROC curve by the Mann-Whitney rank statistic, with
/// tied scores given their average rank.
pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let n1 = labels.iter().filter(|&&l| l == 1.0).count() as f64;
    let n0 = n as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return f64::NAN;
    }
    let r1: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    (r1 - n1 * (n1 + 1.0) / 2.0) / (n1 * n0)
}

/// Metric values of one fitted replicate, in a fixed order per study.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub prior: String,
    pub values: Vec<(String, f64)>,
}

impl MetricsRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Metric names reported for a study, in table order.
pub fn metric_names(study: Study) -> Vec<String> {
    let mut v = vec!["r2n_bias".to_string(), "r2n_mse".to_string()];
    match study {
        Study::GaussianRe => {
            v.push("y_mse".into());
            v.push("sigma2_u1_mse".into());
            v.push("sigma2_u2_mse".into());
        }
        Study::PoissonMixed => {
            v.push("log_score".into());
            v.push("beta_l2".into());
            v.push("sigma2_u_mse".into());
        }
        Study::LogisticSparse => {
            v.push("auc".into());
            v.push("beta_l2".into());
        }
    }
    v
}

/// Point estimates are posterior means. The holdout prediction maps the
/// posterior-mean linear predictor through the mean function. `r2n` is
/// compared with the truth's plug-in sample value.
pub fn metrics(truth: &Truth, samples: &PosteriorSamples, holdout: &Holdout) -> MetricsRow {
    let study = truth.study;
    let r2n_hat = mean(&samples.r2n);
    let beta0 = mean(&samples.beta0);
    let beta = samples.beta_mean();
    let u_hat: Vec<Vec<f64>> = truth
        .u
        .iter()
        .enumerate()
        .map(|(k, uk)| (0..uk.len()).map(|l| samples.u.iter().map(|d| d[k][l]).sum::<f64>() / samples.len() as f64).collect())
        .collect();
    let eta_hat: Vec<f64> = (0..holdout.n())
        .map(|i| {
            let mut e = beta0;
            for (j, b) in beta.iter().enumerate() {
                e += holdout.x[(i, j)] * b;
            }
            for (k, g) in holdout.groups.iter().enumerate() {
                e += u_hat[k][g[i]];
            }
            e
        })
        .collect();
    let fam = study.family();
    let y_hat: Vec<f64> = eta_hat.iter().map(|&e| fam.mean(e)).collect();
    let s2u_hat: Vec<f64> = (0..truth.sigma2_u.len())
        .map(|k| samples.sigma2_u.iter().map(|v| v[k]).sum::<f64>() / samples.len() as f64)
        .collect();

    let mut values = vec![
        ("r2n_bias".to_string(), r2n_hat - truth.r2n),
        ("r2n_mse".to_string(), (r2n_hat - truth.r2n).powi(2)),
    ];
    match study {
        Study::GaussianRe => {
            values.push(("y_mse".into(), squared_error_mean(&y_hat, &holdout.y)));
            for k in 0..2 {
                values.push((format!("sigma2_u{}_mse", k + 1), (s2u_hat[k] - truth.sigma2_u[k]).powi(2)));
            }
        }
        Study::PoissonMixed => {
            values.push(("log_score".into(), poisson_log_score(&holdout.y, &y_hat)));
            values.push(("beta_l2".into(), squared_error_mean(&beta, &truth.beta)));
            values.push(("sigma2_u_mse".into(), (s2u_hat[0] - truth.sigma2_u[0]).powi(2)));
        }
        Study::LogisticSparse => {
            values.push(("auc".into(), auc(&y_hat, &holdout.y)));
            values.push(("beta_l2".into(), squared_error_mean(&beta, &truth.beta)));
        }
    }
    MetricsRow { prior: samples.prior_label.clone(), values }
}
