//! Random-walk Metropolis proposals with Robbins-Monro scale adaptation and
//! an empirical covariance refreshed a few times during burn-in. Both are
//! frozen once burn-in ends.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub(crate) struct Adaptive {
    pub name: String,
    dim: usize,
    target: f64,
    log_scale: f64,
    chol: DMatrix<f64>,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
    count: usize,
    accepted: u64,
    proposed: u64,
}

pub(crate) fn lower_cholesky(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let mut c = cov.clone();
    let mut jitter = 1e-10 * (cov.trace() / d as f64).max(1e-300);
    for _ in 0..30 {
        if let Some(ch) = c.clone().cholesky() {
            return ch.l();
        }
        for i in 0..d {
            c[(i, i)] += jitter;
        }
        jitter *= 10.0;
    }
    DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| cov[(i, i)].abs().sqrt().max(1e-8)))
}

impl Adaptive {
    pub fn new(name: impl Into<String>, cov0: DMatrix<f64>, target: f64) -> Self {
        let dim = cov0.nrows();
        Self {
            name: name.into(),
            dim,
            target,
            log_scale: (2.38 / (dim as f64).sqrt()).ln(),
            chol: lower_cholesky(&cov0),
            sum: DVector::zeros(dim),
            outer: DMatrix::zeros(dim, dim),
            count: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn scalar(name: impl Into<String>, sd: f64, target: f64) -> Self {
        Self::new(name, DMatrix::from_element(1, 1, sd * sd), target)
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.chol * z * self.log_scale.exp();
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// Step `scale * L^-T z`, i.e. covariance `scale² H^-1` for a precision
    /// `H = L L'` supplied by the caller.
    pub fn propose_precision<R: Rng + ?Sized>(&self, x: &[f64], chol_h: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = chol_h.transpose().solve_upper_triangular(&z).unwrap_or(z) * self.log_scale.exp();
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    pub fn propose_scalar<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.propose(&[x], rng)[0]
    }

    /// Records an accept/reject at iteration `t`; adapts while `t < burn_in`.
    pub fn record(&mut self, accepted: bool, t: usize, burn_in: usize) {
        if t < burn_in {
            let gamma = ((t + 1) as f64).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + gamma * (a - self.target)).clamp(-20.0, 5.0);
        } else {
            self.proposed += 1;
            self.accepted += accepted as u64;
        }
    }

    /// Accumulates the current state for the next covariance refresh.
    pub fn observe(&mut self, x: &[f64]) {
        let v = DVector::from_column_slice(x);
        self.sum += &v;
        self.outer += &v * v.transpose();
        self.count += 1;
    }

    pub fn refresh(&mut self) {
        if self.count < (3 * self.dim).max(20) {
            return;
        }
        let n = self.count as f64;
        let mean = &self.sum / n;
        let cov = (&self.outer - &mean * mean.transpose() * n) / (n - 1.0);
        if cov.iter().all(|v| v.is_finite()) && cov.trace() > 0.0 {
            self.chol = lower_cholesky(&cov);
            self.log_scale = (2.38 / (self.dim as f64).sqrt()).ln();
        }
        self.sum.fill(0.0);
        self.outer.fill(0.0);
        self.count = 0;
    }

    /// Post-burn-in acceptance rate.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}
