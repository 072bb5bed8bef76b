//! Effective sample size by Geyer's initial monotone sequence estimator.

use rustfft::{num_complex::Complex, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub ess: f64,
    /// Set when the trace is constant (or too short), in which case `ess`
    /// is zero.
    pub degenerate: bool,
}

/// Sample autocovariances at lags `0..n` (biased, divided by `n`).
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (m as f64 * n as f64)).collect()
}

pub fn effective_sample_size(x: &[f64]) -> Ess {
    let n = x.len();
    if n < 4 {
        return Ess { ess: 0.0, degenerate: true };
    }
    let acov = autocovariance(x);
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if acov[0] <= (1e-14 * scale).powi(2) {
        return Ess { ess: 0.0, degenerate: true };
    }
    let rho: Vec<f64> = acov.iter().map(|c| c / acov[0]).collect();
    // pair sums Gamma_k = rho_{2k} + rho_{2k+1}, kept while positive and
    // forced non-increasing
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let g = rho[2 * k] + rho[2 * k + 1];
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        sum += g;
        prev = g;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / (n as f64).log10());
    Ess { ess: n as f64 / tau, degenerate: false }
}

/// ESS divided by wall-clock seconds.
pub fn effective_samples_per_second(x: &[f64], seconds: f64) -> f64 {
    let e = effective_sample_size(x);
    if e.degenerate || seconds <= 0.0 {
        return 0.0;
    }
    e.ess / seconds
}
