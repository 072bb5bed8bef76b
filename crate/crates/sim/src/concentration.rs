//! Spread of the sample variance of the linear predictor under the prior,
//! for a fixed-effects model with `phi_j = 1/p` and an orthonormalized
//! design (`X'X = (n - 1) I`, columns orthogonal to the intercept).

use nalgebra::DMatrix;
use r2d2_core::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Centered design with `X'X = (n - 1) I`. Requires `p < n`.
pub fn orthonormal_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    assert!(p < n, "need p < n for an orthonormal centered design");
    let mut rng = stream_rng(seed, 21);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for j in 0..p {
        let m = x.column(j).mean();
        for i in 0..n {
            x[(i, j)] -= m;
        }
    }
    let q = x.qr().q();
    q * ((n - 1) as f64).sqrt()
}

/// Sample variance `V(eta)` (denominator `n - 1`) of `eta = X beta` for
/// `draws` prior draws `beta ~ Normal(0, W/p I)`.
pub fn sample_variances(x: &DMatrix<f64>, w: f64, draws: usize, seed: u64) -> Vec<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let sd = (w / p as f64).sqrt();
    let mut rng = stream_rng(seed, 22);
    (0..draws)
        .map(|_| {
            let beta = nalgebra::DVector::from_fn(p, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
            let eta = x * beta;
            let m = eta.mean();
            eta.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .collect()
}

/// Exact `Var V(eta) = 2 (W/p)² tr((X'X)²) / (n - 1)²`.
pub fn exact_spread(x: &DMatrix<f64>, w: f64) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    let xtx = x.transpose() * x;
    let tr = (&xtx * &xtx).trace();
    2.0 * (w / p as f64).powi(2) * tr / ((n - 1) as f64).powi(2)
}

/// Monte-Carlo variance of `V(eta)` and its standard error.
pub fn spread(x: &DMatrix<f64>, w: f64, draws: usize, seed: u64) -> (f64, f64) {
    let v = sample_variances(x, w, draws, seed);
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let c2: Vec<f64> = v.iter().map(|x| (x - m).powi(2)).collect();
    let var = c2.iter().sum::<f64>() / (k - 1.0);
    // se of the sample variance from the spread of squared deviations
    let m4 = c2.iter().map(|d| d * d).sum::<f64>() / k;
    let se = ((m4 - var * var).max(0.0) / k).sqrt();
    (var, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_is_orthonormal_and_centered() {
        let x = orthonormal_design(60, 10, 1);
        let xtx = x.transpose() * &x;
        assert!((xtx - DMatrix::identity(10, 10) * 59.0).abs().max() < 1e-9);
        for j in 0..10 {
            assert!(x.column(j).sum().abs() < 1e-9);
        }
        assert!((exact_spread(&x, 2.0) - 2.0 * 4.0 / 10.0).abs() < 1e-10);
    }

    #[test]
    fn sample_variance_is_unbiased_for_w() {
        let x = orthonormal_design(80, 20, 2);
        let v = sample_variances(&x, 1.5, 4000, 3);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        // V = W chi2_p / p, sd of the mean = W sqrt(2/p / 4000)
        assert!((m - 1.5).abs() < 3.0 * 1.5 * (2.0 / 20.0 / 4000.0f64).sqrt());
    }
}
