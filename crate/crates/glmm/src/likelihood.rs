//! Observation models on the linear-predictor scale.

use r2d2_core::special::{ln_gamma, softplus};
use r2d2_core::{FamilyKind, ModelFamily};

/// Observation model. `disp` is sigma² for the Gaussian model and theta for
/// the negative binomial, zero-inflated Poisson and Weibull models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    Gaussian,
    Poisson,
    /// NB1: mean `e^eta`, variance `theta * e^eta`.
    NegBinomial,
    /// Zero inflation `theta`, Poisson rate `e^eta`.
    ZeroInflatedPoisson,
    /// Scale `e^eta`, shape `theta`.
    Weibull,
    Bernoulli,
}

impl Likelihood {
    pub fn for_family(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::LocationScale => Likelihood::Gaussian,
            FamilyKind::Poisson | FamilyKind::PoissonOffset => Likelihood::Poisson,
            FamilyKind::NegBinomial => Likelihood::NegBinomial,
            FamilyKind::ZeroInflatedPoisson => Likelihood::ZeroInflatedPoisson,
            FamilyKind::Weibull => Likelihood::Weibull,
            FamilyKind::Logistic => Likelihood::Bernoulli,
        }
    }

    /// Whether theta is a sampled parameter.
    pub fn has_theta(self) -> bool {
        matches!(self, Likelihood::NegBinomial | Likelihood::ZeroInflatedPoisson | Likelihood::Weibull)
    }

    pub fn supports(self, y: f64) -> bool {
        let count = y >= 0.0 && y.fract() == 0.0 && y.is_finite();
        match self {
            Likelihood::Gaussian => y.is_finite(),
            Likelihood::Poisson | Likelihood::NegBinomial | Likelihood::ZeroInflatedPoisson => count,
            Likelihood::Weibull => y > 0.0 && y.is_finite(),
            Likelihood::Bernoulli => y == 0.0 || y == 1.0,
        }
    }

    pub fn log_density(self, y: f64, eta: f64, disp: f64) -> f64 {
        match self {
            Likelihood::Gaussian => {
                -0.5 * (2.0 * std::f64::consts::PI * disp).ln() - 0.5 * (y - eta) * (y - eta) / disp
            }
            Likelihood::Poisson => y * eta - eta.exp() - ln_gamma(y + 1.0),
            Likelihood::NegBinomial => {
                let excess = disp - 1.0;
                if excess < 1e-10 {
                    return y * eta - eta.exp() - ln_gamma(y + 1.0);
                }
                let r = eta.exp() / excess;
                ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) - r * disp.ln() + y * (excess / disp).ln()
            }
            Likelihood::ZeroInflatedPoisson => {
                let lam = eta.exp();
                if y == 0.0 {
                    (disp + (1.0 - disp) * (-lam).exp()).ln()
                } else {
                    (1.0 - disp).ln() + y * eta - lam - ln_gamma(y + 1.0)
                }
            }
            Likelihood::Weibull => {
                let z = y.ln() - eta;
                disp.ln() - eta + (disp - 1.0) * z - (disp * z).exp()
            }
            Likelihood::Bernoulli => y * eta - softplus(eta),
        }
    }

    /// The core family with the given dispersion, for means and variances.
    pub fn family(self, disp: f64) -> ModelFamily {
        let built = match self {
            Likelihood::Gaussian => ModelFamily::location_scale(disp),
            Likelihood::Poisson => Ok(ModelFamily::poisson()),
            Likelihood::NegBinomial => ModelFamily::negative_binomial(disp.max(1.0)),
            Likelihood::ZeroInflatedPoisson => ModelFamily::zero_inflated_poisson(disp),
            Likelihood::Weibull => ModelFamily::weibull(disp),
            Likelihood::Bernoulli => Ok(ModelFamily::logistic()),
        };
        built.expect("dispersion kept inside its domain by the sampler")
    }
}

/// Sample R² of a linear-predictor vector: `V(mu) / (V(mu) + M(sigma²))`
/// with the (n - 1)-denominator sample variance.
pub fn r2n_from_eta(family: &ModelFamily, eta: &[f64]) -> f64 {
    let n = eta.len();
    if n < 2 {
        return 0.0;
    }
    let mu: Vec<f64> = eta.iter().map(|&e| family.mean(e)).collect();
    if mu.iter().all(|&x| x == mu[0]) {
        return 0.0;
    }
    let m = mu.iter().sum::<f64>() / n as f64;
    let v = mu.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let s2 = eta.iter().map(|&e| family.variance(e)).sum::<f64>() / n as f64;
    v / (v + s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use r2d2_core::quad::{integrate, QuadOptions};

    fn total_mass(lik: Likelihood, eta: f64, disp: f64) -> f64 {
        (0..400).map(|y| lik.log_density(y as f64, eta, disp).exp()).sum()
    }

    #[test]
    fn count_models_are_normalized() {
        assert!((total_mass(Likelihood::Poisson, 1.2, 0.0) - 1.0).abs() < 1e-12);
        assert!((total_mass(Likelihood::NegBinomial, 1.2, 2.5) - 1.0).abs() < 1e-10);
        assert!((total_mass(Likelihood::ZeroInflatedPoisson, 1.2, 0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_models_match_family_moments() {
        for (lik, disp) in [(Likelihood::NegBinomial, 2.5), (Likelihood::ZeroInflatedPoisson, 0.3)] {
            let fam = lik.family(disp);
            let eta = 0.7;
            let m: f64 = (0..400).map(|y| y as f64 * lik.log_density(y as f64, eta, disp).exp()).sum();
            let m2: f64 = (0..400).map(|y| (y as f64).powi(2) * lik.log_density(y as f64, eta, disp).exp()).sum();
            assert!((m - fam.mean(eta)).abs() < 1e-10);
            assert!((m2 - m * m - fam.variance(eta)).abs() < 1e-9);
        }
    }

    #[test]
    fn weibull_matches_family_moments() {
        let (eta, th) = (0.4, 1.7);
        let f = |y: f64| Likelihood::Weibull.log_density(y, eta, th).exp();
        let opts = QuadOptions::default();
        let mass = integrate(f, 0.0, 60.0, opts).value;
        let m = integrate(|y| y * f(y), 0.0, 60.0, opts).value;
        let m2 = integrate(|y| y * y * f(y), 0.0, 60.0, opts).value;
        let fam = Likelihood::Weibull.family(th);
        assert!((mass - 1.0).abs() < 1e-9);
        assert!((m - fam.mean(eta)).abs() < 1e-8);
        assert!((m2 - m * m - fam.variance(eta)).abs() < 1e-7);
    }

    #[test]
    fn bernoulli_and_gaussian() {
        let p: f64 = (0..2).map(|y| Likelihood::Bernoulli.log_density(y as f64, -0.3, 0.0).exp()).sum();
        assert!((p - 1.0).abs() < 1e-15);
        let g = Likelihood::Gaussian.log_density(1.0, 1.0, 1.0);
        assert!((g + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn r2n_of_constant_predictor_is_zero() {
        assert_eq!(r2n_from_eta(&ModelFamily::poisson(), &[0.3; 10]), 0.0);
        let ls = ModelFamily::location_scale(1.0).unwrap();
        // V = 1 for (-1, 0, 1)
        assert!((r2n_from_eta(&ls, &[-1.0, 0.0, 1.0]) - 0.5).abs() < 1e-15);
    }
}
