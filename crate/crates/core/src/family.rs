//! Likelihood families: mean and variance functions, links, and the
//! closed-form population R² under `eta ~ Normal(beta0, W)`.

use crate::error::{invalid, R2d2Error, Result};
use crate::special::{ln_gamma, log_add_exp, logistic};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    LocationScale,
    Poisson,
    PoissonOffset,
    NegBinomial,
    ZeroInflatedPoisson,
    Weibull,
    Logistic,
}

impl FamilyKind {
    pub fn requires_theta(self) -> bool {
        !matches!(self, FamilyKind::Poisson | FamilyKind::Logistic)
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::LocationScale => "gaussian",
            FamilyKind::Poisson => "poisson",
            FamilyKind::PoissonOffset => "poisson-offset",
            FamilyKind::NegBinomial => "negbin",
            FamilyKind::ZeroInflatedPoisson => "zip",
            FamilyKind::Weibull => "weibull",
            FamilyKind::Logistic => "logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "location-scale" | "locationscale" => FamilyKind::LocationScale,
            "poisson" => FamilyKind::Poisson,
            "poisson-offset" | "poissonoffset" => FamilyKind::PoissonOffset,
            "negbin" | "nb" | "negative-binomial" | "negbinomial" => FamilyKind::NegBinomial,
            "zip" | "zero-inflated-poisson" => FamilyKind::ZeroInflatedPoisson,
            "weibull" => FamilyKind::Weibull,
            "logistic" | "logit" | "bernoulli" | "binomial" => FamilyKind::Logistic,
            _ => return None,
        })
    }
}

/// Likelihood descriptor. `theta` is sigma^2 for location-scale, `exp(s2_N)`
/// for Poisson with offsets, the overdispersion for the negative binomial,
/// the zero-inflation probability for ZIP and the shape for Weibull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFamily {
    kind: FamilyKind,
    theta: Option<f64>,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.theta {
            Some(t) => write!(f, "{}(theta={})", self.kind.name(), t),
            None => write!(f, "{}", self.kind.name()),
        }
    }
}

impl ModelFamily {
    pub fn new(kind: FamilyKind, theta: Option<f64>) -> Result<Self> {
        match (kind.requires_theta(), theta) {
            (true, None) => return Err(invalid(format!("{} requires theta", kind.name()))),
            (false, Some(_)) => return Err(invalid(format!("{} takes no theta", kind.name()))),
            _ => {}
        }
        if let Some(t) = theta {
            let ok = t.is_finite()
                && match kind {
                    FamilyKind::LocationScale | FamilyKind::Weibull => t > 0.0,
                    FamilyKind::PoissonOffset | FamilyKind::NegBinomial => t >= 1.0,
                    FamilyKind::ZeroInflatedPoisson => (0.0..1.0).contains(&t),
                    FamilyKind::Poisson | FamilyKind::Logistic => false,
                };
            if !ok {
                return Err(invalid(format!("theta={t} outside the domain of {}", kind.name())));
            }
        }
        Ok(Self { kind, theta })
    }

    pub fn location_scale(sigma2: f64) -> Result<Self> {
        Self::new(FamilyKind::LocationScale, Some(sigma2))
    }
    pub fn poisson() -> Self {
        Self { kind: FamilyKind::Poisson, theta: None }
    }
    /// Poisson with log offsets whose variance is `s2_n`; stores `exp(s2_n)`.
    pub fn poisson_offset(s2_n: f64) -> Result<Self> {
        if !(s2_n >= 0.0) {
            return Err(invalid("log-offset variance must be nonnegative"));
        }
        Self::new(FamilyKind::PoissonOffset, Some(s2_n.exp()))
    }
    pub fn negative_binomial(theta: f64) -> Result<Self> {
        Self::new(FamilyKind::NegBinomial, Some(theta))
    }
    pub fn zero_inflated_poisson(theta: f64) -> Result<Self> {
        Self::new(FamilyKind::ZeroInflatedPoisson, Some(theta))
    }
    pub fn weibull(shape: f64) -> Result<Self> {
        Self::new(FamilyKind::Weibull, Some(shape))
    }
    pub fn logistic() -> Self {
        Self { kind: FamilyKind::Logistic, theta: None }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
    pub fn theta(&self) -> Option<f64> {
        self.theta
    }
    fn th(&self) -> f64 {
        self.theta.unwrap_or(f64::NAN)
    }
    pub fn has_exact_r2(&self) -> bool {
        self.kind != FamilyKind::Logistic
    }

    pub fn mean(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::LocationScale => eta,
            FamilyKind::Poisson | FamilyKind::PoissonOffset | FamilyKind::NegBinomial => eta.exp(),
            FamilyKind::ZeroInflatedPoisson => (1.0 - self.th()) * eta.exp(),
            FamilyKind::Weibull => (eta + ln_gamma(1.0 + 1.0 / self.th())).exp(),
            FamilyKind::Logistic => logistic(eta),
        }
    }

    pub fn variance(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::LocationScale => self.th(),
            FamilyKind::Poisson | FamilyKind::PoissonOffset => eta.exp(),
            FamilyKind::NegBinomial => self.th() * eta.exp(),
            FamilyKind::ZeroInflatedPoisson => {
                let th = self.th();
                let lam = eta.exp();
                (1.0 - th) * lam * (1.0 + th * lam)
            }
            FamilyKind::Weibull => (2.0 * eta).exp() * weibull_moment_gap(self.th()),
            FamilyKind::Logistic => {
                let m = logistic(eta);
                m * (1.0 - m)
            }
        }
    }

    /// Derivative of the mean function.
    pub fn mean_derivative(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::LocationScale => 1.0,
            FamilyKind::Logistic => self.variance(eta),
            _ => self.mean(eta),
        }
    }

    /// Canonical link `g` applied to a mean value.
    pub fn link(&self, mean: f64) -> Result<f64> {
        let ok = match self.kind {
            FamilyKind::LocationScale => mean.is_finite(),
            FamilyKind::Logistic => mean > 0.0 && mean < 1.0,
            _ => mean > 0.0 && mean.is_finite(),
        };
        if !ok {
            return Err(R2d2Error::LinkDomain(mean));
        }
        Ok(match self.kind {
            FamilyKind::LocationScale => mean,
            FamilyKind::Poisson | FamilyKind::PoissonOffset | FamilyKind::NegBinomial => mean.ln(),
            FamilyKind::ZeroInflatedPoisson => (mean / (1.0 - self.th())).ln(),
            FamilyKind::Weibull => mean.ln() - ln_gamma(1.0 + 1.0 / self.th()),
            FamilyKind::Logistic => (mean / (1.0 - mean)).ln(),
        })
    }

    /// Upper bound of R² for Weibull: the squared mean over the second moment.
    pub fn weibull_r2_max(&self) -> f64 {
        weibull_r2_max(self.th())
    }

    /// Pieces of the exact R² map on the normalized scale
    /// `s = (R² - m) / (M - m)`, all in log space.
    pub(crate) fn r2_parts(&self, beta0: f64, w: f64) -> Result<R2Parts> {
        if !(w >= 0.0) {
            return Err(invalid(format!("W must be nonnegative, got {w}")));
        }
        let th = self.th();
        let ln_e = if w == 0.0 { f64::NEG_INFINITY } else { (-(-w).exp_m1()).ln() };
        let half3 = (0.5 * (3.0 - (-w).exp())).ln();
        let parts = match self.kind {
            FamilyKind::LocationScale => {
                let ln_tot = (w + th).ln();
                R2Parts {
                    ln_s: w.ln() - ln_tot,
                    ln_c: th.ln() - ln_tot,
                    ln_d: th.ln() - 2.0 * ln_tot,
                }
            }
            FamilyKind::Poisson | FamilyKind::NegBinomial => {
                let kappa = if self.kind == FamilyKind::Poisson { 1.0 } else { th };
                let ln_t = kappa.ln() - beta0 - 1.5 * w;
                let ln_sum = log_add_exp(ln_e, ln_t);
                R2Parts {
                    ln_s: ln_e - ln_sum,
                    ln_c: ln_t - ln_sum,
                    ln_d: ln_t + half3 - 2.0 * ln_sum,
                }
            }
            FamilyKind::ZeroInflatedPoisson => {
                let ln_t = -beta0 - 1.5 * w;
                let ln_th = if th > 0.0 { th.ln() } else { f64::NEG_INFINITY };
                let ln_noise = log_add_exp(ln_th - w, ln_t);
                let ln_sum = log_add_exp(ln_e, ln_noise);
                R2Parts {
                    ln_s: ln_e - ln_sum,
                    ln_c: ln_noise - ln_sum,
                    ln_d: log_add_exp(ln_t + half3, ln_th - w) - 2.0 * ln_sum,
                }
            }
            FamilyKind::PoissonOffset => {
                let c = -0.5 * th.ln() - beta0;
                let base = (th - 1.0 + c.exp()).ln();
                let num = -th * (-1.5 * w).exp_m1() + (-w).exp() * (-0.5 * w).exp_m1();
                let den = (th - 1.0) - (-w).exp_m1() + (c - 1.5 * w).exp();
                let ln_den = den.ln();
                R2Parts {
                    ln_s: if w == 0.0 { f64::NEG_INFINITY } else { num.ln() - ln_den },
                    ln_c: -1.5 * w + base - ln_den,
                    ln_d: -1.5 * w + (3.0 * th - (-w).exp()).ln() + base
                        - std::f64::consts::LN_2
                        - 2.0 * ln_den,
                }
            }
            FamilyKind::Weibull => {
                let r = weibull_r2_max(th);
                let ln_den = (-r * (-w).exp()).ln_1p();
                R2Parts {
                    ln_s: ln_e - ln_den,
                    ln_c: (1.0 - r).ln() - w - ln_den,
                    ln_d: (1.0 - r).ln() - w - 2.0 * ln_den,
                }
            }
            FamilyKind::Logistic => return Err(R2d2Error::UnsupportedFamily("logistic".into())),
        };
        Ok(parts)
    }
}

/// `s`, `1 - s` and `ds/dW` in log space for the normalized R².
#[derive(Debug, Clone, Copy)]
pub(crate) struct R2Parts {
    pub ln_s: f64,
    pub ln_c: f64,
    pub ln_d: f64,
}

/// `Gamma(1 + 2/theta) - Gamma(1 + 1/theta)^2`, the Weibull variance factor.
fn weibull_moment_gap(theta: f64) -> f64 {
    let g1 = ln_gamma(1.0 + 1.0 / theta);
    let g2 = ln_gamma(1.0 + 2.0 / theta);
    (2.0 * g1).exp() * (g2 - 2.0 * g1).exp_m1()
}

/// `Gamma(1 + 1/theta)^2 / Gamma(1 + 2/theta)`.
pub fn weibull_r2_max(theta: f64) -> f64 {
    (2.0 * ln_gamma(1.0 + 1.0 / theta) - ln_gamma(1.0 + 2.0 / theta)).exp()
}

pub fn mean_fn(family: &ModelFamily, eta: f64) -> f64 {
    family.mean(eta)
}

pub fn var_fn(family: &ModelFamily, eta: f64) -> f64 {
    family.variance(eta)
}

/// Support `(R²_min, R²_max)` of the population R².
pub fn r2_bounds(family: &ModelFamily, beta0: f64) -> (f64, f64) {
    let th = family.th();
    match family.kind {
        FamilyKind::PoissonOffset => {
            let c = th.powf(-0.5) * (-beta0).exp();
            ((th - 1.0) / (th - 1.0 + c), 1.0)
        }
        FamilyKind::ZeroInflatedPoisson => (0.0, 1.0 - th),
        FamilyKind::Weibull => (0.0, weibull_r2_max(th)),
        _ => (0.0, 1.0),
    }
}

/// Exact population R² with `eta ~ Normal(beta0, W)`.
pub fn r2_exact(family: &ModelFamily, beta0: f64, w: f64) -> Result<f64> {
    let parts = family.r2_parts(beta0, w)?;
    let (m, big_m) = r2_bounds(family, beta0);
    Ok(m + (big_m - m) * parts.ln_s.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use crate::special::normal_pdf;

    fn families() -> Vec<ModelFamily> {
        vec![
            ModelFamily::location_scale(1.3).unwrap(),
            ModelFamily::poisson(),
            ModelFamily::poisson_offset(0.4).unwrap(),
            ModelFamily::negative_binomial(2.0).unwrap(),
            ModelFamily::zero_inflated_poisson(0.3).unwrap(),
            ModelFamily::weibull(1.7).unwrap(),
        ]
    }

    #[test]
    fn mean_and_variance_examples() {
        assert_eq!(mean_fn(&ModelFamily::poisson(), 0.0), 1.0);
        assert_eq!(mean_fn(&ModelFamily::zero_inflated_poisson(0.0).unwrap(), 0.0), 1.0);
        assert!((mean_fn(&ModelFamily::weibull(1.0).unwrap(), 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(var_fn(&ModelFamily::location_scale(1.0).unwrap(), 3.2), 1.0);
        assert_eq!(var_fn(&ModelFamily::negative_binomial(2.0).unwrap(), 0.0), 2.0);
        assert!((var_fn(&ModelFamily::zero_inflated_poisson(0.5).unwrap(), 0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn theta_domains_are_enforced() {
        assert!(ModelFamily::new(FamilyKind::Poisson, Some(1.0)).is_err());
        assert!(ModelFamily::new(FamilyKind::NegBinomial, None).is_err());
        assert!(ModelFamily::negative_binomial(0.9).is_err());
        assert!(ModelFamily::negative_binomial(1.0).is_ok());
        assert!(ModelFamily::zero_inflated_poisson(1.0).is_err());
        assert!(ModelFamily::weibull(0.0).is_err());
        assert!(ModelFamily::location_scale(f64::NAN).is_err());
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_exact(&ModelFamily::poisson(), 1.3, 0.0).unwrap(), 0.0);
        let ls = ModelFamily::location_scale(1.0).unwrap();
        assert!((r2_exact(&ls, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            r2_exact(&ModelFamily::logistic(), 0.0, 1.0),
            Err(R2d2Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn bounds_examples() {
        let off = ModelFamily::new(FamilyKind::PoissonOffset, Some(1.0)).unwrap();
        assert_eq!(r2_bounds(&off, -0.7), (0.0, 1.0));
        let zip = ModelFamily::zero_inflated_poisson(0.3).unwrap();
        let (lo, hi) = r2_bounds(&zip, 0.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.7).abs() < 1e-15);
        // exponential responses: mean^2 / second moment = 1/2
        let wb = ModelFamily::weibull(1.0).unwrap();
        assert!((r2_bounds(&wb, 0.0).1 - 0.5).abs() < 1e-14);
        // the response becomes degenerate given eta as the shape grows
        let wb = ModelFamily::weibull(1e6).unwrap();
        assert!((r2_bounds(&wb, 0.0).1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bounds_are_attained() {
        for fam in families() {
            for &b0 in &[-2.0, 0.0, 2.0] {
                let (m, big_m) = r2_bounds(&fam, b0);
                let at0 = r2_exact(&fam, b0, 0.0).unwrap();
                assert!((at0 - m).abs() < 1e-15, "{fam} {b0}");
                // location-scale approaches 1 only polynomially in W
                let w_far = if fam.kind() == FamilyKind::LocationScale { 1e8 } else { 50.0 };
                let far = r2_exact(&fam, b0, w_far).unwrap();
                assert!((far - big_m).abs() < 1e-6, "{fam} {b0} {far} {big_m}");
            }
        }
    }

    #[test]
    fn r2_is_strictly_increasing() {
        for fam in families() {
            for &b0 in &[-2.0, 0.0, 2.0] {
                let mut prev = r2_exact(&fam, b0, 0.0).unwrap();
                for i in 1..400 {
                    let w = 0.02 * i as f64;
                    let cur = r2_exact(&fam, b0, w).unwrap();
                    assert!(cur > prev, "{fam} b0={b0} w={w}");
                    prev = cur;
                }
            }
        }
    }

    #[test]
    fn special_cases_reduce_to_poisson() {
        let p = ModelFamily::poisson();
        let z = ModelFamily::zero_inflated_poisson(0.0).unwrap();
        let nb = ModelFamily::negative_binomial(1.0).unwrap();
        for &b0 in &[-2.0, 0.3, 2.0] {
            for i in 0..60 {
                let w = 0.1 * i as f64;
                let rp = r2_exact(&p, b0, w).unwrap();
                assert!((r2_exact(&z, b0, w).unwrap() - rp).abs() < 1e-12);
                assert!((r2_exact(&nb, b0, w).unwrap() - rp).abs() < 1e-12);
            }
        }
    }

    /// Var mu(eta) / (Var mu(eta) + E sigma^2(eta)) by adaptive quadrature
    /// over the normal law of eta, independent of the closed forms. With a
    /// log offset, eta carries the offset's variance on top of `w`.
    fn r2_by_quadrature(fam: &ModelFamily, b0: f64, w: f64) -> f64 {
        if fam.kind == FamilyKind::PoissonOffset {
            let s2_n = fam.theta.unwrap().ln();
            return r2_by_quadrature(&ModelFamily::poisson(), b0, w + s2_n);
        }
        let sd = w.sqrt();
        let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 4000 };
        let lim = 12.0;
        let ex = |g: &dyn Fn(f64) -> f64| integrate(|z| g(b0 + sd * z) * normal_pdf(z), -lim, lim, opts).value;
        let m1 = ex(&|e| fam.mean(e));
        let m2 = ex(&|e| (fam.mean(e) - m1).powi(2));
        let s2 = ex(&|e| fam.variance(e));
        m2 / (m2 + s2)
    }

    #[test]
    fn closed_forms_match_quadrature_of_the_definition() {
        for fam in families() {
            for &b0 in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
                for &w in &[0.05, 0.3, 1.0, 2.0, 4.0] {
                    let exact = r2_exact(&fam, b0, w).unwrap();
                    let quad = r2_by_quadrature(&fam, b0, w);
                    assert!(
                        ((exact - quad) / quad).abs() < 1e-6,
                        "{fam} b0={b0} w={w} exact={exact} quad={quad}"
                    );
                }
            }
        }
    }
}
