//! Closed-form induced priors on W for the families with an exact R² map.

use crate::dist::R2PriorSpec;
use crate::error::{R2d2Error, Result};
use crate::family::{r2_bounds, FamilyKind, ModelFamily};
use crate::rng::seeded_rng;
use crate::special::ln_beta;
use rand::Rng;

const BOUND_TOL: f64 = 1e-12;
const W_CEILING: f64 = 700.0;

/// Prior on W induced by a four-parameter Beta prior on R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedPrior {
    family: ModelFamily,
    beta0: f64,
    spec: R2PriorSpec,
}

impl InducedPrior {
    /// Builds the prior for Beta(a, b) on the family's R² support.
    pub fn new(family: ModelFamily, beta0: f64, a: f64, b: f64) -> Result<Self> {
        if !family.has_exact_r2() {
            return Err(R2d2Error::UnsupportedFamily(family.kind().name().into()));
        }
        if !beta0.is_finite() {
            return Err(R2d2Error::InvalidParameter("beta0 must be finite".into()));
        }
        let (m, big_m) = r2_bounds(&family, beta0);
        let spec = R2PriorSpec::with_bounds(a, b, m, big_m)?;
        Ok(Self { family, beta0, spec })
    }

    /// Builds the prior from an explicit spec whose bounds must agree with
    /// the model's.
    pub fn with_spec(family: ModelFamily, beta0: f64, spec: R2PriorSpec) -> Result<Self> {
        let prior = Self::new(family, beta0, spec.a, spec.b)?;
        let (m, big_m) = (prior.spec.r2_min, prior.spec.r2_max);
        if (spec.r2_min - m).abs() > BOUND_TOL || (spec.r2_max - big_m).abs() > BOUND_TOL {
            return Err(R2d2Error::BoundsMismatch {
                given_min: spec.r2_min,
                given_max: spec.r2_max,
                model_min: m,
                model_max: big_m,
            });
        }
        Ok(prior)
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }
    pub fn beta0(&self) -> f64 {
        self.beta0
    }
    pub fn spec(&self) -> &R2PriorSpec {
        &self.spec
    }

    pub fn r2(&self, w: f64) -> f64 {
        let s = self.scaled_r2(w);
        self.spec.r2_min + self.spec.width() * s
    }

    /// R² rescaled to `[0, 1]` over the model's support.
    pub fn scaled_r2(&self, w: f64) -> f64 {
        self.family.r2_parts(self.beta0, w).map(|p| p.ln_s.exp()).unwrap_or(f64::NAN)
    }

    pub fn ln_pdf(&self, w: f64) -> f64 {
        if w < 0.0 {
            return f64::NEG_INFINITY;
        }
        if w == 0.0 {
            return self.origin_limit().ln();
        }
        let (a, b) = (self.spec.a, self.spec.b);
        let p = match self.family.r2_parts(self.beta0, w) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        let term = |e: f64, l: f64| if e == 0.0 { 0.0 } else { e * l };
        let v = term(a - 1.0, p.ln_s) + term(b - 1.0, p.ln_c) + p.ln_d - ln_beta(a, b);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn pdf(&self, w: f64) -> f64 {
        self.ln_pdf(w).exp()
    }

    /// Value of the density as `w -> 0+`.
    pub fn origin_limit(&self) -> f64 {
        let (a, b) = (self.spec.a, self.spec.b);
        if a < 1.0 {
            return f64::INFINITY;
        }
        if a > 1.0 {
            return 0.0;
        }
        let th = self.family.theta().unwrap_or(f64::NAN);
        let b0 = self.beta0;
        match self.family.kind() {
            FamilyKind::LocationScale => b / th,
            FamilyKind::Poisson => b * b0.exp(),
            FamilyKind::NegBinomial => b * b0.exp() / th,
            FamilyKind::ZeroInflatedPoisson => {
                b * (-b * b0).exp() * (1.0 + th * b0.exp()).powf(b) / (th + (-b0).exp()).powf(1.0 + b)
            }
            FamilyKind::PoissonOffset => {
                let c = th.powf(-0.5) * (-b0).exp();
                b * (3.0 * th - 1.0) / (2.0 * (th - 1.0 + c))
            }
            FamilyKind::Weibull => b / (1.0 - self.family.weibull_r2_max()),
            FamilyKind::Logistic => f64::NAN,
        }
    }

    /// Solves `s(W) = t` for the normalized R² given `t` and `1 - t`.
    pub fn invert_scaled(&self, t: f64, tc: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        if tc <= 0.0 {
            return Err(R2d2Error::NumericFailure("R2 at its upper bound has no finite W".into()));
        }
        if self.family.kind() == FamilyKind::LocationScale {
            let th = self.family.theta().unwrap_or(1.0);
            return Ok(th * t / tc);
        }
        // compare on whichever side of 1/2 keeps precision
        let use_upper = t > 0.5;
        let (lt, ltc) = (t.ln(), tc.ln());
        let below = |w: f64| -> Result<bool> {
            let p = self.family.r2_parts(self.beta0, w)?;
            Ok(if use_upper { p.ln_c > ltc } else { p.ln_s < lt })
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while below(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > W_CEILING {
                return Err(R2d2Error::NumericFailure(format!(
                    "cannot bracket R2 target {t} below W={W_CEILING}"
                )));
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * hi || mid <= lo || mid >= hi {
                break;
            }
            if below(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Inverts the R² map at a value on the original scale.
    pub fn invert_r2(&self, r2: f64) -> Result<f64> {
        let t = (r2 - self.spec.r2_min) / self.spec.width();
        let tc = (self.spec.r2_max - r2) / self.spec.width();
        self.invert_scaled(t, tc)
    }

    /// W at probability level `q` of the induced prior.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        let (t, tc) = crate::special::beta_quantile_pair(q, self.spec.a, self.spec.b);
        self.invert_scaled(t, tc)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let (t, tc) = self.spec.sample_scaled(rng);
        self.invert_scaled(t, tc)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

pub fn induced_pdf(prior: &InducedPrior, w: f64) -> f64 {
    prior.pdf(w)
}

pub fn origin_limit(prior: &InducedPrior) -> f64 {
    prior.origin_limit()
}

pub fn induced_sample(prior: &InducedPrior, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    prior.sample(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::GbpParams;
    use crate::family::r2_exact;
    use crate::quad::{integrate_half_line, QuadOptions};
    use crate::stats::{chi2_sf, ks_statistic};

    fn all_families() -> Vec<ModelFamily> {
        vec![
            ModelFamily::location_scale(1.0).unwrap(),
            ModelFamily::poisson(),
            ModelFamily::poisson_offset(0.5).unwrap(),
            ModelFamily::negative_binomial(2.0).unwrap(),
            ModelFamily::zero_inflated_poisson(0.3).unwrap(),
            ModelFamily::weibull(2.0).unwrap(),
        ]
    }

    const AB: [(f64, f64); 5] = [(0.5, 0.5), (1.0, 1.0), (1.0, 4.0), (4.0, 1.0), (4.0, 4.0)];

    #[test]
    fn location_scale_is_beta_prime() {
        let p = InducedPrior::new(ModelFamily::location_scale(1.0).unwrap(), 0.0, 1.0, 1.0).unwrap();
        assert!((p.pdf(1.0) - 0.25).abs() < 1e-15);
        let p = InducedPrior::new(ModelFamily::location_scale(2.5).unwrap(), 0.0, 1.7, 0.6).unwrap();
        let g = GbpParams::new(1.7, 0.6, 1.0, 2.5).unwrap();
        for i in 1..50 {
            let w = 0.3 * i as f64;
            assert!(((p.pdf(w) - g.pdf(w)) / g.pdf(w)).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_is_rejected() {
        assert!(matches!(
            InducedPrior::new(ModelFamily::logistic(), 0.0, 1.0, 1.0),
            Err(R2d2Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn mismatched_bounds_are_rejected() {
        let fam = ModelFamily::zero_inflated_poisson(0.3).unwrap();
        let spec = R2PriorSpec::new(1.0, 1.0).unwrap();
        assert!(matches!(InducedPrior::with_spec(fam, 0.0, spec), Err(R2d2Error::BoundsMismatch { .. })));
        let spec = R2PriorSpec::with_bounds(1.0, 1.0, 0.0, 0.7).unwrap();
        assert!(InducedPrior::with_spec(fam, 0.0, spec).is_ok());
    }

    #[test]
    fn origin_limit_examples() {
        let p = InducedPrior::new(ModelFamily::poisson(), 0.0, 1.0, 4.0).unwrap();
        assert!((p.origin_limit() - 4.0).abs() < 1e-15);
        let nb = InducedPrior::new(ModelFamily::negative_binomial(2.0).unwrap(), 0.0, 1.0, 1.0).unwrap();
        assert!((nb.origin_limit() - 0.5).abs() < 1e-15);
        for fam in all_families() {
            let p = InducedPrior::new(fam, 0.4, 2.0, 1.5).unwrap();
            assert_eq!(p.origin_limit(), 0.0);
            let p = InducedPrior::new(fam, 0.4, 0.6, 1.5).unwrap();
            assert_eq!(p.origin_limit(), f64::INFINITY);
        }
    }

    #[test]
    fn tabulated_origin_limits_match_the_density() {
        for fam in all_families() {
            for &b0 in &[-2.0, 0.0, 1.5] {
                for &b in &[0.5, 1.0, 4.0] {
                    let p = InducedPrior::new(fam, b0, 1.0, b).unwrap();
                    let lim = p.origin_limit();
                    let near = p.pdf(1e-9);
                    assert!(((near - lim) / lim).abs() < 1e-6, "{fam} b0={b0} b={b} {near} {lim}");
                }
            }
        }
    }

    #[test]
    fn negbin_unit_theta_equals_poisson() {
        let nb = InducedPrior::new(ModelFamily::negative_binomial(1.0).unwrap(), 0.7, 1.3, 2.0).unwrap();
        let po = InducedPrior::new(ModelFamily::poisson(), 0.7, 1.3, 2.0).unwrap();
        for i in 1..=50 {
            let w = 0.1 * i as f64;
            assert!((nb.pdf(w) - po.pdf(w)).abs() <= 1e-14 * po.pdf(w));
        }
    }

    #[test]
    fn normalization() {
        let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 20_000 };
        for fam in all_families() {
            for &(a, b) in &AB {
                for &b0 in &[-2.0, 0.0, 2.0] {
                    let p = InducedPrior::new(fam, b0, a, b).unwrap();
                    let total = integrate_half_line(|w| p.pdf(w), 1.0, opts).value;
                    assert!((total - 1.0).abs() < 1e-6, "{fam} a={a} b={b} b0={b0} total={total}");
                }
            }
        }
    }

    /// beta4_pdf(R²(w)) |dR²/dw| with a central finite difference.
    fn change_of_variables(p: &InducedPrior, w: f64) -> f64 {
        let h = 1e-5 * w.max(1.0);
        let fam = p.family();
        let d = (r2_exact(fam, p.beta0(), w + h).unwrap() - r2_exact(fam, p.beta0(), w - h).unwrap()) / (2.0 * h);
        let r = r2_exact(fam, p.beta0(), w).unwrap();
        p.spec().pdf(r).unwrap() * d.abs()
    }

    #[test]
    fn finite_difference_oracle() {
        for fam in all_families() {
            for &(a, b) in &AB {
                for &b0 in &[-2.0, 0.0, 2.0] {
                    let p = InducedPrior::new(fam, b0, a, b).unwrap();
                    for i in 1..=100 {
                        let w = 0.05 * i as f64;
                        let got = p.pdf(w);
                        let want = change_of_variables(&p, w);
                        assert!(((got - want) / want).abs() < 1e-5, "{fam} a={a} b={b} b0={b0} w={w}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn poisson_matches_displayed_closed_form() {
        // density written out directly from its (3e^w - 1)/2 factored form
        let (a, b, b0) = (1.5, 2.5, 0.3);
        let p = InducedPrior::new(ModelFamily::poisson(), b0, a, b).unwrap();
        for i in 1..40 {
            let w: f64 = 0.2 * i as f64;
            let e = w.exp_m1();
            let t = (-b0 - 0.5 * w).exp();
            let want = (-b0 * b - 0.5 * b * w).exp() * e.powf(a - 1.0) * (3.0 * w.exp() - 1.0)
                / (2.0 * ln_beta(a, b).exp() * (e + t).powf(a + b));
            assert!(((p.pdf(w) - want) / want).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_contrast_location_scale() {
        let fam = ModelFamily::location_scale(1.0).unwrap();
        let heavy = InducedPrior::new(fam, 0.0, 4.0, 1.0).unwrap();
        let light = InducedPrior::new(fam, 0.0, 1.0, 4.0).unwrap();
        let mut prev = 0.0;
        for i in 0..=90 {
            let w = 5.0 + 0.5 * i as f64;
            let ratio = heavy.pdf(w) / light.pdf(w);
            assert!(ratio > prev);
            prev = ratio;
        }
    }

    #[test]
    fn poisson_tail_is_exponential() {
        let p = InducedPrior::new(ModelFamily::poisson(), 0.0, 1.0, 1.0).unwrap();
        let h = 0.5;
        let mut prev = None;
        let mut w = 20.0;
        while w <= 40.0 {
            let d2 = p.ln_pdf(w + h) - 2.0 * p.ln_pdf(w) + p.ln_pdf(w - h);
            assert!(d2 <= 1e-9);
            if let Some(q) = prev {
                let q: f64 = q;
                assert!((d2 - q).abs() < 1e-8);
            }
            prev = Some(d2);
            w += 1.0;
        }
        // slope of the log density approaches -3b/2
        let slope = (p.ln_pdf(40.0) - p.ln_pdf(39.0)) / 1.0;
        assert!((slope + 1.5).abs() < 1e-6);
    }

    #[test]
    fn location_scale_closed_form_inversion() {
        let p = InducedPrior::new(ModelFamily::location_scale(1.0).unwrap(), 0.0, 1.0, 1.0).unwrap();
        assert_eq!(p.invert_r2(0.5).unwrap(), 1.0);
    }

    #[test]
    fn round_trip_law() {
        for fam in all_families() {
            let p = InducedPrior::new(fam, -0.5, 0.5, 0.5).unwrap();
            let ws = induced_sample(&p, 100_000, 17).unwrap();
            let r2: Vec<f64> = ws.iter().map(|&w| p.r2(w)).collect();
            let ks = ks_statistic(&r2, |r| p.spec().cdf(r));
            assert!(ks < 0.01, "{fam} ks={ks}");
        }
    }

    #[test]
    fn histogram_matches_density() {
        let p = InducedPrior::new(ModelFamily::poisson(), 0.0, 1.0, 4.0).unwrap();
        let n = 100_000;
        let ws = induced_sample(&p, n, 23).unwrap();
        // 50 equiprobable bins from the prior's own quantiles
        let edges: Vec<f64> = (0..=50)
            .map(|k| if k == 50 { f64::INFINITY } else { p.quantile(k as f64 / 50.0).unwrap() })
            .collect();
        // bin probabilities from quadrature of the density
        let opts = QuadOptions::default();
        let probs: Vec<f64> = edges
            .windows(2)
            .map(|e| {
                if e[1].is_infinite() {
                    integrate_half_line(|v| p.pdf(v + e[0]), 1.0, opts).value
                } else {
                    crate::quad::integrate(|v| p.pdf(v), e[0], e[1], opts).value
                }
            })
            .collect();
        let mut counts = [0usize; 50];
        for &w in &ws {
            let k = edges.partition_point(|&e| e <= w).saturating_sub(1).min(49);
            counts[k] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &pr)| (c as f64 - n as f64 * pr).powi(2) / (n as f64 * pr))
            .sum();
        assert!(chi2_sf(stat, 49.0) > 0.01, "stat={stat}");
    }
}
