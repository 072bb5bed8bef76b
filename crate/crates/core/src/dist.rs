//! Distributions the prior is built from: the four-parameter beta on R², the
//! (generalized) beta prime on W, and the Dirichlet on the variance shares.

use crate::error::{invalid, R2d2Error, Result};
use crate::rng::seeded_rng;
use crate::special::{beta_cdf_pair, beta_quantile_pair, ln_beta, softplus};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Beta(a, b) prior on R², rescaled to `[r2_min, r2_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R2PriorSpec {
    pub a: f64,
    pub b: f64,
    pub r2_min: f64,
    pub r2_max: f64,
}

impl R2PriorSpec {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_bounds(a, b, 0.0, 1.0)
    }

    pub fn with_bounds(a: f64, b: f64, r2_min: f64, r2_max: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(invalid(format!("shape parameters must be positive, got a={a}, b={b}")));
        }
        if !((0.0..1.0).contains(&r2_min) && r2_max > r2_min && r2_max <= 1.0) {
            return Err(invalid(format!("invalid R2 bounds [{r2_min}, {r2_max}]")));
        }
        Ok(Self { a, b, r2_min, r2_max })
    }

    pub fn width(&self) -> f64 {
        self.r2_max - self.r2_min
    }

    pub fn ln_pdf(&self, r: f64) -> Result<f64> {
        let (m, big_m) = (self.r2_min, self.r2_max);
        if !(r >= m && r <= big_m) {
            return Err(R2d2Error::OutOfSupport { value: r, lo: m, hi: big_m });
        }
        let w = self.width();
        Ok(self.ln_pdf_scaled((r - m) / w, (big_m - r) / w))
    }

    /// Log density at `r = m + (M - m) s`, given `s` and `1 - s` separately.
    pub fn ln_pdf_scaled(&self, s: f64, sc: f64) -> f64 {
        let ln0 = |x: f64| if x <= 0.0 { f64::NEG_INFINITY } else { x.ln() };
        let term = |e: f64, l: f64| if e == 0.0 { 0.0 } else { e * l };
        term(self.a - 1.0, ln0(s)) + term(self.b - 1.0, ln0(sc)) - self.width().ln() - ln_beta(self.a, self.b)
    }

    pub fn pdf(&self, r: f64) -> Result<f64> {
        Ok(self.ln_pdf(r)?.exp())
    }

    pub fn cdf(&self, r: f64) -> f64 {
        let s = ((r - self.r2_min) / self.width()).clamp(0.0, 1.0);
        let sc = ((self.r2_max - r) / self.width()).clamp(0.0, 1.0);
        beta_cdf_pair(s, sc, self.a, self.b)
    }

    /// Draws the normalized value `s` and its complement `1 - s`.
    pub fn sample_scaled<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        beta_pair_sample(self.a, self.b, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (s, _) = self.sample_scaled(rng);
        self.r2_min + self.width() * s
    }
}

pub fn beta4_pdf(r: f64, spec: &R2PriorSpec) -> Result<f64> {
    spec.pdf(r)
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

/// Beta(a, b) draw by the gamma ratio, returned with its complement.
pub fn beta_pair_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    loop {
        let x = gamma_draw(a, rng);
        let y = gamma_draw(b, rng);
        let s = x + y;
        if s > 0.0 && s.is_finite() {
            return (x / s, y / s);
        }
    }
}

/// Generalized beta prime: `W = d * (R / (1 - R))^(1/c)` with `R ~ Beta(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbpParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl GbpParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if [a, b, c, d].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self { a, b, c, d })
        } else {
            Err(invalid(format!("GBP parameters must be positive: ({a}, {b}, {c}, {d})")))
        }
    }

    /// Beta prime BP(a, b).
    pub fn beta_prime(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, 1.0, 1.0)
    }

    /// Law of `|T|` for `T = sigma * t_nu`.
    pub fn half_t(nu: f64, sigma: f64) -> Result<Self> {
        Self::new(0.5, 0.5 * nu, 2.0, (nu * sigma * sigma).sqrt())
    }

    pub fn half_cauchy(sigma: f64) -> Result<Self> {
        Self::half_t(1.0, sigma)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn has_mean(&self) -> bool {
        self.b * self.c > 1.0
    }

    pub fn mean(&self) -> Option<f64> {
        if !self.has_mean() {
            return None;
        }
        let k = 1.0 / self.c;
        Some(self.d * (ln_beta(self.a + k, self.b - k) - ln_beta(self.a, self.b)).exp())
    }

    /// Density as `w -> 0+`.
    pub fn origin_limit(&self) -> f64 {
        let ac = self.a * self.c;
        if (ac - 1.0).abs() < 1e-12 {
            self.c / (self.d * ln_beta(self.a, self.b).exp())
        } else if ac < 1.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    pub fn ln_pdf(&self, w: f64) -> f64 {
        if w < 0.0 {
            return f64::NEG_INFINITY;
        }
        if w == 0.0 {
            return self.origin_limit().ln();
        }
        let lx = (w / self.d).ln();
        self.c.ln() + (self.a * self.c - 1.0) * lx
            - (self.a + self.b) * softplus(self.c * lx)
            - self.d.ln()
            - ln_beta(self.a, self.b)
    }

    pub fn pdf(&self, w: f64) -> f64 {
        self.ln_pdf(w).exp()
    }

    /// `(r, 1 - r)` with `r = x^c / (1 + x^c)`, `x = w / d`.
    fn beta_pair_of(&self, w: f64) -> (f64, f64) {
        let z = self.c * (w / self.d).ln();
        let r = crate::special::logistic(z);
        let rc = crate::special::logistic(-z);
        (r, rc)
    }

    pub fn cdf(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        if w == f64::INFINITY {
            return 1.0;
        }
        let (r, rc) = self.beta_pair_of(w);
        beta_cdf_pair(r, rc, self.a, self.b)
    }

    /// Survival function `1 - F(w)`, accurate in the upper tail.
    pub fn sf(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 1.0;
        }
        let (r, rc) = self.beta_pair_of(w);
        beta_cdf_pair(rc, r, self.b, self.a)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let (r, rc) = beta_quantile_pair(q, self.a, self.b);
        self.from_beta_pair(r, rc)
    }

    fn from_beta_pair(&self, r: f64, rc: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if rc <= 0.0 {
            return f64::INFINITY;
        }
        self.d * ((r.ln() - rc.ln()) / self.c).exp()
    }

    /// Maps an R² value through `W = d * (R² / (1 - R²))^(1/c)`.
    pub fn from_r2(&self, r2: f64) -> f64 {
        self.from_beta_pair(r2, 1.0 - r2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = gamma_draw(self.a, rng);
        let y = gamma_draw(self.b, rng);
        if x == 0.0 {
            return 0.0;
        }
        self.d * ((x.ln() - y.ln()) / self.c).exp()
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Law of `sqrt(W)`.
    pub fn sqrt_law(&self) -> GbpParams {
        GbpParams { a: self.a, b: self.b, c: 2.0 * self.c, d: self.d.sqrt() }
    }
}

pub fn bp_pdf(w: f64, a: f64, b: f64) -> f64 {
    if w < 0.0 {
        return 0.0;
    }
    ((a - 1.0) * w.ln() - (a + b) * w.ln_1p() - ln_beta(a, b)).exp()
}

pub fn gbp_pdf(w: f64, p: &GbpParams) -> f64 {
    p.pdf(w)
}

pub fn gbp_cdf(w: f64, p: &GbpParams) -> f64 {
    p.cdf(w)
}

pub fn gbp_quantile(q: f64, p: &GbpParams) -> f64 {
    p.quantile(q)
}

pub fn gbp_sample(n: usize, p: &GbpParams, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    p.sample_n(n, &mut rng)
}

pub fn gbp_sqrt_law(p: &GbpParams) -> GbpParams {
    p.sqrt_law()
}

/// Dirichlet(xi) on the variance shares.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    xi: Vec<f64>,
}

impl DirichletSpec {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() || xi.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(invalid("Dirichlet concentrations must be positive and nonempty"));
        }
        Ok(Self { xi })
    }

    pub fn symmetric(k: usize, xi: f64) -> Result<Self> {
        Self::new(vec![xi; k])
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.xi.len() == 1 {
            return vec![1.0];
        }
        loop {
            let g: Vec<f64> = self.xi.iter().map(|&x| gamma_draw(x, rng)).collect();
            let s: f64 = g.iter().sum();
            if s > 0.0 && s.is_finite() {
                return g.into_iter().map(|v| v / s).collect();
            }
        }
    }

    /// Log density with respect to Lebesgue measure on the first `k - 1`
    /// coordinates.
    pub fn ln_pdf(&self, phi: &[f64]) -> f64 {
        let total: f64 = self.xi.iter().sum();
        let norm = crate::special::ln_gamma(total)
            - self.xi.iter().map(|&x| crate::special::ln_gamma(x)).sum::<f64>();
        norm + self
            .xi
            .iter()
            .zip(phi)
            .map(|(&x, &p)| if x == 1.0 { 0.0 } else { (x - 1.0) * p.ln() })
            .sum::<f64>()
    }
}

pub fn dirichlet_sample(spec: &DirichletSpec, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    spec.sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, integrate_half_line, integrate_unit, QuadOptions};
    use crate::stats::ks_statistic;
    use proptest::prelude::*;

    #[test]
    fn beta4_examples() {
        let u = R2PriorSpec::new(1.0, 1.0).unwrap();
        assert!((beta4_pdf(0.5, &u).unwrap() - 1.0).abs() < 1e-15);
        let s = R2PriorSpec::with_bounds(1.0, 1.0, 0.0, 0.7).unwrap();
        assert!((beta4_pdf(0.35, &s).unwrap() - 1.0 / 0.7).abs() < 1e-12);
        let s = R2PriorSpec::with_bounds(2.5, 1.5, 0.1, 0.9).unwrap();
        assert_eq!(beta4_pdf(0.1, &s).unwrap(), 0.0);
        assert!(matches!(beta4_pdf(0.95, &s), Err(R2d2Error::OutOfSupport { .. })));
    }

    #[test]
    fn gbp_examples() {
        let bp = GbpParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((gbp_pdf(1.0, &bp) - 0.25).abs() < 1e-15);
        assert!((gbp_quantile(0.5, &bp) - 1.0).abs() < 1e-12);
        assert_eq!(bp.from_r2(0.5), 1.0);
        let p = GbpParams::new(0.7, 2.0, 1.0, 3.0).unwrap();
        let beta_half = crate::special::beta_cdf(0.5, 0.7, 2.0);
        assert!((gbp_cdf(3.0, &p) - beta_half).abs() < 1e-14);
        assert_eq!(gbp_sqrt_law(&GbpParams::new(1.0, 1.0, 1.0, 4.0).unwrap()).as_array(), [1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn origin_trichotomy() {
        let lt = GbpParams::new(0.5, 1.0, 1.5, 1.0).unwrap();
        assert_eq!(lt.pdf(0.0), f64::INFINITY);
        assert!(lt.pdf(1e-20) > 1e4);
        let eq = GbpParams::new(0.5, 2.0, 2.0, 1.7).unwrap();
        let lim = 2.0 / (ln_beta(0.5, 2.0).exp() * 1.7);
        assert!((eq.pdf(0.0) - lim).abs() < 1e-12);
        assert!((eq.pdf(1e-9) - lim).abs() < 1e-6);
        let gt = GbpParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(gt.pdf(0.0), 0.0);
        assert!(gt.pdf(1e-9) < 1e-8);
    }

    #[test]
    fn quantile_round_trip() {
        let p = GbpParams::new(0.37, 2.6, 1.8, 0.45).unwrap();
        for &q in &[0.01, 0.5, 0.99] {
            assert!((gbp_cdf(gbp_quantile(q, &p), &p) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn bp_is_gbp_with_unit_c_d() {
        let p = GbpParams::beta_prime(2.3, 0.8).unwrap();
        for i in 1..60 {
            let w = 0.17 * i as f64;
            assert!((gbp_pdf(w, &p) - bp_pdf(w, 2.3, 0.8)).abs() < 1e-13 * bp_pdf(w, 2.3, 0.8).max(1.0));
        }
    }

    #[test]
    fn samples_follow_cdf() {
        let p = GbpParams::new(1.4, 0.9, 0.8, 2.0).unwrap();
        let xs = gbp_sample(100_000, &p, 11);
        let ks = ks_statistic(&xs, |w| p.cdf(w));
        assert!(ks < 0.01, "ks={ks}");
    }

    #[test]
    fn cdf_matches_quadrature_of_pdf() {
        let p = GbpParams::new(1.4, 0.9, 0.8, 2.0).unwrap();
        for &w in &[0.1, 1.0, 7.0] {
            let q = integrate(|x| p.pdf(x), 0.0, w, QuadOptions::default()).value;
            assert!((q - p.cdf(w)).abs() < 1e-8);
        }
    }

    #[test]
    fn half_cauchy_special_case() {
        let sigma = 1.7;
        let w = GbpParams::new(0.5, 0.5, 1.0, sigma * sigma).unwrap();
        let roots: Vec<f64> = gbp_sample(100_000, &w, 5).into_iter().map(f64::sqrt).collect();
        let hc = |x: f64| 2.0 / std::f64::consts::PI * (x / sigma).atan();
        assert!(ks_statistic(&roots, hc) < 0.01);
        assert_eq!(GbpParams::half_cauchy(sigma).unwrap().as_array(), w.sqrt_law().as_array());
    }

    #[test]
    fn half_t_identification() {
        // |sigma * t_nu| with t_nu = Z / sqrt(V / nu)
        use rand_distr::{ChiSquared, StandardNormal};
        let (nu, sigma): (f64, f64) = (5.0, 0.8);
        let mut rng = seeded_rng(3);
        let chi = ChiSquared::new(nu).unwrap();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v: f64 = chi.sample(&mut rng);
                (sigma * z / (v / nu).sqrt()).abs()
            })
            .collect();
        let p = GbpParams::half_t(nu, sigma).unwrap();
        assert!(ks_statistic(&draws, |x| p.cdf(x)) < 0.01);
    }

    #[test]
    fn sqrt_law_in_distribution() {
        let p = GbpParams::new(0.8, 1.6, 1.3, 2.2).unwrap();
        let roots: Vec<f64> = gbp_sample(100_000, &p, 21).into_iter().map(f64::sqrt).collect();
        let q = p.sqrt_law();
        let direct = gbp_sample(100_000, &q, 22);
        assert!(crate::stats::ks_two_sample(&roots, &direct) < 0.01);
    }

    #[test]
    fn mean_matches_quadrature_and_sampling() {
        let p = GbpParams::new(1.2, 2.5, 1.0, 0.7).unwrap();
        let m = p.mean().unwrap();
        let q = integrate_half_line(|w| w * p.pdf(w), p.d, QuadOptions::default()).value;
        assert!((m - q).abs() < 1e-8);
        let xs = gbp_sample(200_000, &p, 8);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((mean - m).abs() < 3.0 * sd / (xs.len() as f64).sqrt());
    }

    #[test]
    fn heavy_tail_mean_diverges() {
        // bc = 0.8: running means keep growing across decades of n
        let p = GbpParams::new(1.0, 0.8, 1.0, 1.0).unwrap();
        assert!(!p.has_mean());
        let mut means = Vec::new();
        for (i, &n) in [1_000usize, 100_000, 10_000_000].iter().enumerate() {
            let mut tot = 0.0;
            for rep in 0..5u64 {
                let xs = gbp_sample(n, &p, 100 + 10 * i as u64 + rep);
                tot += xs.iter().sum::<f64>() / n as f64;
            }
            means.push(tot / 5.0);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }

    #[test]
    fn dirichlet_examples() {
        let one = DirichletSpec::new(vec![1.0]).unwrap();
        assert_eq!(dirichlet_sample(&one, 1), vec![1.0]);
        let n = 100_000;
        for (xi, want) in [(vec![0.7, 0.7], vec![0.5, 0.5]), (vec![2.0, 1.0, 1.0], vec![0.5, 0.25, 0.25])] {
            let spec = DirichletSpec::new(xi.clone()).unwrap();
            let mut rng = seeded_rng(9);
            let k = xi.len();
            let total: f64 = xi.iter().sum();
            let mut sums = vec![0.0; k];
            for _ in 0..n {
                let phi = spec.sample(&mut rng);
                assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (s, p) in sums.iter_mut().zip(&phi) {
                    *s += p;
                }
            }
            for j in 0..k {
                let var = xi[j] * (total - xi[j]) / (total * total * (total + 1.0));
                let se = (var / n as f64).sqrt();
                assert!((sums[j] / n as f64 - want[j]).abs() < 3.0 * se);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gbp_normalizes(ac in 0.2f64..8.0, bc in 0.2f64..8.0, c in 0.3f64..3.0, d in 0.1f64..10.0) {
            let p = GbpParams::new(ac / c, bc / c, c, d).unwrap();
            let opts = QuadOptions { abs_tol: 1e-11, rel_tol: 1e-11, max_intervals: 20_000 };
            let total = integrate_half_line(|w| p.pdf(w), p.d, opts).value;
            prop_assert!((total - 1.0).abs() < 1e-8, "total={}", total);
        }

        #[test]
        fn beta4_normalizes(a in 0.3f64..6.0, b in 0.3f64..6.0, m in 0.0f64..0.5, width in 0.05f64..0.5) {
            let spec = R2PriorSpec::with_bounds(a, b, m, m + width).unwrap();
            let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 0 };
            let total = integrate_unit(|s, sc| width * spec.ln_pdf_scaled(s, sc).exp(), opts).value;
            prop_assert!((total - 1.0).abs() < 1e-10, "total={}", total);
        }

        #[test]
        fn dirichlet_on_simplex(xi in proptest::collection::vec(0.05f64..5.0, 1..8), seed in 0u64..1000) {
            let spec = DirichletSpec::new(xi).unwrap();
            let phi = dirichlet_sample(&spec, seed);
            prop_assert!(phi.iter().all(|p| *p >= 0.0));
            prop_assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
