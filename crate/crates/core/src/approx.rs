//! Quantile-grid (QMC) approximation of R²(W) and its induced density, plus
//! the first-order linear approximation.

use crate::dist::{GbpParams, R2PriorSpec};
use crate::error::{invalid, R2d2Error, Result};
use crate::family::ModelFamily;
use crate::special::{normal_cdf, normal_pdf, normal_quantile};

/// Placement of the quantile nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRule {
    /// `i / K` for `i = 1, ..., K - 1`.
    Endpoint,
    /// `(i - 1/2) / K` for `i = 1, ..., K`.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcConfig {
    pub k: usize,
    pub fd_step_scale: f64,
    pub nodes: NodeRule,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { k: 10_000, fd_step_scale: 1e-4, nodes: NodeRule::Endpoint }
    }
}

impl QmcConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(invalid("QMC grid needs K >= 2"));
        }
        if !(self.fd_step_scale > 0.0) {
            return Err(invalid("fd_step_scale must be positive"));
        }
        Ok(())
    }

    /// Probability levels of the nodes.
    pub fn levels(&self) -> Vec<f64> {
        let k = self.k as f64;
        match self.nodes {
            NodeRule::Endpoint => (1..self.k).map(|i| i as f64 / k).collect(),
            NodeRule::Midpoint => (1..=self.k).map(|i| (i as f64 - 0.5) / k).collect(),
        }
    }

    /// Standard normal quantiles at the node levels.
    pub fn normal_nodes(&self) -> Vec<f64> {
        self.levels().into_iter().map(normal_quantile).collect()
    }
}

/// Law of the linear predictor whose quantiles feed the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileSource {
    StandardNormalShifted { beta0: f64, w: f64 },
    /// Mixture over design rows: row `i` gives
    /// `Normal(beta0, W (sum_j phi_j x_ij^2 + sum_k phi_{p+k}))`.
    EmpiricalMixture { rows: Vec<Vec<f64>>, beta0: f64, w: f64, phi: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub sig2: f64,
}

impl QmcMoments {
    pub fn r2(&self) -> Result<f64> {
        let v = (self.mu2 - self.mu1 * self.mu1).max(0.0);
        let den = v + self.sig2;
        if den <= 0.0 {
            return Err(R2d2Error::DegenerateModel);
        }
        Ok(v / den)
    }
}

fn moments_at(family: &ModelFamily, etas: impl Iterator<Item = f64>) -> QmcMoments {
    let (mut s1, mut s2, mut sv, mut n) = (0.0, 0.0, 0.0, 0usize);
    for eta in etas {
        let m = family.mean(eta);
        s1 += m;
        s2 += m * m;
        sv += family.variance(eta);
        n += 1;
    }
    let n = n as f64;
    QmcMoments { mu1: s1 / n, mu2: s2 / n, sig2: sv / n }
}

fn mixture_scales(rows: &[Vec<f64>], w: f64, phi: &[f64]) -> Result<Vec<f64>> {
    if !(w >= 0.0) {
        return Err(invalid("W must be nonnegative"));
    }
    let total: f64 = phi.iter().sum();
    if phi.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-8 {
        return Err(invalid("phi must lie on the simplex"));
    }
    rows.iter()
        .map(|row| {
            if row.len() > phi.len() || row.iter().any(|x| !x.is_finite()) {
                return Err(invalid("design row longer than phi or not finite"));
            }
            let fixed: f64 = row.iter().zip(phi).map(|(x, p)| p * x * x).sum();
            let random: f64 = phi[row.len()..].iter().sum();
            Ok((w * (fixed + random)).sqrt())
        })
        .collect()
}

/// Quantile of the normal scale mixture at level `p`.
fn mixture_quantile(beta0: f64, scales: &[f64], p: f64, start: f64) -> f64 {
    let n = scales.len() as f64;
    let cdf = |x: f64| {
        scales
            .iter()
            .map(|&s| if s > 0.0 { normal_cdf((x - beta0) / s) } else if x >= beta0 { 1.0 } else { 0.0 })
            .sum::<f64>()
            / n
    };
    let dens = |x: f64| {
        scales.iter().filter(|s| **s > 0.0).map(|&s| normal_pdf((x - beta0) / s) / s).sum::<f64>() / n
    };
    let smax = scales.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return beta0;
    }
    let z = normal_quantile(p).abs() + 1.0;
    let (mut lo, mut hi) = (beta0 - z * smax, beta0 + z * smax);
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let g = cdf(x) - p;
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = dens(x);
        let mut next = if d > 0.0 { x - g / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-13 * (1.0 + x.abs()) || hi - lo <= 1e-13 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Node values of the linear predictor for `source`.
pub fn source_nodes(source: &QuantileSource, cfg: &QmcConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    match source {
        QuantileSource::StandardNormalShifted { beta0, w } => {
            if !(*w >= 0.0) {
                return Err(invalid("W must be nonnegative"));
            }
            let sd = w.sqrt();
            Ok(cfg.normal_nodes().into_iter().map(|z| beta0 + sd * z).collect())
        }
        QuantileSource::EmpiricalMixture { rows, beta0, w, phi } => {
            if rows.is_empty() {
                return Err(invalid("empirical mixture needs at least one row"));
            }
            let scales = mixture_scales(rows, *w, phi)?;
            let mut prev = *beta0;
            Ok(cfg
                .levels()
                .into_iter()
                .map(|p| {
                    prev = mixture_quantile(*beta0, &scales, p, prev);
                    prev
                })
                .collect())
        }
    }
}

pub fn qmc_moments(family: &ModelFamily, source: &QuantileSource, cfg: &QmcConfig) -> Result<QmcMoments> {
    let nodes = source_nodes(source, cfg)?;
    Ok(moments_at(family, nodes.into_iter()))
}

pub fn qmc_r2(family: &ModelFamily, source: &QuantileSource, cfg: &QmcConfig) -> Result<f64> {
    qmc_moments(family, source, cfg)?.r2()
}

/// Grid-approximated R²(W) for a normal linear predictor, with the standard
/// normal nodes computed once.
#[derive(Debug, Clone)]
pub struct QmcCurve {
    family: ModelFamily,
    beta0: f64,
    cfg: QmcConfig,
    z: Vec<f64>,
}

impl QmcCurve {
    pub fn new(family: ModelFamily, beta0: f64, cfg: QmcConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { family, beta0, cfg, z: cfg.normal_nodes() })
    }

    pub fn config(&self) -> &QmcConfig {
        &self.cfg
    }

    pub fn r2(&self, w: f64) -> f64 {
        let sd = w.max(0.0).sqrt();
        let m = moments_at(&self.family, self.z.iter().map(|z| self.beta0 + sd * z));
        m.r2().unwrap_or(f64::NAN)
    }

    /// Central-difference derivative with step `fd_step_scale * max(w, 1)`,
    /// one-sided near zero.
    pub fn r2_derivative(&self, w: f64) -> f64 {
        let h = self.cfg.fd_step_scale * w.max(1.0);
        let lo = (w - h).max(0.0);
        let hi = w + h;
        (self.r2(hi) - self.r2(lo)) / (hi - lo)
    }

    /// Density of W when R² on `[spec.r2_min, spec.r2_max]` follows `spec`.
    pub fn pdf(&self, spec: &R2PriorSpec, w: f64) -> f64 {
        if w < 0.0 {
            return 0.0;
        }
        let r = self.r2(w);
        let d = self.r2_derivative(w);
        if d < 0.0 {
            log::warn!("numerical dR2/dW is negative ({d:e}) at W={w}");
        }
        if !(r > spec.r2_min && r < spec.r2_max) {
            return 0.0;
        }
        spec.pdf(r).unwrap_or(0.0) * d.abs()
    }

    /// W with `R²(W) = r2`, by bracketed bisection on the monotone curve
    /// (geometric once the bracket leaves `[0, 1]`).
    pub fn invert(&self, r2: f64) -> Result<f64> {
        if r2 <= self.r2(0.0) {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while self.r2(hi) < r2 {
            lo = hi;
            hi *= 10.0;
            if hi > 1e30 {
                return Err(R2d2Error::NumericFailure(format!("cannot bracket R2 target {r2}")));
            }
        }
        for _ in 0..200 {
            let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
            if hi - lo <= 1e-12 * hi || mid <= lo || mid >= hi {
                break;
            }
            if self.r2(mid) < r2 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn qmc_pdf(family: &ModelFamily, beta0: f64, spec: &R2PriorSpec, cfg: &QmcConfig, w: f64) -> Result<f64> {
    let curve = QmcCurve::new(*family, beta0, *cfg)?;
    Ok(curve.pdf(spec, w))
}

/// `s²(beta0) = sigma²(beta0) / mu'(beta0)²`.
pub fn linear_s2(family: &ModelFamily, beta0: f64) -> Result<f64> {
    let d = family.mean_derivative(beta0);
    if !(d.abs() > f64::MIN_POSITIVE) || !d.is_finite() {
        return Err(R2d2Error::FlatLink(beta0));
    }
    let s2 = family.variance(beta0) / (d * d);
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(R2d2Error::FlatLink(beta0));
    }
    Ok(s2)
}

/// R² under the first-order expansion of the mean function.
pub fn linear_r2(family: &ModelFamily, beta0: f64, w: f64) -> Result<f64> {
    let s2 = linear_s2(family, beta0)?;
    Ok(w / (w + s2))
}

/// The linear-approximation prior GBP(a, b, 1, s²(beta0)).
pub fn linear_prior(family: &ModelFamily, beta0: f64, a: f64, b: f64) -> Result<GbpParams> {
    GbpParams::new(a, b, 1.0, linear_s2(family, beta0)?)
}
