//! Metropolis-within-Gibbs sampler.
//!
//! Gaussian models draw all location effects jointly from their normal full
//! conditional; other families use random-walk blocks (fixed effects, then
//! one block per grouping factor) whose proposal covariance is a scaled
//! inverse of the expected information plus the current prior precision,
//! so it follows the variance parameters. Each block is followed by an exact
//! intercept/random-effect shift that leaves the linear predictor unchanged.
//! Under R2D2 the pair `(W, phi)` moves by a log-W walk and a walk on the
//! additive log-ratios of `phi` with the effects held fixed, then by a log-W
//! walk and one walk per component variance `phi_k W` that rescale the
//! effects along with their variances.

use crate::adapt::{lower_cholesky, Adaptive};
use crate::data::exp_correlation;
use crate::error::{GlmmError, Result};
use crate::likelihood::{r2n_from_eta, Likelihood};
use crate::model::{Component, Model, PriorChoice};
use nalgebra::{DMatrix, DVector};
use r2d2_core::rng::{stream_rng, SeededRng};
use r2d2_core::special::{logistic, logit};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::collections::BTreeMap;
use std::time::Instant;

/// Parameters held at fixed values instead of sampled. `w` is always the
/// global variance itself, also for the Gaussian model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedValues {
    pub w: Option<f64>,
    pub phi: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub theta: Option<f64>,
    pub rho: Option<f64>,
    pub sigma2_u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    /// Total draws including burn-in.
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Acceptance targets for multivariate and scalar random-walk blocks.
    pub target_accept_block: f64,
    pub target_accept_scalar: f64,
    /// With `false` the chain samples the prior.
    pub likelihood: bool,
    pub fixed: FixedValues,
    /// Overrides twice the largest pairwise distance.
    pub rho_prior_upper: Option<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iters: 10_000,
            burn_in: 5_000,
            seed: 0,
            target_accept_block: 0.3,
            target_accept_scalar: 0.44,
            likelihood: true,
            fixed: FixedValues::default(),
            rho_prior_upper: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iters {
            return Err(GlmmError::InvalidConfig(format!(
                "burn_in ({}) must be smaller than iters ({})",
                self.burn_in, self.iters
            )));
        }
        for t in [self.target_accept_block, self.target_accept_scalar] {
            if !(t > 0.0 && t < 1.0) {
                return Err(GlmmError::InvalidConfig(format!("acceptance target {t} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Retained draws, one entry per draw in every populated field. Fields that
/// do not apply to the model are empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosteriorSamples {
    pub prior_label: String,
    pub beta0: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub u: Vec<Vec<Vec<f64>>>,
    pub phi: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub theta: Vec<f64>,
    /// Spatial range per spatial grouping factor.
    pub rho: Vec<Vec<f64>>,
    /// Random-effect variance per grouping factor.
    pub sigma2_u: Vec<Vec<f64>>,
    pub r2n: Vec<f64>,
    /// Post-burn-in acceptance rate of every Metropolis block.
    pub acceptance: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.beta0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.beta0.is_empty()
    }

    /// Named scalar traces in trace-file order.
    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![("beta0".to_string(), self.beta0.clone())];
        let pick = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
        if let Some(first) = self.beta.first() {
            for j in 0..first.len() {
                out.push((format!("beta[{}]", j + 1), pick(&self.beta, j)));
            }
        }
        if let Some(first) = self.u.first() {
            for (k, g) in first.iter().enumerate() {
                for l in 0..g.len() {
                    out.push((format!("u[{}][{}]", k + 1, l + 1), self.u.iter().map(|d| d[k][l]).collect()));
                }
            }
        }
        if let Some(first) = self.phi.first() {
            for k in 0..first.len() {
                out.push((format!("phi[{}]", k + 1), pick(&self.phi, k)));
            }
        }
        if !self.w.is_empty() {
            out.push(("W".into(), self.w.clone()));
        }
        if let Some(first) = self.sigma2_u.first() {
            for k in 0..first.len() {
                out.push((format!("sigma2_u[{}]", k + 1), pick(&self.sigma2_u, k)));
            }
        }
        if !self.sigma2.is_empty() {
            out.push(("sigma2".into(), self.sigma2.clone()));
        }
        if !self.theta.is_empty() {
            out.push(("theta".into(), self.theta.clone()));
        }
        if let Some(first) = self.rho.first() {
            if first.len() == 1 {
                out.push(("rho".into(), pick(&self.rho, 0)));
            } else {
                for k in 0..first.len() {
                    out.push((format!("rho[{}]", k + 1), pick(&self.rho, k)));
                }
            }
        }
        out.push(("r2n".into(), self.r2n.clone()));
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.columns().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Posterior mean of the fixed-effect vector.
    pub fn beta_mean(&self) -> Vec<f64> {
        let p = self.beta.first().map_or(0, |b| b.len());
        (0..p).map(|j| self.beta.iter().map(|b| b[j]).sum::<f64>() / self.len() as f64).collect()
    }
}

struct GroupCache {
    /// Lower Cholesky factor of the correlation matrix (spatial only).
    chol: Option<DMatrix<f64>>,
    cinv: Option<DMatrix<f64>>,
    cinv_one: Option<DVector<f64>>,
    logdet: f64,
}

impl GroupCache {
    fn iid() -> Self {
        Self { chol: None, cinv: None, cinv_one: None, logdet: 0.0 }
    }

    fn spatial(d: &DMatrix<f64>, rho: f64) -> Option<Self> {
        let c = exp_correlation(d, rho);
        let ch = c.cholesky()?;
        let l = ch.l();
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !logdet.is_finite() {
            return None;
        }
        let cinv = ch.inverse();
        let cinv_one = cinv.column_sum();
        Some(Self { chol: Some(l), cinv: Some(cinv), cinv_one: Some(cinv_one), logdet })
    }

    fn quad(&self, u: &[f64]) -> f64 {
        match &self.chol {
            None => u.iter().map(|v| v * v).sum(),
            Some(l) => {
                let v = DVector::from_column_slice(u);
                match l.solve_lower_triangular(&v) {
                    Some(z) => z.norm_squared(),
                    None => f64::INFINITY,
                }
            }
        }
    }

    /// `(1' C^-1 1, 1' C^-1 u)`.
    fn ones_terms(&self, u: &[f64]) -> (f64, f64) {
        match &self.cinv_one {
            None => (u.len() as f64, u.iter().sum()),
            Some(c1) => (c1.sum(), c1.iter().zip(u).map(|(a, b)| a * b).sum()),
        }
    }
}

struct Chain<'m> {
    m: &'m Model,
    cfg: &'m McmcConfig,
    rng: SeededRng,
    beta0: f64,
    beta: Vec<f64>,
    u: Vec<Vec<f64>>,
    eta: Vec<f64>,
    ll: f64,
    /// R2D2 global variance; for the Gaussian model this is `W / sigma²`.
    w: f64,
    phi: Vec<f64>,
    sigma2_u: Vec<f64>,
    hs_lambda2: Vec<f64>,
    hs_nu: Vec<f64>,
    hs_tau2: f64,
    hs_xi: f64,
    rho: Vec<f64>,
    rho_upper: Vec<f64>,
    caches: Vec<GroupCache>,
    sigma2: f64,
    theta: f64,
    // Gaussian joint design [1, X, G_1, ...]
    z: Option<DMatrix<f64>>,
    ztz: Option<DMatrix<f64>>,
    zty: Option<DVector<f64>>,
    fisher_fixed: DMatrix<f64>,
    fisher_groups: Vec<Vec<f64>>,
    ad_fixed: Option<Adaptive>,
    ad_groups: Vec<Option<Adaptive>>,
    ad_logw: Option<Adaptive>,
    ad_logw_nc: Option<Adaptive>,
    ad_alr: Option<Adaptive>,
    ad_lambda: Vec<Adaptive>,
    ad_pc: Vec<Adaptive>,
    ad_rho: Vec<Option<Adaptive>>,
    ad_theta: Option<Adaptive>,
}

fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate").sample(rng);
    1.0 / g
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    // NaN ratios reject
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

impl<'m> Chain<'m> {
    fn new(m: &'m Model, cfg: &'m McmcConfig) -> Result<Self> {
        let n = m.data.n();
        let p = m.p();
        let q = m.n_groups();
        let lik = m.likelihood;
        let fx = &cfg.fixed;
        let gaussian = m.is_gaussian();

        let sigma2 = match fx.sigma2 {
            Some(s) if s > 0.0 => s,
            Some(s) => return Err(GlmmError::InvalidConfig(format!("fixed sigma2 {s} must be positive"))),
            None => {
                let my = m.data.y.iter().sum::<f64>() / n.max(1) as f64;
                let vy = m.data.y.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
                if gaussian && cfg.likelihood && vy > 0.0 {
                    0.5 * vy
                } else {
                    1.0
                }
            }
        };
        let theta = {
            let start = fx.theta.or(m.spec.family.theta()).unwrap_or(1.0);
            match lik {
                Likelihood::NegBinomial if fx.theta.is_none() => start.max(1.0 + 1e-3),
                Likelihood::ZeroInflatedPoisson if fx.theta.is_none() => start.clamp(0.01, 0.99),
                _ => start,
            }
        };
        let beta0 = if cfg.likelihood {
            let my = m.data.y.iter().sum::<f64>() / n.max(1) as f64;
            let guard = match lik {
                Likelihood::Bernoulli => my.clamp(0.02, 0.98),
                Likelihood::Gaussian => my,
                _ => my.max(0.1),
            };
            lik.family(if gaussian { sigma2 } else { theta }).link(guard).unwrap_or(m.hyper.mu0)
        } else {
            m.hyper.mu0
        };
        let levels: Vec<usize> = m.spec.groups.iter().map(|g| g.levels).collect();

        let (mut w, mut phi) = (f64::NAN, Vec::new());
        if let PriorChoice::R2d2 { gbp, xi, .. } = &m.prior {
            w = match fx.w {
                Some(wv) if gaussian && fx.sigma2.is_none() => {
                    return Err(GlmmError::InvalidConfig(format!(
                        "fixing W={wv} in the Gaussian model requires fixing sigma2"
                    )))
                }
                Some(wv) if gaussian => wv / sigma2,
                Some(wv) => wv,
                None => gbp.quantile(0.5),
            };
            phi = match &fx.phi {
                Some(v) => {
                    if v.len() != m.components.len() {
                        return Err(GlmmError::DimensionMismatch("fixed phi has the wrong length".into()));
                    }
                    v.clone()
                }
                None => {
                    let s: f64 = xi.xi().iter().sum();
                    xi.xi().iter().map(|x| x / s).collect()
                }
            };
        }
        let sigma2_u = match &fx.sigma2_u {
            Some(v) if v.len() == q => v.clone(),
            Some(_) => return Err(GlmmError::DimensionMismatch("fixed sigma2_u has the wrong length".into())),
            None => vec![0.5; q],
        };

        let mut rho_upper = m.rho_upper.clone();
        if let Some(r) = cfg.rho_prior_upper {
            for (k, ru) in rho_upper.iter_mut().enumerate() {
                if m.is_spatial(k) {
                    *ru = r;
                }
            }
        }
        let mut rho = vec![f64::NAN; q];
        let mut caches = Vec::with_capacity(q);
        for k in 0..q {
            match &m.distances[k] {
                None => caches.push(GroupCache::iid()),
                Some(d) => {
                    rho[k] = fx.rho.unwrap_or(0.25 * rho_upper[k]);
                    let c = GroupCache::spatial(d, rho[k]).ok_or_else(|| {
                        GlmmError::InvalidConfig(format!("correlation of group {k} is singular at rho={}", rho[k]))
                    })?;
                    caches.push(c);
                }
            }
        }

        let (z, ztz, zty) = if gaussian {
            let dim = 1 + p + levels.iter().sum::<usize>();
            let mut z = DMatrix::zeros(n, dim);
            for i in 0..n {
                z[(i, 0)] = 1.0;
                for j in 0..p {
                    z[(i, 1 + j)] = m.data.x[(i, j)];
                }
                let mut off = 1 + p;
                for k in 0..q {
                    z[(i, off + m.data.groups[k][i])] = 1.0;
                    off += levels[k];
                }
            }
            let resid = DVector::from_fn(n, |i, _| m.data.y[i] - m.data.offset(i));
            let ztz = z.transpose() * &z;
            let zty = z.transpose() * resid;
            (Some(z), Some(ztz), Some(zty))
        } else {
            (None, None, None)
        };

        let hs_p = if matches!(m.prior, PriorChoice::Horseshoe { .. }) { p } else { 0 };
        let mut chain = Chain {
            m,
            cfg,
            rng: stream_rng(cfg.seed, 1),
            beta0,
            beta: vec![0.0; p],
            u: levels.iter().map(|&l| vec![0.0; l]).collect(),
            eta: vec![0.0; n],
            ll: 0.0,
            w,
            phi,
            sigma2_u,
            hs_lambda2: vec![1.0; hs_p],
            hs_nu: vec![1.0; hs_p],
            hs_tau2: 1.0,
            hs_xi: 1.0,
            rho,
            rho_upper,
            caches,
            sigma2,
            theta,
            z,
            ztz,
            zty,
            fisher_fixed: DMatrix::zeros(0, 0),
            fisher_groups: Vec::new(),
            ad_fixed: None,
            ad_groups: Vec::new(),
            ad_logw: None,
            ad_logw_nc: None,
            ad_alr: None,
            ad_lambda: Vec::new(),
            ad_pc: Vec::new(),
            ad_rho: Vec::new(),
            ad_theta: None,
        };
        chain.recompute_eta();
        chain.ll = chain.loglik(&chain.eta, chain.disp());
        chain.init_proposals();
        Ok(chain)
    }

    fn init_proposals(&mut self) {
        let m = self.m;
        let (tb, ts) = (self.cfg.target_accept_block, self.cfg.target_accept_scalar);
        let p = m.p();
        if !m.is_gaussian() {
            self.refresh_fisher();
            let dim = 1 + p;
            self.ad_fixed = Some(Adaptive::new("fixed", DMatrix::identity(dim, dim), if dim > 1 { tb } else { ts }));
            for k in 0..m.n_groups() {
                let l = m.spec.groups[k].levels;
                self.ad_groups.push(Some(Adaptive::new(
                    format!("u[{}]", k + 1),
                    DMatrix::identity(l, l),
                    if l > 1 { tb } else { ts },
                )));
            }
        }
        if let PriorChoice::R2d2 { .. } = m.prior {
            let k = m.components.len();
            if self.cfg.fixed.w.is_none() {
                self.ad_logw = Some(Adaptive::scalar("log_w", 0.5, ts));
                self.ad_logw_nc = Some(Adaptive::scalar("log_w_rescaled", 0.5, ts));
            }
            if self.cfg.fixed.phi.is_none() && k >= 2 {
                self.ad_alr = Some(Adaptive::new("phi_alr", DMatrix::identity(k - 1, k - 1) * 0.25, if k > 2 { tb } else { ts }));
                if self.cfg.fixed.w.is_none() {
                    self.ad_lambda = (0..k).map(|c| Adaptive::scalar(format!("lambda[{}]", c + 1), 0.5, ts)).collect();
                }
            }
        }
        if let PriorChoice::Pc { .. } = m.prior {
            if self.cfg.fixed.sigma2_u.is_none() {
                self.ad_pc = (0..m.n_groups()).map(|k| Adaptive::scalar(format!("log_sigma_u[{}]", k + 1), 0.3, ts)).collect();
            }
        }
        self.ad_rho = (0..m.n_groups())
            .map(|k| {
                (m.is_spatial(k) && self.cfg.fixed.rho.is_none())
                    .then(|| Adaptive::scalar(format!("rho[{}]", k + 1), 0.5, ts))
            })
            .collect();
        if m.likelihood.has_theta() && self.cfg.fixed.theta.is_none() {
            self.ad_theta = Some(Adaptive::scalar("theta", 0.3, ts));
        }
    }

    /// Expected information of `(beta0, beta)` and of each group's levels
    /// at the current linear predictor. Used only to shape proposals, and
    /// only updated during burn-in.
    fn refresh_fisher(&mut self) {
        let m = self.m;
        let p = m.p();
        let fam = m.likelihood.family(self.disp());
        let wts: Vec<f64> = self
            .eta
            .iter()
            .map(|&e| {
                if !self.cfg.likelihood {
                    return 0.0;
                }
                let d = fam.mean_derivative(e);
                let r = d * d / fam.variance(e);
                if r.is_finite() {
                    r
                } else {
                    0.0
                }
            })
            .collect();
        let dim = 1 + p;
        let mut info = DMatrix::zeros(dim, dim);
        let mut row = vec![0.0; dim];
        for (i, &wi) in wts.iter().enumerate() {
            row[0] = 1.0;
            for j in 0..p {
                row[1 + j] = m.data.x[(i, j)];
            }
            for a in 0..dim {
                for b in a..dim {
                    info[(a, b)] += wi * row[a] * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        self.fisher_fixed = info;
        self.fisher_groups = (0..m.n_groups())
            .map(|k| {
                let mut g = vec![0.0; m.spec.groups[k].levels];
                for (i, &wi) in wts.iter().enumerate() {
                    g[m.data.groups[k][i]] += wi;
                }
                g
            })
            .collect();
    }

    fn disp(&self) -> f64 {
        if self.m.is_gaussian() {
            self.sigma2
        } else {
            self.theta
        }
    }

    fn is_r2d2(&self) -> bool {
        matches!(self.m.prior, PriorChoice::R2d2 { .. })
    }

    /// Multiplier turning the sampled R2D2 variance into an effect variance.
    fn kappa(&self) -> f64 {
        if self.m.is_gaussian() {
            self.sigma2
        } else {
            1.0
        }
    }

    fn fixed_var(&self, j: usize) -> f64 {
        match &self.m.prior {
            PriorChoice::R2d2 { .. } => {
                let c = self.m.fixed_component[j];
                let div = match &self.m.components[c] {
                    Component::Fixed { divisor, .. } => *divisor,
                    Component::Group(_) => 1.0,
                };
                self.phi[c] * self.kappa() * self.w / div
            }
            PriorChoice::Vague { fixed_var, .. } | PriorChoice::Pc { fixed_var, .. } => *fixed_var,
            PriorChoice::Horseshoe { .. } => self.hs_lambda2[j] * self.hs_tau2,
        }
    }

    fn group_var(&self, k: usize) -> f64 {
        match &self.m.prior {
            PriorChoice::R2d2 { .. } => self.phi[self.m.group_component[k]] * self.kappa() * self.w,
            _ => self.sigma2_u[k],
        }
    }

    fn recompute_eta(&mut self) {
        let m = self.m;
        for i in 0..m.data.n() {
            let mut e = self.beta0 + m.data.offset(i);
            for j in 0..m.p() {
                e += m.data.x[(i, j)] * self.beta[j];
            }
            for k in 0..m.n_groups() {
                e += self.u[k][m.data.groups[k][i]];
            }
            self.eta[i] = e;
        }
    }

    fn loglik(&self, eta: &[f64], disp: f64) -> f64 {
        if !self.cfg.likelihood {
            return 0.0;
        }
        let lik = self.m.likelihood;
        self.m.data.y.iter().zip(eta).map(|(&y, &e)| lik.log_density(y, e, disp)).sum()
    }

    // ---- location effects ----

    fn gibbs_gaussian_effects(&mut self) -> Result<()> {
        let m = self.m;
        let (p, q) = (m.p(), m.n_groups());
        let ztz = self.ztz.as_ref().expect("gaussian design");
        let dim = ztz.nrows();
        let mut a = if self.cfg.likelihood { ztz / self.sigma2 } else { DMatrix::zeros(dim, dim) };
        let mut b = if self.cfg.likelihood {
            self.zty.as_ref().expect("gaussian design") / self.sigma2
        } else {
            DVector::zeros(dim)
        };
        a[(0, 0)] += 1.0 / m.hyper.tau0_sq;
        b[0] += m.hyper.mu0 / m.hyper.tau0_sq;
        for j in 0..p {
            a[(1 + j, 1 + j)] += 1.0 / self.fixed_var(j);
        }
        let mut off = 1 + p;
        for k in 0..q {
            let l = m.spec.groups[k].levels;
            let v = self.group_var(k);
            match &self.caches[k].cinv {
                None => {
                    for i in 0..l {
                        a[(off + i, off + i)] += 1.0 / v;
                    }
                }
                Some(ci) => {
                    let mut blk = a.view_mut((off, off), (l, l));
                    blk += ci / v;
                }
            }
            off += l;
        }
        let ch = a.cholesky().ok_or_else(|| GlmmError::ChainDiverged { draw: 0, block: "gaussian effects".into() })?;
        let mean = ch.solve(&b);
        let zv = DVector::from_fn(dim, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let dev = ch
            .l()
            .transpose()
            .solve_upper_triangular(&zv)
            .ok_or_else(|| GlmmError::ChainDiverged { draw: 0, block: "gaussian effects".into() })?;
        let draw = mean + dev;
        self.beta0 = draw[0];
        for j in 0..p {
            self.beta[j] = draw[1 + j];
        }
        let mut off = 1 + p;
        for k in 0..q {
            let l = m.spec.groups[k].levels;
            for i in 0..l {
                self.u[k][i] = draw[off + i];
            }
            off += l;
        }
        let fitted = self.z.as_ref().expect("gaussian design") * draw;
        for i in 0..m.data.n() {
            self.eta[i] = fitted[i] + m.data.offset(i);
        }
        self.ll = self.loglik(&self.eta, self.disp());
        Ok(())
    }

    fn fixed_log_prior(&self, b0: f64, beta: &[f64]) -> f64 {
        let h = &self.m.hyper;
        let mut lp = -0.5 * (b0 - h.mu0).powi(2) / h.tau0_sq;
        for (j, b) in beta.iter().enumerate() {
            lp -= 0.5 * b * b / self.fixed_var(j);
        }
        lp
    }

    fn mh_fixed(&mut self, t: usize) {
        let m = self.m;
        let p = m.p();
        let mut ad = self.ad_fixed.take().expect("fixed-effect proposal");
        let x: Vec<f64> = std::iter::once(self.beta0).chain(self.beta.iter().copied()).collect();
        let mut h = self.fisher_fixed.clone();
        h[(0, 0)] += 1.0 / m.hyper.tau0_sq;
        for j in 0..p {
            h[(1 + j, 1 + j)] += 1.0 / self.fixed_var(j);
        }
        let y = ad.propose_precision(&x, &lower_cholesky(&h), &mut self.rng);
        let d0 = y[0] - x[0];
        let db: Vec<f64> = (0..p).map(|j| y[1 + j] - x[1 + j]).collect();
        let eta_new: Vec<f64> = (0..m.data.n())
            .map(|i| {
                let mut e = self.eta[i] + d0;
                for (j, d) in db.iter().enumerate() {
                    e += m.data.x[(i, j)] * d;
                }
                e
            })
            .collect();
        let ll_new = self.loglik(&eta_new, self.disp());
        let ratio = ll_new + self.fixed_log_prior(y[0], &y[1..]) - self.ll - self.fixed_log_prior(x[0], &x[1..]);
        let ok = accept(ratio, &mut self.rng);
        if ok {
            self.beta0 = y[0];
            self.beta.copy_from_slice(&y[1..]);
            self.eta = eta_new;
            self.ll = ll_new;
        }
        ad.record(ok, t, self.cfg.burn_in);
        self.ad_fixed = Some(ad);
    }

    fn mh_group(&mut self, k: usize, t: usize) {
        let m = self.m;
        let mut ad = self.ad_groups[k].take().expect("group proposal");
        let v = self.group_var(k);
        let y = match &self.caches[k].cinv {
            None => {
                let l = self.u[k].len();
                let sd: Vec<f64> = (0..l).map(|i| (self.fisher_groups[k][i] + 1.0 / v).sqrt()).collect();
                let chol = DMatrix::from_diagonal(&DVector::from_vec(sd));
                ad.propose_precision(&self.u[k], &chol, &mut self.rng)
            }
            Some(ci) => {
                let mut h = ci / v;
                for i in 0..h.nrows() {
                    h[(i, i)] += self.fisher_groups[k][i];
                }
                ad.propose_precision(&self.u[k], &lower_cholesky(&h), &mut self.rng)
            }
        };
        let g = &m.data.groups[k];
        let eta_new: Vec<f64> = (0..m.data.n()).map(|i| self.eta[i] + y[g[i]] - self.u[k][g[i]]).collect();
        let ll_new = self.loglik(&eta_new, self.disp());
        let c = &self.caches[k];
        let ratio = ll_new - self.ll - 0.5 * (c.quad(&y) - c.quad(&self.u[k])) / v;
        let ok = accept(ratio, &mut self.rng);
        if ok {
            self.u[k] = y;
            self.eta = eta_new;
            self.ll = ll_new;
        }
        ad.record(ok, t, self.cfg.burn_in);
        self.ad_groups[k] = Some(ad);
    }

    /// Exact draw of `delta` in `beta0 + delta, u_k - delta`.
    fn shift_group(&mut self, k: usize) {
        let h = &self.m.hyper;
        let v = self.group_var(k);
        let (s1, s1u) = self.caches[k].ones_terms(&self.u[k]);
        let prec = 1.0 / h.tau0_sq + s1 / v;
        let mean = (-(self.beta0 - h.mu0) / h.tau0_sq + s1u / v) / prec;
        let z: f64 = self.rng.sample(StandardNormal);
        let delta = mean + z / prec.sqrt();
        self.beta0 += delta;
        for x in self.u[k].iter_mut() {
            *x -= delta;
        }
    }

    // ---- variance structure ----

    /// Effect dimension and scaled sum of squares per R2D2 component.
    fn component_stats(&self) -> Vec<(f64, f64)> {
        self.m
            .components
            .iter()
            .map(|c| match c {
                Component::Fixed { js, divisor } => {
                    (js.len() as f64, divisor * js.iter().map(|&j| self.beta[j] * self.beta[j]).sum::<f64>())
                }
                Component::Group(k) => (self.u[*k].len() as f64, self.caches[*k].quad(&self.u[*k])),
            })
            .collect()
    }

    fn effects_term(stats: &[(f64, f64)], phi: &[f64], wt: f64) -> f64 {
        stats
            .iter()
            .zip(phi)
            .map(|(&(dim, ss), &f)| {
                let v = f * wt;
                if dim == 0.0 {
                    0.0
                } else {
                    -0.5 * dim * v.ln() - 0.5 * ss / v
                }
            })
            .sum()
    }

    fn r2d2_moves(&mut self, t: usize) {
        let (gbp, xi) = match &self.m.prior {
            PriorChoice::R2d2 { gbp, xi, .. } => (*gbp, xi.xi().to_vec()),
            _ => unreachable!("called for R2D2 priors only"),
        };
        let burn = self.cfg.burn_in;
        let stats = self.component_stats();
        let kappa = self.kappa();
        let kk = self.phi.len();

        if let Some(mut ad) = self.ad_logw.take() {
            let target = |w: f64, phi: &[f64]| gbp.ln_pdf(w) + w.ln() + Self::effects_term(&stats, phi, kappa * w);
            let lw = ad.propose_scalar(self.w.ln(), &mut self.rng);
            let wn = lw.exp();
            let ok = accept(target(wn, &self.phi) - target(self.w, &self.phi), &mut self.rng);
            if ok {
                self.w = wn;
            }
            ad.record(ok, t, burn);
            if t < burn {
                ad.observe(&[self.w.ln()]);
            }
            self.ad_logw = Some(ad);
        }

        if let Some(mut ad) = self.ad_alr.take() {
            let target = |phi: &[f64], w: f64| -> f64 {
                let dir: f64 = phi.iter().zip(&xi).map(|(f, x)| (x - 1.0) * f.ln() + f.ln()).sum();
                dir + Self::effects_term(&stats, phi, kappa * w)
            };
            let last = self.phi[kk - 1];
            let z: Vec<f64> = self.phi[..kk - 1].iter().map(|f| (f / last).ln()).collect();
            let zn = ad.propose(&z, &mut self.rng);
            let mx = zn.iter().copied().fold(0.0, f64::max);
            let den: f64 = zn.iter().map(|v| (v - mx).exp()).sum::<f64>() + (-mx).exp();
            let mut phin: Vec<f64> = zn.iter().map(|v| (v - mx).exp() / den).collect();
            phin.push((-mx).exp() / den);
            let ok = phin.iter().all(|&f| f > 0.0) && accept(target(&phin, self.w) - target(&self.phi, self.w), &mut self.rng);
            if ok {
                self.phi = phin;
                self.normalize_phi();
            }
            ad.record(ok, t, burn);
            if t < burn {
                let last = self.phi[kk - 1];
                let cur: Vec<f64> = self.phi[..kk - 1].iter().map(|f| (f / last).ln()).collect();
                ad.observe(&cur);
            }
            self.ad_alr = Some(ad);
        }

        // non-centered moves: the effects of each component are rescaled
        // with its variance, so their prior contribution cancels
        let dir = |phi: &[f64]| -> f64 { phi.iter().zip(&xi).map(|(f, x)| (x - 1.0) * f.ln()).sum() };
        if let Some(mut ad) = self.ad_logw_nc.take() {
            let lw = self.w.ln();
            let lwn = ad.propose_scalar(lw, &mut self.rng);
            let extra = gbp.ln_pdf(lwn.exp()) + lwn - gbp.ln_pdf(self.w) - lw;
            let ok = self.rescale_move(lwn.exp(), self.phi.clone(), extra);
            ad.record(ok, t, burn);
            if t < burn {
                ad.observe(&[self.w.ln()]);
            }
            self.ad_logw_nc = Some(ad);
        }
        if !self.ad_lambda.is_empty() {
            let target = |w: f64, phi: &[f64]| -> f64 { gbp.ln_pdf(w) + dir(phi) - (kk as f64 - 1.0) * w.ln() };
            for c in 0..kk {
                let mut ad = std::mem::replace(&mut self.ad_lambda[c], Adaptive::scalar("", 1.0, 0.5));
                let lam = self.phi[c] * self.w;
                let lamn = ad.propose_scalar(lam.ln(), &mut self.rng).exp();
                let wn = self.w - lam + lamn;
                let phin: Vec<f64> =
                    (0..kk).map(|i| if i == c { lamn / wn } else { self.phi[i] * self.w / wn }).collect();
                let ok = wn > 0.0 && phin.iter().all(|&f| f > 0.0) && {
                    let extra = target(wn, &phin) + lamn.ln() - target(self.w, &self.phi) - lam.ln();
                    self.rescale_move(wn, phin, extra)
                };
                ad.record(ok, t, burn);
                if t < burn {
                    ad.observe(&[(self.phi[c] * self.w).ln()]);
                }
                self.ad_lambda[c] = ad;
            }
        }
    }

    /// Moves to `(w, phi)` while scaling every effect by the square root of
    /// its variance ratio. `extra` is the log-ratio of all terms other than
    /// the likelihood and the effect priors.
    fn rescale_move(&mut self, w: f64, phi: Vec<f64>, extra: f64) -> bool {
        let m = self.m;
        if !(w > 0.0 && w.is_finite()) {
            return false;
        }
        let scale: Vec<f64> = (0..phi.len()).map(|c| (phi[c] * w / (self.phi[c] * self.w)).sqrt()).collect();
        let beta: Vec<f64> = (0..m.p()).map(|j| self.beta[j] * scale[m.fixed_component[j]]).collect();
        let u: Vec<Vec<f64>> = (0..m.n_groups())
            .map(|k| self.u[k].iter().map(|v| v * scale[m.group_component[k]]).collect())
            .collect();
        let eta: Vec<f64> = (0..m.data.n())
            .map(|i| {
                let mut e = self.beta0 + m.data.offset(i);
                for (j, b) in beta.iter().enumerate() {
                    e += m.data.x[(i, j)] * b;
                }
                for (k, uk) in u.iter().enumerate() {
                    e += uk[m.data.groups[k][i]];
                }
                e
            })
            .collect();
        let ll = self.loglik(&eta, self.disp());
        if !accept(ll - self.ll + extra, &mut self.rng) {
            return false;
        }
        self.w = w;
        self.phi = phi;
        self.normalize_phi();
        self.beta = beta;
        self.u = u;
        self.eta = eta;
        self.ll = ll;
        true
    }

    fn normalize_phi(&mut self) {
        let s: f64 = self.phi.iter().sum();
        for f in self.phi.iter_mut() {
            *f /= s;
        }
    }

    fn vague_moves(&mut self, a0: f64, b0: f64) {
        if self.cfg.fixed.sigma2_u.is_some() {
            return;
        }
        for k in 0..self.m.n_groups() {
            let l = self.u[k].len() as f64;
            let qf = self.caches[k].quad(&self.u[k]);
            self.sigma2_u[k] = inv_gamma(a0 + 0.5 * l, b0 + 0.5 * qf, &mut self.rng);
        }
    }

    fn pc_moves(&mut self, lambda0: f64, t: usize) {
        for k in 0..self.ad_pc.len() {
            let l = self.u[k].len() as f64;
            let qf = self.caches[k].quad(&self.u[k]);
            // s = log sigma_u, sigma_u ~ Exp(lambda0)
            let target = |s: f64| -lambda0 * s.exp() + s - l * s - 0.5 * qf * (-2.0 * s).exp();
            let mut ad = std::mem::replace(&mut self.ad_pc[k], Adaptive::scalar("", 1.0, 0.5));
            let s = 0.5 * self.sigma2_u[k].ln();
            let sn = ad.propose_scalar(s, &mut self.rng);
            let ok = accept(target(sn) - target(s), &mut self.rng);
            if ok {
                self.sigma2_u[k] = (2.0 * sn).exp();
            }
            ad.record(ok, t, self.cfg.burn_in);
            if t < self.cfg.burn_in {
                ad.observe(&[0.5 * self.sigma2_u[k].ln()]);
            }
            self.ad_pc[k] = ad;
        }
    }

    fn horseshoe_moves(&mut self, scale: f64) {
        let p = self.m.p();
        let s2 = scale * scale;
        let mut ss = 0.0;
        for j in 0..p {
            let b2 = self.beta[j] * self.beta[j];
            self.hs_lambda2[j] = inv_gamma(1.0, 1.0 / self.hs_nu[j] + 0.5 * b2 / self.hs_tau2, &mut self.rng);
            self.hs_nu[j] = inv_gamma(1.0, 1.0 / s2 + 1.0 / self.hs_lambda2[j], &mut self.rng);
            ss += b2 / self.hs_lambda2[j];
        }
        self.hs_tau2 = inv_gamma(0.5 * (p as f64 + 1.0), 1.0 / self.hs_xi + 0.5 * ss, &mut self.rng);
        self.hs_xi = inv_gamma(1.0, 1.0 / s2 + 1.0 / self.hs_tau2, &mut self.rng);
    }

    fn rho_moves(&mut self, t: usize) {
        for k in 0..self.m.n_groups() {
            let Some(mut ad) = self.ad_rho[k].take() else { continue };
            let d = self.m.distances[k].as_ref().expect("spatial group");
            let upper = self.rho_upper[k];
            let v = self.group_var(k);
            let tc = logit(self.rho[k] / upper);
            let tn = ad.propose_scalar(tc, &mut self.rng);
            let rn = upper * logistic(tn);
            let jac = |t: f64| logistic(t).ln() + logistic(-t).ln();
            let cur = &self.caches[k];
            let cur_target = -0.5 * cur.logdet - 0.5 * cur.quad(&self.u[k]) / v + jac(tc);
            let mut ok = false;
            if rn > 0.0 {
                if let Some(nc) = GroupCache::spatial(d, rn) {
                    let new_target = -0.5 * nc.logdet - 0.5 * nc.quad(&self.u[k]) / v + jac(tn);
                    if accept(new_target - cur_target, &mut self.rng) {
                        self.rho[k] = rn;
                        self.caches[k] = nc;
                        ok = true;
                    }
                }
            }
            ad.record(ok, t, self.cfg.burn_in);
            if t < self.cfg.burn_in {
                ad.observe(&[logit(self.rho[k] / upper)]);
            }
            self.ad_rho[k] = Some(ad);
        }
    }

    fn gibbs_sigma2(&mut self) {
        if self.cfg.fixed.sigma2.is_some() {
            return;
        }
        let m = self.m;
        let h = &m.hyper;
        let mut shape = h.sigma2_a0;
        let mut rate = h.sigma2_b0;
        if self.cfg.likelihood {
            shape += 0.5 * m.data.n() as f64;
            rate += 0.5 * m.data.y.iter().zip(&self.eta).map(|(y, e)| (y - e) * (y - e)).sum::<f64>();
        }
        if self.is_r2d2() {
            // effect variances scale with sigma²
            for (&(dim, ss), &f) in self.component_stats().iter().zip(&self.phi) {
                shape += 0.5 * dim;
                rate += 0.5 * ss / (f * self.w);
            }
        }
        self.sigma2 = inv_gamma(shape, rate, &mut self.rng);
        self.ll = self.loglik(&self.eta, self.sigma2);
    }

    fn theta_move(&mut self, t: usize) {
        let Some(mut ad) = self.ad_theta.take() else { return };
        let sd = self.m.hyper.dispersion_sd;
        let lik = self.m.likelihood;
        // (transform, inverse, log prior density of the transformed value)
        let (tc, to_theta): (f64, fn(f64) -> f64) = match lik {
            Likelihood::NegBinomial => ((self.theta - 1.0).ln(), |s| 1.0 + s.exp()),
            Likelihood::ZeroInflatedPoisson => (logit(self.theta), logistic),
            _ => (self.theta.ln(), f64::exp),
        };
        let log_prior = |s: f64| match lik {
            Likelihood::ZeroInflatedPoisson => logistic(s).ln() + logistic(-s).ln(),
            _ => -0.5 * s * s / (sd * sd),
        };
        let tn = ad.propose_scalar(tc, &mut self.rng);
        let thn = to_theta(tn);
        let valid = match lik {
            Likelihood::NegBinomial => thn > 1.0,
            Likelihood::ZeroInflatedPoisson => thn > 0.0 && thn < 1.0,
            _ => thn > 0.0 && thn.is_finite(),
        };
        let mut ok = false;
        if valid {
            let ll_new = self.loglik(&self.eta, thn);
            if accept(ll_new + log_prior(tn) - self.ll - log_prior(tc), &mut self.rng) {
                self.theta = thn;
                self.ll = ll_new;
                ok = true;
            }
        }
        ad.record(ok, t, self.cfg.burn_in);
        if t < self.cfg.burn_in {
            let cur = match lik {
                Likelihood::NegBinomial => (self.theta - 1.0).ln(),
                Likelihood::ZeroInflatedPoisson => logit(self.theta),
                _ => self.theta.ln(),
            };
            ad.observe(&[cur]);
        }
        self.ad_theta = Some(ad);
    }

    fn all_adaptives(&mut self) -> Vec<&mut Adaptive> {
        let mut out: Vec<&mut Adaptive> = Vec::new();
        out.extend(self.ad_fixed.iter_mut());
        out.extend(self.ad_groups.iter_mut().flatten());
        out.extend(self.ad_logw.iter_mut());
        out.extend(self.ad_logw_nc.iter_mut());
        out.extend(self.ad_alr.iter_mut());
        out.extend(self.ad_lambda.iter_mut());
        out.extend(self.ad_pc.iter_mut());
        out.extend(self.ad_rho.iter_mut().flatten());
        out.extend(self.ad_theta.iter_mut());
        out
    }

    fn step(&mut self, t: usize) -> Result<()> {
        let m = self.m;
        if m.is_gaussian() {
            self.gibbs_gaussian_effects().map_err(|_| GlmmError::ChainDiverged {
                draw: t,
                block: "gaussian effects".into(),
            })?;
        } else {
            self.mh_fixed(t);
            for k in 0..m.n_groups() {
                self.mh_group(k, t);
                self.shift_group(k);
            }
            // the shifts leave eta unchanged up to rounding
            self.recompute_eta();
        }
        match m.prior {
            PriorChoice::R2d2 { .. } => self.r2d2_moves(t),
            PriorChoice::Vague { a0, b0, .. } => self.vague_moves(a0, b0),
            PriorChoice::Pc { lambda0, .. } => self.pc_moves(lambda0, t),
            PriorChoice::Horseshoe { scale } => self.horseshoe_moves(scale),
        }
        self.rho_moves(t);
        if m.is_gaussian() {
            self.gibbs_sigma2();
        }
        self.theta_move(t);
        let burn = self.cfg.burn_in;
        if t < burn && [burn / 8, burn / 4, burn / 2, 3 * burn / 4].contains(&(t + 1)) {
            for ad in self.all_adaptives() {
                ad.refresh();
            }
            if !m.is_gaussian() {
                self.refresh_fisher();
            }
        }
        let bad = if !self.ll.is_finite() {
            Some("likelihood")
        } else if !self.beta0.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            Some("fixed effects")
        } else if self.is_r2d2() && !(self.w > 0.0 && self.w.is_finite()) {
            Some("global variance")
        } else {
            None
        };
        if let Some(block) = bad {
            return Err(GlmmError::ChainDiverged { draw: t, block: block.into() });
        }
        Ok(())
    }

    fn record(&self, out: &mut PosteriorSamples) {
        let m = self.m;
        out.beta0.push(self.beta0);
        out.beta.push(self.beta.clone());
        out.u.push(self.u.clone());
        if self.is_r2d2() {
            out.phi.push(self.phi.clone());
            out.w.push(self.kappa() * self.w);
        }
        if m.n_groups() > 0 {
            out.sigma2_u.push((0..m.n_groups()).map(|k| self.group_var(k)).collect());
        }
        if m.is_gaussian() {
            out.sigma2.push(self.sigma2);
        }
        if m.likelihood.has_theta() {
            out.theta.push(self.theta);
        }
        let spatial: Vec<f64> = (0..m.n_groups()).filter(|&k| m.is_spatial(k)).map(|k| self.rho[k]).collect();
        if !spatial.is_empty() {
            out.rho.push(spatial);
        }
        out.r2n.push(r2n_from_eta(&m.likelihood.family(self.disp()), &self.eta));
    }
}

/// Runs one chain and returns the retained draws.
pub fn run_chain(model: &Model, cfg: &McmcConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let start = Instant::now();
    let mut chain = Chain::new(model, cfg)?;
    let mut out = PosteriorSamples { prior_label: model.prior.label(), ..Default::default() };
    for t in 0..cfg.iters {
        chain.step(t)?;
        if t >= cfg.burn_in {
            chain.record(&mut out);
        }
    }
    for ad in chain.all_adaptives() {
        out.acceptance.insert(ad.name.clone(), ad.rate());
    }
    out.wall_seconds = start.elapsed().as_secs_f64();
    log::debug!("chain finished in {:.2}s, acceptance {:?}", out.wall_seconds, out.acceptance);
    Ok(out)
}

/// Recomputes R²ₙ for every retained draw from the stored parameters.
pub fn posterior_r2n(samples: &PosteriorSamples, model: &Model) -> Vec<f64> {
    let d = &model.data;
    (0..samples.len())
        .map(|s| {
            let eta: Vec<f64> = (0..d.n())
                .map(|i| {
                    let mut e = samples.beta0[s] + d.offset(i);
                    for j in 0..d.p() {
                        e += d.x[(i, j)] * samples.beta[s][j];
                    }
                    for k in 0..d.groups.len() {
                        e += samples.u[s][k][d.groups[k][i]];
                    }
                    e
                })
                .collect();
            let disp = if model.is_gaussian() {
                samples.sigma2[s]
            } else if model.likelihood.has_theta() {
                samples.theta[s]
            } else {
                1.0
            };
            r2n_from_eta(&model.likelihood.family(disp), &eta)
        })
        .collect()
}
