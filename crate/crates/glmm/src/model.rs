//! Model specification and assembly.

use crate::data::{max_distance, spatial_distances, Dataset};
use crate::error::{GlmmError, Result};
use crate::likelihood::Likelihood;
use nalgebra::DMatrix;
use r2d2_core::{DirichletSpec, GbpParams, ModelFamily, R2PriorSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Correlation {
    Iid,
    SpatialExponential { coords: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub levels: usize,
    pub correlation: Correlation,
}

impl GroupSpec {
    pub fn iid(levels: usize) -> Self {
        Self { levels, correlation: Correlation::Iid }
    }
    pub fn spatial(coords: Vec<[f64; 2]>) -> Self {
        Self { levels: coords.len(), correlation: Correlation::SpatialExponential { coords } }
    }
}

/// Whether each fixed effect gets its own Dirichlet share or the whole
/// fixed block shares one, split evenly over the `p` coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectGrouping {
    PerCoefficient,
    SharedFixedBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmSpec {
    /// Family and the starting value of its dispersion parameter.
    pub family: ModelFamily,
    pub p: usize,
    pub groups: Vec<GroupSpec>,
    pub offsets: Option<Vec<f64>>,
    pub effect_grouping: EffectGrouping,
}

/// Prior on the variance structure.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorChoice {
    /// `W ~ gbp`, `phi ~ xi`. For the Gaussian model `gbp` is the law of
    /// `W / sigma²`, so GBP(a, b, 1, 1) there is the exact R2D2 prior.
    R2d2 { spec: R2PriorSpec, gbp: GbpParams, xi: DirichletSpec },
    /// Inverse-gamma random-effect variances, fixed normal fixed effects.
    Vague { a0: f64, b0: f64, fixed_var: f64 },
    /// Exponential prior on random-effect standard deviations.
    Pc { lambda0: f64, fixed_var: f64 },
    /// Half-Cauchy global and local scales; fixed effects only.
    Horseshoe { scale: f64 },
}

impl PriorChoice {
    pub fn vague() -> Self {
        PriorChoice::Vague { a0: 0.5, b0: 0.0005, fixed_var: 100.0 }
    }
    /// Rate with `P(sigma_u > 0.968) = 0.01`.
    pub fn pc() -> Self {
        PriorChoice::Pc { lambda0: -(0.01f64).ln() / 0.968, fixed_var: 100.0 }
    }
    pub fn horseshoe() -> Self {
        PriorChoice::Horseshoe { scale: 1.0 }
    }

    pub fn label(&self) -> String {
        match self {
            PriorChoice::R2d2 { spec, .. } => format!("beta({},{})", spec.a, spec.b),
            PriorChoice::Vague { .. } => "vague".into(),
            PriorChoice::Pc { .. } => "pc".into(),
            PriorChoice::Horseshoe { .. } => "horseshoe".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorChoice::R2d2 { .. } => true,
            PriorChoice::Vague { a0, b0, fixed_var } => a0 > 0.0 && b0 > 0.0 && fixed_var > 0.0,
            PriorChoice::Pc { lambda0, fixed_var } => lambda0 > 0.0 && fixed_var > 0.0,
            PriorChoice::Horseshoe { scale } => scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GlmmError::InvalidConfig(format!("prior parameters must be positive: {self:?}")))
        }
    }
}

/// Hyperparameters shared by every prior choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Intercept prior mean and variance.
    pub mu0: f64,
    pub tau0_sq: f64,
    /// Inverse-gamma prior on the Gaussian residual variance.
    pub sigma2_a0: f64,
    pub sigma2_b0: f64,
    /// Normal prior sd for the transformed dispersion: log(theta - 1) for
    /// NB1, log(theta) for Weibull. ZIP uses a uniform prior on theta.
    pub dispersion_sd: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { mu0: 0.0, tau0_sq: 3.0, sigma2_a0: 0.01, sigma2_b0: 0.01, dispersion_sd: 2.0 }
    }
}

/// One Dirichlet share of `W`: a set of fixed effects or a grouping factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    /// Fixed effects `js`, each with variance `phi W / divisor`.
    Fixed { js: Vec<usize>, divisor: f64 },
    Group(usize),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: GlmmSpec,
    pub prior: PriorChoice,
    pub hyper: Hyper,
    pub data: Dataset,
    pub likelihood: Likelihood,
    /// Dirichlet components (R2D2 only; empty otherwise).
    pub components: Vec<Component>,
    /// Component index of each fixed effect and each group (R2D2 only).
    pub fixed_component: Vec<usize>,
    pub group_component: Vec<usize>,
    /// Pairwise distances for spatial groups.
    pub distances: Vec<Option<DMatrix<f64>>>,
    /// Upper end of the uniform prior on each spatial range: twice the
    /// largest pairwise distance.
    pub rho_upper: Vec<f64>,
}

impl Model {
    pub fn is_gaussian(&self) -> bool {
        self.likelihood == Likelihood::Gaussian
    }
    pub fn p(&self) -> usize {
        self.spec.p
    }
    pub fn n_groups(&self) -> usize {
        self.spec.groups.len()
    }
    pub fn is_spatial(&self, k: usize) -> bool {
        self.distances[k].is_some()
    }
}

pub fn build_model(spec: GlmmSpec, prior: PriorChoice, data: &Dataset, hyper: Hyper) -> Result<Model> {
    prior.validate()?;
    let n = data.n();
    if data.p() != spec.p {
        return Err(GlmmError::DimensionMismatch(format!("spec has p={}, data has {}", spec.p, data.p())));
    }
    if data.groups.len() != spec.groups.len() {
        return Err(GlmmError::DimensionMismatch(format!(
            "spec has {} grouping factors, data has {}",
            spec.groups.len(),
            data.groups.len()
        )));
    }
    let mut distances = Vec::new();
    let mut rho_upper = Vec::new();
    for (k, g) in spec.groups.iter().enumerate() {
        if g.levels < 1 {
            return Err(GlmmError::DimensionMismatch(format!("group {k} has no levels")));
        }
        if let Some(bad) = data.groups[k].iter().find(|&&l| l >= g.levels) {
            return Err(GlmmError::DimensionMismatch(format!("group {k} level {bad} exceeds {}", g.levels)));
        }
        match &g.correlation {
            Correlation::Iid => {
                distances.push(None);
                rho_upper.push(f64::NAN);
            }
            Correlation::SpatialExponential { coords } => {
                if coords.len() != g.levels {
                    return Err(GlmmError::DimensionMismatch(format!(
                        "group {k} has {} levels but {} coordinates",
                        g.levels,
                        coords.len()
                    )));
                }
                let d = spatial_distances(coords);
                let r = max_distance(&d);
                if !(r > 0.0) {
                    return Err(GlmmError::InvalidConfig(format!("group {k}: all locations coincide")));
                }
                rho_upper.push(2.0 * r);
                distances.push(Some(d));
            }
        }
    }
    let offsets = spec.offsets.clone().or_else(|| data.offsets.clone());
    if let Some(o) = &offsets {
        if o.len() != n {
            return Err(GlmmError::DimensionMismatch(format!("{} offsets for {n} rows", o.len())));
        }
    }
    let likelihood = Likelihood::for_family(spec.family.kind());
    if let Some(row) = data.y.iter().position(|&y| !likelihood.supports(y)) {
        return Err(GlmmError::InvalidResponse { row, value: data.y[row] });
    }
    let p = spec.p;
    let (mut components, mut fixed_component, mut group_component) = (Vec::new(), Vec::new(), Vec::new());
    match &prior {
        PriorChoice::R2d2 { xi, .. } => {
            match spec.effect_grouping {
                EffectGrouping::PerCoefficient => {
                    for j in 0..p {
                        fixed_component.push(components.len());
                        components.push(Component::Fixed { js: vec![j], divisor: 1.0 });
                    }
                }
                EffectGrouping::SharedFixedBlock if p > 0 => {
                    fixed_component = vec![0; p];
                    components.push(Component::Fixed { js: (0..p).collect(), divisor: p as f64 });
                }
                EffectGrouping::SharedFixedBlock => {}
            }
            for k in 0..spec.groups.len() {
                group_component.push(components.len());
                components.push(Component::Group(k));
            }
            if components.is_empty() {
                return Err(GlmmError::DimensionMismatch("the model has no effects to share W".into()));
            }
            if xi.len() != components.len() {
                return Err(GlmmError::DimensionMismatch(format!(
                    "Dirichlet has {} shares, the model has {} components",
                    xi.len(),
                    components.len()
                )));
            }
        }
        PriorChoice::Horseshoe { .. } => {
            if !spec.groups.is_empty() {
                return Err(GlmmError::UnsupportedCombination("horseshoe prior with random effects".into()));
            }
            if p == 0 {
                return Err(GlmmError::UnsupportedCombination("horseshoe prior without fixed effects".into()));
            }
        }
        PriorChoice::Vague { .. } | PriorChoice::Pc { .. } => {}
    }
    let data = Dataset { offsets, ..data.clone() };
    Ok(Model {
        spec: GlmmSpec { offsets: data.offsets.clone(), ..spec },
        prior,
        hyper,
        data,
        likelihood,
        components,
        fixed_component,
        group_component,
        distances,
        rho_upper,
    })
}
