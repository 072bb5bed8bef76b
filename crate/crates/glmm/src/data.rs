//! Model data and the spatial correlation helpers.

use crate::error::{GlmmError, Result};
use nalgebra::DMatrix;

/// Response, standardized covariates and group memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// `n x p`, standardized on load.
    pub x: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    /// One membership vector per grouping factor, 0-based levels.
    pub groups: Vec<Vec<usize>>,
    pub group_names: Vec<String>,
    /// Sorted labels per grouping factor; position is the level index.
    pub group_labels: Vec<Vec<String>>,
    /// Level coordinates for the spatial grouping factor, if any.
    pub coords: Option<Vec<[f64; 2]>>,
    /// Log-scale offsets added to the linear predictor.
    pub offsets: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset with default names and labels, checking dimensions.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(GlmmError::DimensionMismatch(format!("X has {} rows, y has {n}", x.nrows())));
        }
        let mut group_labels = Vec::with_capacity(groups.len());
        for (k, g) in groups.iter().enumerate() {
            if g.len() != n {
                return Err(GlmmError::DimensionMismatch(format!("group {k} has {} entries, y has {n}", g.len())));
            }
            let levels = g.iter().max().map_or(0, |m| m + 1);
            group_labels.push((1..=levels).map(|l| l.to_string()).collect());
        }
        Ok(Self {
            y,
            covariate_names: (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
            x,
            group_names: (1..=groups.len()).map(|k| format!("g{k}")).collect(),
            groups,
            group_labels,
            coords: None,
            offsets: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn levels(&self, k: usize) -> usize {
        self.group_labels[k].len()
    }

    /// Offset of row `i`, zero when the dataset has none.
    pub fn offset(&self, i: usize) -> f64 {
        self.offsets.as_ref().map_or(0.0, |o| o[i])
    }
}

/// Centers each column and scales it to unit sample variance (n - 1
/// denominator). Returns the original means and standard deviations.
pub fn standardize_columns(x: &mut DMatrix<f64>, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.nrows();
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut col = x.column_mut(j);
        let m = col.sum() / n as f64;
        col.add_scalar_mut(-m);
        let ss: f64 = col.iter().map(|v| v * v).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
            return Err(GlmmError::DegenerateColumn(name));
        }
        col /= sd;
        // a second centering pass removes the rounding left by the first
        let m2 = col.sum() / n as f64;
        col.add_scalar_mut(-m2);
        means.push(m);
        sds.push(sd);
    }
    Ok((means, sds))
}

/// Euclidean distances between all pairs of locations.
pub fn spatial_distances(coords: &[[f64; 2]]) -> DMatrix<f64> {
    let l = coords.len();
    DMatrix::from_fn(l, l, |i, j| {
        let (dx, dy) = (coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]);
        dx.hypot(dy)
    })
}

/// `C_ij = exp(-d_ij / rho)`.
pub fn exp_correlation(distances: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    distances.map(|d| if d == 0.0 { 1.0 } else { (-d / rho).exp() })
}

pub fn max_distance(distances: &DMatrix<f64>) -> f64 {
    distances.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_hits_unit_moments() {
        let mut x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 6.0]);
        standardize_columns(&mut x, &["a".into()]).unwrap();
        let m = x.column(0).sum() / 3.0;
        let v = x.column(0).iter().map(|v| (v - m).powi(2)).sum::<f64>() / 2.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let mut x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let err = standardize_columns(&mut x, &["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, GlmmError::DegenerateColumn(ref c) if c == "b"));
    }

    #[test]
    fn correlation_examples() {
        let d = spatial_distances(&[[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]]);
        assert_eq!(d[(0, 1)], 5.0);
        let c = exp_correlation(&d, 5.0);
        assert!((c[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(c[(0, 2)], 1.0);
        assert_eq!(c, c.transpose());
        let far = exp_correlation(&d, 1e12);
        assert!(far.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let near = exp_correlation(&d, 1e-6);
        assert_eq!(near[(0, 1)], 0.0);
        assert_eq!(near[(1, 1)], 1.0);
        // coincident locations give a singular all-ones block
        assert!(c.clone().cholesky().is_none() || c[(0, 2)] == 1.0);
        assert_eq!(max_distance(&d), 5.0);
    }

    #[test]
    fn dimension_checks() {
        assert!(Dataset::new(vec![1.0; 3], DMatrix::zeros(2, 1), vec![]).is_err());
        assert!(Dataset::new(vec![1.0; 3], DMatrix::zeros(3, 1), vec![vec![0, 1]]).is_err());
        let d = Dataset::new(vec![1.0; 3], DMatrix::zeros(3, 0), vec![vec![0, 2, 1]]).unwrap();
        assert_eq!(d.levels(0), 3);
    }
}
