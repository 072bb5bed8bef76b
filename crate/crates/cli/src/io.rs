//! CSV ingestion into a standardized [`Dataset`] and the canonical export.

use crate::error::{CliError, Result};
use nalgebra::DMatrix;
use r2d2_glmm::{standardize_columns, Dataset, GlmmError};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Coordinate columns attached to one grouping factor. Every row of a
/// level must carry the same pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialColumns {
    pub group: String,
    pub x: String,
    pub y: String,
}

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CsvSchema {
    pub response: String,
    pub covariates: Vec<String>,
    pub groups: Vec<String>,
    pub spatial: Option<SpatialColumns>,
    /// Exposure column, positive and on the natural scale.
    pub offset: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: Dataset,
    /// Covariate means and standard deviations before standardization.
    pub covariate_means: Vec<f64>,
    pub covariate_sds: Vec<f64>,
    /// Index of the grouping factor that carries coordinates.
    pub spatial_group: Option<usize>,
    /// Sample variance of the centered log offsets.
    pub offset_variance: Option<f64>,
}

const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "."];

fn is_missing(s: &str) -> bool {
    MISSING.contains(&s)
}

/// Labels sorted numerically when all parse as numbers, else as strings.
fn sorted_labels(raw: &[String]) -> Vec<String> {
    let mut labels: Vec<String> = raw.to_vec();
    labels.sort();
    labels.dedup();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(vals) = numeric {
        let mut pairs: Vec<(f64, String)> = vals.into_iter().zip(labels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        labels = pairs.into_iter().map(|(_, l)| l).collect();
    }
    labels
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(input: R, schema: &CsvSchema) -> Result<LoadedData> {
    if let Some(sp) = &schema.spatial {
        if !schema.groups.contains(&sp.group) {
            return Err(CliError::Usage(format!("spatial group {:?} is not among the group columns", sp.group)));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let y_col = col(&schema.response)?;
    let x_cols: Vec<usize> = schema.covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let g_cols: Vec<usize> = schema.groups.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let coord_cols = match &schema.spatial {
        Some(sp) => Some((col(&sp.x)?, col(&sp.y)?)),
        None => None,
    };
    let off_col = schema.offset.as_deref().map(col).transpose()?;

    let number = |row: usize, name: &str, s: &str| -> Result<f64> {
        if is_missing(s) {
            return Err(CliError::MissingValue { row, column: name.to_string() });
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::NonNumeric { row, column: name.to_string(), value: s.to_string() })
    };

    let (mut y, mut xs, mut offsets) = (Vec::new(), Vec::new(), Vec::new());
    let mut raw_groups: Vec<Vec<String>> = vec![Vec::new(); g_cols.len()];
    let mut raw_coords = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        y.push(number(row, &schema.response, &rec[y_col])?);
        for (c, name) in x_cols.iter().zip(&schema.covariates) {
            xs.push(number(row, name, &rec[*c])?);
        }
        for (k, (c, name)) in g_cols.iter().zip(&schema.groups).enumerate() {
            let label = &rec[*c];
            if is_missing(label) {
                return Err(CliError::MissingValue { row, column: name.clone() });
            }
            raw_groups[k].push(label.to_string());
        }
        if let (Some((cx, cy)), Some(sp)) = (coord_cols, &schema.spatial) {
            raw_coords.push([number(row, &sp.x, &rec[cx])?, number(row, &sp.y, &rec[cy])?]);
        }
        if let (Some(c), Some(name)) = (off_col, &schema.offset) {
            let v = number(row, name, &rec[c])?;
            if !(v > 0.0) {
                return Err(CliError::NonPositiveOffset { row, value: v });
            }
            offsets.push(v.ln());
        }
    }
    let n = y.len();
    let p = schema.covariates.len();
    let mut x = DMatrix::from_row_slice(n, p, &xs);
    let (covariate_means, covariate_sds) = standardize_columns(&mut x, &schema.covariates).map_err(|e| match e {
        GlmmError::DegenerateColumn(c) => CliError::DegenerateColumn(c),
        other => other.into(),
    })?;
    verify_standardized(&x, &schema.covariates)?;

    let mut groups = Vec::with_capacity(g_cols.len());
    let mut group_labels = Vec::with_capacity(g_cols.len());
    for raw in &raw_groups {
        let labels = sorted_labels(raw);
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        groups.push(raw.iter().map(|l| index[l.as_str()]).collect::<Vec<usize>>());
        group_labels.push(labels);
    }

    let spatial_group = schema.spatial.as_ref().map(|sp| schema.groups.iter().position(|g| *g == sp.group).unwrap());
    let coords = match spatial_group {
        Some(k) => {
            let mut level_coords: Vec<Option<[f64; 2]>> = vec![None; group_labels[k].len()];
            for (i, &l) in groups[k].iter().enumerate() {
                match level_coords[l] {
                    None => level_coords[l] = Some(raw_coords[i]),
                    Some(c) if c != raw_coords[i] => {
                        return Err(CliError::InconsistentCoordinates {
                            group: schema.groups[k].clone(),
                            level: group_labels[k][l].clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            Some(level_coords.into_iter().map(|c| c.expect("every level has a row")).collect())
        }
        None => None,
    };

    let (offsets, offset_variance) = if off_col.is_some() {
        let m = offsets.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = offsets.iter().map(|o| o - m).collect();
        let v = if n > 1 { centered.iter().map(|o| o * o).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        (Some(centered), Some(v))
    } else {
        (None, None)
    };

    let data = Dataset {
        y,
        x,
        covariate_names: schema.covariates.clone(),
        groups,
        group_names: schema.groups.clone(),
        group_labels,
        coords,
        offsets,
    };
    Ok(LoadedData { data, covariate_means, covariate_sds, spatial_group, offset_variance })
}

fn verify_standardized(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let n = x.nrows() as f64;
    for (j, name) in names.iter().enumerate() {
        let c = x.column(j);
        let m = c.sum() / n;
        let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        if !(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-8) {
            return Err(CliError::Standardization { column: name.clone() });
        }
    }
    Ok(())
}

/// Writes the loaded data with standardized covariates, group labels,
/// per-row coordinates and `exp` of the centered log offsets, so that
/// loading the output with [`canonical_schema`] reproduces it.
pub fn write_canonical_csv<W: Write>(loaded: &LoadedData, out: W) -> Result<()> {
    let d = &loaded.data;
    let schema = canonical_schema(loaded);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.response.clone()];
    header.extend(schema.covariates.iter().cloned());
    header.extend(schema.groups.iter().cloned());
    if let Some(sp) = &schema.spatial {
        header.push(sp.x.clone());
        header.push(sp.y.clone());
    }
    if let Some(o) = &schema.offset {
        header.push(o.clone());
    }
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec = vec![d.y[i].to_string()];
        rec.extend((0..d.p()).map(|j| d.x[(i, j)].to_string()));
        rec.extend((0..d.groups.len()).map(|k| d.group_labels[k][d.groups[k][i]].clone()));
        if let (Some(k), Some(coords)) = (loaded.spatial_group, &d.coords) {
            let c = coords[d.groups[k][i]];
            rec.push(c[0].to_string());
            rec.push(c[1].to_string());
        }
        if let Some(o) = &d.offsets {
            rec.push(o[i].exp().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

/// Column roles of a canonical export.
pub fn canonical_schema(loaded: &LoadedData) -> CsvSchema {
    let d = &loaded.data;
    CsvSchema {
        response: "y".into(),
        covariates: d.covariate_names.clone(),
        groups: d.group_names.clone(),
        spatial: loaded.spatial_group.map(|k| SpatialColumns {
            group: d.group_names[k].clone(),
            x: "coord_x".into(),
            y: "coord_y".into(),
        }),
        offset: d.offsets.as_ref().map(|_| "exposure".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(cov: &[&str]) -> CsvSchema {
        CsvSchema { response: "y".into(), covariates: cov.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    #[test]
    fn three_row_toy_is_standardized() {
        let d = load_csv_reader("y,x\n1,1\n0,2\n1,6\n".as_bytes(), &schema(&["x"])).unwrap();
        let c = d.data.x.column(0);
        let m = c.sum() / 3.0;
        let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 2.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        assert_eq!(d.covariate_means, vec![3.0]);
    }

    #[test]
    fn numeric_labels_sort_by_value() {
        let s = CsvSchema { groups: vec!["g".into()], ..schema(&[]) };
        let d = load_csv_reader("y,g\n1,10\n0,2\n1,1\n0,2\n".as_bytes(), &s).unwrap();
        assert_eq!(d.data.group_labels[0], vec!["1", "2", "10"]);
        assert_eq!(d.data.groups[0], vec![2, 1, 0, 1]);
        let d = load_csv_reader("y,g\n1,b\n0,a\n1,c\n".as_bytes(), &s).unwrap();
        assert_eq!(d.data.group_labels[0], vec!["a", "b", "c"]);
    }

    #[test]
    fn errors_name_row_and_column() {
        let e = load_csv_reader("y,x\n1,1\n0,\n".as_bytes(), &schema(&["x"])).unwrap_err();
        assert!(matches!(e, CliError::MissingValue { row: 2, ref column } if column == "x"));
        let e = load_csv_reader("y,x\n1,1\n0,abc\n".as_bytes(), &schema(&["x"])).unwrap_err();
        assert!(matches!(e, CliError::NonNumeric { row: 2, .. }));
        let e = load_csv_reader("y,x\n1,1\n0,1\n".as_bytes(), &schema(&["x"])).unwrap_err();
        assert!(matches!(e, CliError::DegenerateColumn(ref c) if c == "x"));
        let e = load_csv_reader("y,x\n1,1\n".as_bytes(), &schema(&["z"])).unwrap_err();
        assert!(matches!(e, CliError::MissingColumn(ref c) if c == "z"));
    }

    #[test]
    fn offsets_are_logged_and_centered() {
        let s = CsvSchema { offset: Some("e".into()), ..schema(&[]) };
        let d = load_csv_reader("y,e\n1,1\n2,2.718281828459045\n0,7.38905609893065\n".as_bytes(), &s).unwrap();
        let o = d.data.offsets.unwrap();
        assert!((o[0] + 1.0).abs() < 1e-12 && o[1].abs() < 1e-12 && (o[2] - 1.0).abs() < 1e-12);
        assert!((d.offset_variance.unwrap() - 1.0).abs() < 1e-12);
        let e = load_csv_reader("y,e\n1,0\n".as_bytes(), &s).unwrap_err();
        assert!(matches!(e, CliError::NonPositiveOffset { row: 1, .. }));
    }

    #[test]
    fn coordinates_must_agree_within_a_level() {
        let s = CsvSchema {
            groups: vec!["v".into()],
            spatial: Some(SpatialColumns { group: "v".into(), x: "cx".into(), y: "cy".into() }),
            ..schema(&[])
        };
        let d = load_csv_reader("y,v,cx,cy\n1,b,1,1\n0,a,0,0\n1,b,1,1\n".as_bytes(), &s).unwrap();
        assert_eq!(d.data.coords.unwrap(), vec![[0.0, 0.0], [1.0, 1.0]]);
        let e = load_csv_reader("y,v,cx,cy\n1,b,1,1\n0,b,0,0\n".as_bytes(), &s).unwrap_err();
        assert!(matches!(e, CliError::InconsistentCoordinates { .. }));
    }
}
