//! Tabular regression data: CSV ingestion, synthetic benchmark generators,
//! standardization and cross-validation fold plans.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NafError, Result};
use crate::rng::stream_rng;

/// Feature matrix (row-major) with one regression target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    targets: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let n_features = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_features) {
            return Err(NafError::Dimension {
                expected: n_features,
                actual: row.len(),
                location: Some(i),
            });
        }
        let n_rows = rows.len();
        Self::from_flat(rows.concat(), n_rows, n_features, targets)
    }

    pub fn from_flat(
        features: Vec<f64>,
        n_rows: usize,
        n_features: usize,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if n_rows == 0 || n_features == 0 {
            return Err(NafError::InvalidDataset(format!(
                "need at least one row and one feature, got {n_rows}x{n_features}"
            )));
        }
        if features.len() != n_rows * n_features {
            return Err(NafError::InvalidDataset(format!(
                "feature buffer holds {} values, expected {}",
                features.len(),
                n_rows * n_features
            )));
        }
        if targets.len() != n_rows {
            return Err(NafError::Dimension {
                expected: n_rows,
                actual: targets.len(),
                location: None,
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(NafError::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        if let Some(pos) = targets.iter().position(|v| !v.is_finite()) {
            return Err(NafError::InvalidDataset(format!(
                "non-finite target at row {pos}"
            )));
        }
        Ok(Self {
            features,
            n_rows,
            n_features,
            targets,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(NafError::Dimension {
                expected: self.n_features,
                actual: names.len(),
                location: None,
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_rows: indices.len(),
            n_features: self.n_features,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Feature names, defaulting to `x1..xd`.
    pub fn column_names(&self) -> Vec<String> {
        match &self.feature_names {
            Some(n) => n.clone(),
            None => (1..=self.n_features).map(|j| format!("x{j}")).collect(),
        }
    }

    /// Write the dataset as CSV with a header row; the target column is last.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, target_name: &str) -> std::io::Result<()> {
        writeln!(out, "{},{}", self.column_names().join(","), target_name)?;
        for (row, y) in self.rows().zip(&self.targets) {
            for v in row {
                write!(out, "{v},")?;
            }
            writeln!(out, "{y}")?;
        }
        Ok(())
    }
}

/// How the target column of a CSV file is identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| NafError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target)
}

/// Parse a headed CSV stream. Row numbers in errors are 1-based data rows
/// (the header is row 0); column numbers are 1-based.
pub fn read_csv<R: Read>(reader: R, target: &TargetColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| NafError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let target_idx = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NafError::MissingTarget(name.clone()))?,
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => return Err(NafError::MissingTarget(i.to_string())),
        TargetColumn::Last => headers.len().saturating_sub(1),
    };
    if headers.len() < 2 {
        return Err(NafError::InvalidDataset(
            "need at least one feature column besides the target".into(),
        ));
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| NafError::Parse {
            row,
            message: e.to_string(),
        })?;
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| NafError::NonNumeric {
                row,
                column: c + 1,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(NafError::NonNumeric {
                    row,
                    column: c + 1,
                    value: cell.to_string(),
                });
            }
            if c == target_idx {
                targets.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let n_rows = targets.len();
    let names = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::from_flat(features, n_rows, headers.len() - 1, targets)?.with_feature_names(names)
}

/// Read a headed CSV whose every column is a feature (prediction input).
/// Returns the rows; an input with only a header yields no rows.
pub fn read_feature_rows<R: Read>(reader: R, expected_width: usize) -> Result<Vec<Vec<f64>>> {
    read_feature_columns(reader, expected_width, None)
}

/// Like [`read_feature_rows`], but when the header is wider than
/// `expected_width` and contains every one of `names`, only those columns
/// are read, in the order of `names`. This accepts a training CSV that
/// still carries its target column.
pub fn read_feature_columns<R: Read>(
    reader: R,
    expected_width: usize,
    names: Option<&[String]>,
) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| NafError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let selection: Option<Vec<usize>> = match names {
        Some(names) if headers.len() != expected_width && names.len() == expected_width => names
            .iter()
            .map(|n| headers.iter().position(|h| h == n))
            .collect(),
        _ => None,
    };
    if selection.is_none() && headers.len() != expected_width {
        return Err(NafError::Dimension {
            expected: expected_width,
            actual: headers.len(),
            location: Some(0),
        });
    }
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| NafError::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(NafError::Dimension {
                expected: headers.len(),
                actual: record.len(),
                location: Some(row),
            });
        }
        let columns: Vec<usize> = match &selection {
            Some(sel) => sel.clone(),
            None => (0..expected_width).collect(),
        };
        let values = columns
            .into_iter()
            .map(|c| (c, &record[c]))
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| NafError::NonNumeric {
                        row,
                        column: c + 1,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

/// The three Friedman benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FriedmanVariant {
    One,
    Two,
    Three,
}

impl FriedmanVariant {
    pub fn n_features(self) -> usize {
        match self {
            FriedmanVariant::One => 10,
            FriedmanVariant::Two | FriedmanVariant::Three => 4,
        }
    }

    /// Noiseless response for one input row.
    pub fn response(self, x: &[f64]) -> f64 {
        match self {
            FriedmanVariant::One => {
                10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            }
            FriedmanVariant::Two => {
                let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
                (x[0] * x[0] + inner * inner).sqrt()
            }
            FriedmanVariant::Three => ((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]).atan(),
        }
    }
}

pub fn gen_friedman(variant: FriedmanVariant, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(NafError::TooSmall("friedman generator needs n >= 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let d = variant.n_features();
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = match variant {
            FriedmanVariant::One => (0..d).map(|_| rng.random::<f64>()).collect(),
            FriedmanVariant::Two | FriedmanVariant::Three => vec![
                100.0 * rng.random::<f64>(),
                40.0 * PI + 520.0 * PI * rng.random::<f64>(),
                rng.random::<f64>(),
                1.0 + 10.0 * rng.random::<f64>(),
            ],
        };
        let eps: f64 = rng.sample(StandardNormal);
        targets.push(variant.response(&row) + noise_sd * eps);
        features.extend(row);
    }
    Dataset::from_flat(features, n, d, targets)
}

/// Two interleaving half circles; the moon label (0 or 1) is the target.
pub fn gen_two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(NafError::TooSmall("two moons needs n >= 2".into()));
    }
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let spaced = |count: usize, i: usize| {
        if count == 1 {
            0.0
        } else {
            PI * i as f64 / (count - 1) as f64
        }
    };
    let mut points: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = spaced(n_outer, i);
        points.push(([t.cos(), t.sin()], 0.0));
    }
    for i in 0..n_inner {
        let t = spaced(n_inner, i);
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1.0));
    }
    let mut rng = stream_rng(seed, 0);
    points.shuffle(&mut rng);
    let mut features = Vec::with_capacity(2 * n);
    let mut targets = Vec::with_capacity(n);
    for (p, label) in points {
        for v in p {
            let eps: f64 = rng.sample(StandardNormal);
            features.push(v + noise_sd * eps);
        }
        targets.push(label);
    }
    Dataset::from_flat(features, n, 2, targets)
}

/// Gaussian-design linear model `y = X·coef + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub n_features: usize,
    /// Explicit coefficients; when absent the first `n_informative` get
    /// uniform draws in [0, 100) and the rest are zero.
    pub coef: Option<Vec<f64>>,
    pub n_informative: usize,
    pub noise_sd: f64,
}

impl LinearSpec {
    /// 100 features, 10 informative, noiseless.
    pub fn regression() -> Self {
        Self {
            n_features: 100,
            coef: None,
            n_informative: 10,
            noise_sd: 0.0,
        }
    }

    /// 10 features of which only the first four carry signal:
    /// `y = x1 + 2 x2 - 2 x3 - 1.5 x4 + N(0, 1)`.
    pub fn sparse() -> Self {
        let mut coef = vec![0.0; 10];
        coef[..4].copy_from_slice(&[1.0, 2.0, -2.0, -1.5]);
        Self {
            n_features: 10,
            coef: Some(coef),
            n_informative: 4,
            noise_sd: 1.0,
        }
    }
}

pub fn gen_linear(spec: &LinearSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || spec.n_features == 0 {
        return Err(NafError::TooSmall(
            "linear generator needs n >= 1 and d >= 1".into(),
        ));
    }
    let d = spec.n_features;
    let mut rng = stream_rng(seed, 0);
    let coef = match &spec.coef {
        Some(c) if c.len() == d => c.clone(),
        Some(c) => {
            return Err(NafError::Dimension {
                expected: d,
                actual: c.len(),
                location: None,
            })
        }
        None => (0..d)
            .map(|j| {
                if j < spec.n_informative {
                    100.0 * rng.random::<f64>()
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let noise =
        Normal::new(0.0, spec.noise_sd.max(0.0)).map_err(|e| NafError::Config(format!("noise_sd: {e}")))?;
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: f64 = row.iter().zip(&coef).map(|(x, c)| x * c).sum();
        targets.push(y + noise.sample(&mut rng));
        features.extend(row);
    }
    Dataset::from_flat(features, n, d, targets)
}

/// Named synthetic datasets available from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Friedman1,
    Friedman2,
    Friedman3,
    TwoMoons,
    Linear,
    Sparse,
}

impl SyntheticKind {
    pub const NAMES: [&'static str; 6] = [
        "friedman1",
        "friedman2",
        "friedman3",
        "two_moons",
        "linear",
        "sparse",
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Friedman1 => "friedman1",
            SyntheticKind::Friedman2 => "friedman2",
            SyntheticKind::Friedman3 => "friedman3",
            SyntheticKind::TwoMoons => "two_moons",
            SyntheticKind::Linear => "linear",
            SyntheticKind::Sparse => "sparse",
        }
    }

    /// Generate `n` rows. `noise_sd` overrides the dataset's default noise.
    pub fn generate(self, n: usize, noise_sd: Option<f64>, seed: u64) -> Result<Dataset> {
        match self {
            SyntheticKind::Friedman1 => gen_friedman(FriedmanVariant::One, n, noise_sd.unwrap_or(0.0), seed),
            SyntheticKind::Friedman2 => gen_friedman(FriedmanVariant::Two, n, noise_sd.unwrap_or(0.0), seed),
            SyntheticKind::Friedman3 => {
                gen_friedman(FriedmanVariant::Three, n, noise_sd.unwrap_or(0.0), seed)
            }
            SyntheticKind::TwoMoons => gen_two_moons(n, noise_sd.unwrap_or(0.1), seed),
            SyntheticKind::Linear => {
                let mut spec = LinearSpec::regression();
                if let Some(s) = noise_sd {
                    spec.noise_sd = s;
                }
                gen_linear(&spec, n, seed)
            }
            SyntheticKind::Sparse => {
                let mut spec = LinearSpec::sparse();
                if let Some(s) = noise_sd {
                    spec.noise_sd = s;
                }
                gen_linear(&spec, n, seed)
            }
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "friedman1" => SyntheticKind::Friedman1,
            "friedman2" => SyntheticKind::Friedman2,
            "friedman3" => SyntheticKind::Friedman3,
            "two_moons" => SyntheticKind::TwoMoons,
            "linear" => SyntheticKind::Linear,
            "sparse" => SyntheticKind::Sparse,
            other => {
                return Err(NafError::Config(format!(
                    "unknown dataset {other:?}; valid names: {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Per-column affine map to zero mean and unit population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    /// Columns whose spread was zero; their scale is clamped to 1.
    pub degenerate: Vec<bool>,
}

impl Standardizer {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let n = dataset.n_rows();
        if n < 2 {
            return Err(NafError::TooSmall("standardization needs at least 2 rows".into()));
        }
        let d = dataset.n_features();
        let mut means = vec![0.0; d];
        for row in dataset.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut vars = vec![0.0; d];
        for row in dataset.rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut degenerate = vec![false; d];
        let std_devs = vars
            .iter()
            .zip(&means)
            .zip(degenerate.iter_mut())
            .map(|((s, m), flag)| {
                let sd = (s / n as f64).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    *flag = true;
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            means,
            std_devs,
            degenerate,
        })
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.n_features() != self.n_features() {
            return Err(NafError::Dimension {
                expected: self.n_features(),
                actual: dataset.n_features(),
                location: None,
            });
        }
        let features = dataset.rows().flat_map(|r| self.apply_row(r)).collect();
        let mut out = Dataset::from_flat(
            features,
            dataset.n_rows(),
            dataset.n_features(),
            dataset.targets().to_vec(),
        )?;
        out.feature_names = dataset.feature_names.clone();
        Ok(out)
    }
}

/// Fit a standardizer on `dataset` and return the transformed copy.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, Standardizer)> {
    let standardizer = Standardizer::fit(dataset)?;
    Ok((standardizer.apply(dataset)?, standardizer))
}

/// Repeated k-fold plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
}

/// Fold index sets for every repetition: `result[rep][fold]`.
///
/// Each repetition shuffles `0..n` with its own stream and deals the
/// remainder `n % k` one extra index to the leading folds.
pub fn split_cv(n: usize, plan: &CvPlan) -> Result<Vec<Vec<Vec<usize>>>> {
    if plan.k == 0 || n < plan.k {
        return Err(NafError::TooSmall(format!(
            "cannot split {n} rows into {} folds",
            plan.k
        )));
    }
    Ok((0..plan.repetitions)
        .map(|rep| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut stream_rng(plan.seed, rep as u64));
            let base = n / plan.k;
            let extra = n % plan.k;
            let mut folds = Vec::with_capacity(plan.k);
            let mut start = 0;
            for f in 0..plan.k {
                let len = base + usize::from(f < extra);
                folds.push(idx[start..start + len].to_vec());
                start += len;
            }
            folds
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_readback() {
        let ds = read_csv(
            "a,b,y\n1,2,3\n4,5,6\n7,8,9".as_bytes(),
            &TargetColumn::Name("y".into()),
        )
        .unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.targets(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.row(1), &[4.0, 5.0]);
        assert_eq!(ds.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn feature_rows_by_width_or_name() {
        let rows = read_feature_rows("a,b\n1,2\n3,4".as_bytes(), 2).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(read_feature_rows("a,b\n".as_bytes(), 2).unwrap().is_empty());
        assert!(matches!(
            read_feature_rows("a,b\n1,2\n3".as_bytes(), 2),
            Err(NafError::Dimension {
                location: Some(2),
                ..
            })
        ));
        assert!(matches!(
            read_feature_rows("a,b,c\n1,2,3".as_bytes(), 2),
            Err(NafError::Dimension {
                location: Some(0),
                ..
            })
        ));
        let names = ["b".to_string(), "a".to_string()];
        let rows = read_feature_columns("a,y,b\n1,9,2".as_bytes(), 2, Some(&names)).unwrap();
        assert_eq!(rows, vec![vec![2.0, 1.0]]);
    }

    #[test]
    fn csv_target_defaults_to_last_column() {
        let ds = read_csv("a,b,y\n1,2,3\n4,5,6".as_bytes(), &TargetColumn::Last).unwrap();
        assert_eq!(ds.targets(), &[3.0, 6.0]);
        assert_eq!(ds.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_target_by_index_in_middle() {
        let ds = read_csv("a,y,b\n1,2,3\n4,5,6".as_bytes(), &TargetColumn::Index(1)).unwrap();
        assert_eq!(ds.targets(), &[2.0, 5.0]);
        assert_eq!(ds.row(0), &[1.0, 3.0]);
    }

    #[test]
    fn csv_non_numeric_cell_location() {
        let err = read_csv("a,b,y\n1,x,3".as_bytes(), &TargetColumn::Name("y".into())).unwrap_err();
        match err {
            NafError::NonNumeric { row, column, .. } => assert_eq!((row, column), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_missing_target_and_ragged_rows() {
        assert!(matches!(
            read_csv("a,b\n1,2".as_bytes(), &TargetColumn::Name("y".into())),
            Err(NafError::MissingTarget(_))
        ));
        assert!(matches!(
            read_csv("a,b,y\n1,2,3\n4,5".as_bytes(), &TargetColumn::Name("y".into())),
            Err(NafError::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn friedman1_center_point() {
        let y = FriedmanVariant::One.response(&[0.5; 10]);
        // 10 sin(pi/4) + 0 + 5 + 2.5
        assert!((y - 14.571_067_811_865_476).abs() < 1e-12);
    }

    #[test]
    fn friedman_dimensions_and_determinism() {
        let a = gen_friedman(FriedmanVariant::One, 20, 0.0, 3).unwrap();
        let b = gen_friedman(FriedmanVariant::One, 20, 0.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_features(), 10);
        assert_eq!(
            gen_friedman(FriedmanVariant::Two, 5, 0.0, 1)
                .unwrap()
                .n_features(),
            4
        );
        assert_eq!(
            gen_friedman(FriedmanVariant::Three, 5, 0.0, 1)
                .unwrap()
                .n_features(),
            4
        );
        assert!(gen_friedman(FriedmanVariant::Two, 0, 0.0, 1).is_err());
    }

    #[test]
    fn friedman_inputs_within_standard_ranges() {
        let ds = gen_friedman(FriedmanVariant::Two, 200, 0.0, 9).unwrap();
        for row in ds.rows() {
            assert!((0.0..100.0).contains(&row[0]));
            assert!((40.0 * PI..560.0 * PI).contains(&row[1]));
            assert!((0.0..1.0).contains(&row[2]));
            assert!((1.0..11.0).contains(&row[3]));
        }
    }

    #[test]
    fn two_moons_shape_and_geometry() {
        let ds = gen_two_moons(25, 0.1, 5).unwrap();
        assert_eq!((ds.n_rows(), ds.n_features()), (25, 2));
        assert!(ds.targets().iter().all(|&t| t == 0.0 || t == 1.0));
        let ones = ds.targets().iter().filter(|&&t| t == 1.0).count();
        assert!(ones == 12 || ones == 13);

        let clean = gen_two_moons(4, 0.0, 1).unwrap();
        for (row, &label) in clean.rows().zip(clean.targets()) {
            let (cx, cy) = if label == 0.0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if label == 0.0 {
                assert!(row[1] >= -1e-12);
            } else {
                assert!(row[1] <= 0.5 + 1e-12);
            }
        }
        assert_eq!(
            gen_two_moons(30, 0.2, 8).unwrap(),
            gen_two_moons(30, 0.2, 8).unwrap()
        );
    }

    #[test]
    fn sparse_generator_uses_four_signal_columns() {
        let mut spec = LinearSpec::sparse();
        spec.noise_sd = 0.0;
        let ds = gen_linear(&spec, 10, 2).unwrap();
        for (row, y) in ds.rows().zip(ds.targets()) {
            let expect = row[0] + 2.0 * row[1] - 2.0 * row[2] - 1.5 * row[3];
            assert!((expect - y).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_two_values_and_constant_column() {
        let ds = Dataset::new(vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![0.0, 1.0]).unwrap();
        let (z, s) = standardize(&ds).unwrap();
        assert_eq!(z.row(0), &[-1.0, 0.0]);
        assert_eq!(z.row(1), &[1.0, 0.0]);
        assert_eq!(s.degenerate, vec![false, true]);
        assert_eq!(s.std_devs[1], 1.0);
        assert!(standardize(&ds.subset(&[0])).is_err());
    }

    #[test]
    fn cv_fold_sizes() {
        let plan = CvPlan {
            k: 3,
            repetitions: 2,
            seed: 4,
        };
        let six = split_cv(6, &plan).unwrap();
        assert!(six[0].iter().all(|f| f.len() == 2));
        let seven = split_cv(7, &plan).unwrap();
        let sizes: Vec<usize> = seven[1].iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert_eq!(split_cv(7, &plan).unwrap(), seven);
        assert!(split_cv(2, &plan).is_err());
    }

    proptest! {
        #[test]
        fn standardize_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 2..20)) {
            let n = rows.len();
            let ds = Dataset::new(rows, vec![0.0; n]).unwrap();
            let (z, s) = standardize(&ds).unwrap();
            for (orig, zr) in ds.rows().zip(z.rows()) {
                for (a, b) in orig.iter().zip(s.invert_row(zr)) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
            for j in 0..3 {
                let mean: f64 = z.rows().map(|r| r[j]).sum::<f64>() / n as f64;
                prop_assert!(mean.abs() < 1e-10);
            }
        }

        #[test]
        fn cv_folds_partition(n in 3usize..60, k in 1usize..4, seed in any::<u64>()) {
            let plan = CvPlan { k, repetitions: 3, seed };
            for rep in split_cv(n, &plan).unwrap() {
                let mut all: Vec<usize> = rep.concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
