//! Dataset ingestion, logistic normalization and stratified folds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{MbklError, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Dense features with contiguous integer class labels.
///
/// `class_names[c]` keeps the label text class `c` was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(MbklError::EmptyDataset);
        }
        if features.cols() == 0 {
            return Err(MbklError::InvalidConfig(
                "dataset has no feature columns".into(),
            ));
        }
        if labels.len() != features.rows() {
            return Err(MbklError::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if class_names.len() < 2 {
            return Err(MbklError::InvalidConfig(format!(
                "at least 2 classes are required, found {}",
                class_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(MbklError::InvalidConfig(format!(
                "label {bad} is outside [0, {})",
                class_names.len()
            )));
        }
        if let Some((row, column)) = features.find_non_finite() {
            return Err(MbklError::NonFinite { row, column });
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    /// Builds a dataset with class names `"0"`, `"1"`, ... .
    pub fn from_parts(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Dataset::new(features, labels, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices`, keeping the full class map.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same features, different labels (used by relabeling checks).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.class_names.clone())
    }
}

/// Maps raw label strings to contiguous ids. Numeric labels sort numerically,
/// anything else lexicographically.
fn remap_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        names = paired.into_iter().map(|(_, n)| n).collect();
    }
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let labels = raw.iter().map(|r| index[r.as_str()]).collect();
    (labels, names)
}

fn parse_finite(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses `label idx:val idx:val ...` lines with 1-based, strictly ascending
/// indices. Text after `#` is ignored. The dimensionality is the largest index
/// seen unless `n_features` is given.
pub fn parse_sparse_text<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| MbklError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().unwrap_or_default().to_string();
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| MbklError::Parse {
                line: line_no,
                msg: format!("expected index:value, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| MbklError::Parse {
                line: line_no,
                msg: format!("invalid feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(MbklError::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(MbklError::Parse {
                    line: line_no,
                    msg: format!("index {idx} does not follow {last} in ascending order"),
                });
            }
            let val = parse_finite(val).ok_or_else(|| MbklError::Parse {
                line: line_no,
                msg: format!("invalid value {val:?}"),
            })?;
            last = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        raw_labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(MbklError::EmptyDataset);
    }
    let d = match n_features {
        Some(d) if d < max_index => {
            return Err(MbklError::InvalidConfig(format!(
                "feature index {max_index} exceeds the declared dimensionality {d}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let mut features = Matrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features.set(i, j, v);
        }
    }
    let (labels, names) = remap_labels(&raw_labels);
    Dataset::new(features, labels, names)
}

pub fn load_sparse_text(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MbklError::io(path, e))?;
    parse_sparse_text(BufReader::new(file), n_features)
}

/// Writes the dataset in sparse text form; zero entries are omitted.
pub fn write_sparse_text<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    for (i, row) in data.features.iter_rows().enumerate() {
        write!(out, "{}", data.class_names[data.labels[i]])?;
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: LabelColumn::Last,
            has_header: false,
        }
    }
}

pub fn parse_csv<R: Read>(reader: R, opts: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width: Option<usize> = None;
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // 1-based, counting the header line when present.
        let row_no = r + 1 + usize::from(opts.has_header);
        let record = record.map_err(|e| MbklError::Csv {
            row: row_no,
            column: 0,
            msg: e.to_string(),
        })?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(MbklError::Csv {
                row: row_no,
                column: record.len(),
                msg: format!("expected {w} cells, found {}", record.len()),
            });
        }
        if w < 2 {
            return Err(MbklError::Csv {
                row: row_no,
                column: 1,
                msg: "need a label column and at least one feature".into(),
            });
        }
        let label_col = match opts.label_column {
            LabelColumn::Index(c) if c < w => c,
            LabelColumn::Index(c) => {
                return Err(MbklError::Csv {
                    row: row_no,
                    column: c + 1,
                    msg: "label column out of range".into(),
                })
            }
            LabelColumn::Last => w - 1,
        };
        for (c, cell) in record.iter().enumerate() {
            if c == label_col {
                raw_labels.push(cell.to_string());
            } else {
                let v = parse_finite(cell).ok_or_else(|| MbklError::Csv {
                    row: row_no,
                    column: c + 1,
                    msg: format!("non-numeric cell {cell:?}"),
                })?;
                values.push(v);
            }
        }
    }
    let Some(w) = width else {
        return Err(MbklError::EmptyDataset);
    };
    let features = Matrix::from_vec(raw_labels.len(), w - 1, values)?;
    let (labels, names) = remap_labels(&raw_labels);
    Dataset::new(features, labels, names)
}

pub fn load_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MbklError::io(path, e))?;
    parse_csv(BufReader::new(file), opts)
}

const SCALE_FLOOR: f64 = 1e-12;
// Largest double strictly below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Per-dimension standardization followed by the standard logistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

#[inline]
fn logistic(z: f64) -> f64 {
    let v = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Transformed value of feature `j`; always strictly inside (0, 1).
    #[inline]
    pub fn transform(&self, j: usize, x: f64) -> f64 {
        logistic((x - self.center[j]) / self.scale[j])
    }

    /// The test `transform(j, x) > t` as comparisons on the raw value `x`.
    pub fn raw_cut(&self, j: usize, t: f64) -> RawCut {
        let passes = |x: f64| self.transform(j, x) > t;
        if passes(f64::NEG_INFINITY) {
            return RawCut {
                lo: f64::NEG_INFINITY,
                hi: f64::NEG_INFINITY,
            };
        }
        if !passes(f64::INFINITY) {
            return RawCut {
                lo: f64::INFINITY,
                hi: f64::NAN,
            };
        }
        // Smallest passing value, bisecting over the ordered doubles.
        let (mut fail, mut pass) = (ordered(f64::NEG_INFINITY), ordered(f64::INFINITY));
        while pass.abs_diff(fail) > 1 {
            let mid = fail + (pass.abs_diff(fail) / 2) as i64;
            if passes(unordered(mid)) {
                pass = mid;
            } else {
                fail = mid;
            }
        }
        let cut = unordered(pass);
        // Rounding in the standardization and the logistic can only move
        // the outcome within a few ulps of the cut; inside this band the
        // exact test decides.
        let band = 16.0 * f64::EPSILON * (self.scale[j] / (1.0 - t).max(f64::MIN_POSITIVE) + cut.abs() + self.center[j].abs());
        RawCut {
            lo: cut - band,
            hi: if band.is_finite() { cut + band } else { f64::NAN },
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.transform(j, x))
            .collect()
    }
}

/// Integer key with the same order as the `f64` values (both zeros map to 0).
fn ordered(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b >= 0 {
        b
    } else {
        -(b & i64::MAX)
    }
}

fn unordered(k: i64) -> f64 {
    if k >= 0 {
        f64::from_bits(k as u64)
    } else {
        -f64::from_bits(k.unsigned_abs())
    }
}

/// Raw-space form of one normalized threshold test: values below `lo` fail,
/// values at or above `hi` pass, and the rare ones in between need the exact
/// transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCut {
    pub lo: f64,
    pub hi: f64,
}

impl RawCut {
    #[inline]
    pub fn passes(&self, x: f64, exact: impl FnOnce() -> bool) -> bool {
        let above = x >= self.hi;
        // Non-short-circuit `|` keeps the common case free of a
        // data-dependent branch.
        if above | (x < self.lo) {
            above
        } else {
            exact()
        }
    }
}

/// Mean and (population) standard deviation per dimension, std floored at 1e-12.
pub fn fit_logistic_normalizer(train: &Dataset) -> NormalizationParams {
    let x = train.features();
    let n = x.rows() as f64;
    let d = x.cols();
    let mut center = vec![0.0; d];
    for row in x.iter_rows() {
        for (c, v) in center.iter_mut().zip(row) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= n);
    let mut var = vec![0.0; d];
    for row in x.iter_rows() {
        for j in 0..d {
            let dv = row[j] - center[j];
            var[j] += dv * dv;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| (v / n).sqrt().max(SCALE_FLOOR))
        .collect();
    NormalizationParams { center, scale }
}

pub fn apply_normalizer(params: &NormalizationParams, data: &Dataset) -> Result<Dataset> {
    if params.dim() != data.n_features() {
        return Err(MbklError::DimensionMismatch {
            expected: params.dim(),
            found: data.n_features(),
        });
    }
    let x = data.features();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let src = x.row(i);
        for (j, dst) in out.row_mut(i).iter_mut().enumerate() {
            *dst = params.transform(j, src[j]);
        }
    }
    Ok(Dataset {
        features: out,
        labels: data.labels.clone(),
        class_names: data.class_names.clone(),
    })
}

/// One (train, test) split; both index lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold over `labels`: each class is shuffled and dealt
/// round-robin, continuing the deal position across classes so fold sizes
/// also stay within one of each other.
pub fn stratified_kfold(
    labels: &[usize],
    class_names: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(MbklError::InvalidConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let n_classes = class_names.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(MbklError::TooFewSamples {
                class: class_names[c].clone(),
                count: members.len(),
                folds: k,
            });
        }
    }
    let mut rng = seed::rng(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut position = 0usize;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = position % k;
            position += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

impl Dataset {
    pub fn stratified_kfold(&self, k: usize, seed: u64) -> Result<Vec<Fold>> {
        stratified_kfold(&self.labels, &self.class_names, k, seed)
    }
}
