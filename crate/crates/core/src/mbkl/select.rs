//! Penalty selection by inner cross-validation and the outer evaluation loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    train, train_l1_bits_baseline, train_linear_baseline, train_theta1_baseline, BankKind, Model, Prepared,
    Timings, TrainConfig,
};
use crate::data::Dataset;
use crate::error::{MbklError, Result};
use crate::seed::{self, Stage};

pub const DEFAULT_C_GRID: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Mbkl,
    Theta1,
    L1Bits,
    Linear,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mbkl => "mbkl",
            Method::Theta1 => "theta1",
            Method::L1Bits => "l1bits",
            Method::Linear => "linear",
        }
    }

    /// Whether the method has a Step 1 (L1) penalty.
    pub fn uses_c1(self) -> bool {
        matches!(self, Method::Mbkl | Method::L1Bits)
    }

    /// Whether the method has a final L2 penalty.
    pub fn uses_c2(self) -> bool {
        !matches!(self, Method::L1Bits)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = MbklError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "mbkl" => Ok(Method::Mbkl),
            "theta1" => Ok(Method::Theta1),
            "l1bits" => Ok(Method::L1Bits),
            "linear" => Ok(Method::Linear),
            other => Err(MbklError::InvalidConfig(format!(
                "unknown baseline {other:?} (expected none, theta1, l1bits or linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c1: DEFAULT_C_GRID.to_vec(),
            c2: DEFAULT_C_GRID.to_vec(),
            inner_folds: 3,
        }
    }
}

/// Mean inner-validation accuracy of one penalty pair; `None` when some
/// inner fold could not be trained (Step 1 kept no stump).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub c1: f64,
    pub c2: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub c1: f64,
    pub c2: f64,
    pub accuracy: f64,
    pub scores: Vec<GridScore>,
}

fn sorted_unique(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(MbklError::InvalidConfig("empty C grid".into()));
    }
    if let Some(c) = values.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(MbklError::InvalidConfig(format!("grid value {c} is not a positive number")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Mean over the classes present in `truth` of the per-class recall.
pub fn mean_class_accuracy(predicted: &[usize], truth: &[usize], n_classes: usize) -> f64 {
    let mut hit = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        total[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let present: Vec<f64> = (0..n_classes)
        .filter(|&c| total[c] > 0)
        .map(|c| hit[c] as f64 / total[c] as f64)
        .collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

fn validation_accuracy(model: &Model, val: &Dataset) -> Result<f64> {
    Ok(accuracy(&model.predict_matrix(val.features())?, val.labels()))
}

/// Accuracy of every `(c1, c2)` pair on one inner split; `None` marks pairs
/// for which Step 1 kept no stump.
fn score_split(
    sub: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    method: Method,
    c1s: &[f64],
    c2s: &[f64],
) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(c1s.len() * c2s.len());
    match method {
        Method::Mbkl => {
            let prep = Prepared::new(sub, cfg, true)?;
            let thetas = prep.learn_theta_path(c1s, cfg)?;
            for (&c1, theta) in c1s.iter().zip(thetas) {
                let active: Vec<usize> = (0..theta.len()).filter(|&k| theta[k] > 0.0).collect();
                if active.is_empty() {
                    out.extend(std::iter::repeat_n(None, c2s.len()));
                    continue;
                }
                let theta: Vec<f64> = active.iter().map(|&k| theta[k]).collect();
                for m in prep.fit_step2(BankKind::Mbkl, &active, &theta, c1, c2s, cfg)? {
                    out.push(Some(validation_accuracy(&Model::Bank(m), val)?));
                }
            }
        }
        Method::Theta1 => {
            let prep = Prepared::new(sub, cfg, false)?;
            let active: Vec<usize> = (0..prep.stumps.len()).collect();
            let theta = vec![1.0; active.len()];
            for &c1 in c1s {
                for m in prep.fit_step2(BankKind::Theta1, &active, &theta, c1, c2s, cfg)? {
                    out.push(Some(validation_accuracy(&Model::Bank(m), val)?));
                }
            }
        }
        Method::L1Bits => {
            for &c1 in c1s {
                let (m, _, _) = train_l1_bits_baseline(sub, &TrainConfig { c1, ..cfg.clone() })?;
                let acc = validation_accuracy(&Model::Bank(m), val)?;
                out.extend(std::iter::repeat_n(Some(acc), c2s.len()));
            }
        }
        Method::Linear => {
            for _ in c1s {
                for &c2 in c2s {
                    let (m, _) = train_linear_baseline(sub, &TrainConfig { c2, ..cfg.clone() })?;
                    out.push(Some(validation_accuracy(&Model::Linear(m), val)?));
                }
            }
        }
    }
    Ok(out)
}

/// Chooses the penalties of `method` by `grid.inner_folds`-fold stratified
/// cross-validation on `train` alone: highest mean validation accuracy,
/// ties to the smaller `c1`, then the smaller `c2`. Penalties the method
/// does not use are left at their `cfg` values.
pub fn select_hyperparameters(train: &Dataset, cfg: &TrainConfig, method: Method, grid: &GridSpec) -> Result<Selection> {
    cfg.validate()?;
    let c1s = if method.uses_c1() { sorted_unique(&grid.c1)? } else { vec![cfg.c1] };
    let c2s = if method.uses_c2() { sorted_unique(&grid.c2)? } else { vec![cfg.c2] };
    let folds = train.stratified_kfold(grid.inner_folds, seed::derive(cfg.seed, Stage::InnerFolds, &[]))?;
    let mut sums: Vec<Option<f64>> = vec![Some(0.0); c1s.len() * c2s.len()];
    for (f, fold) in folds.iter().enumerate() {
        let sub = train.subset(&fold.train);
        let val = train.subset(&fold.test);
        let inner = TrainConfig {
            seed: seed::derive(cfg.seed, Stage::InnerFolds, &[f as u64 + 1]),
            ..cfg.clone()
        };
        let scores = score_split(&sub, &val, &inner, method, &c1s, &c2s)?;
        for (s, v) in sums.iter_mut().zip(scores) {
            *s = match (*s, v) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }
    let k = folds.len() as f64;
    let mut scores = Vec::with_capacity(sums.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, s) in sums.iter().enumerate() {
        let (c1, c2) = (c1s[i / c2s.len()], c2s[i % c2s.len()]);
        let acc = s.map(|v| v / k);
        scores.push(GridScore { c1, c2, accuracy: acc });
        if let Some(a) = acc {
            // Pairs are visited in increasing (c1, c2), so a strict `>` keeps
            // the smallest penalties among ties.
            if best.is_none_or(|b| a > b.2) {
                best = Some((c1, c2, a));
            }
        }
    }
    let (c1, c2, accuracy) = best.ok_or(MbklError::EmptyBank)?;
    Ok(Selection {
        c1,
        c2,
        accuracy,
        scores,
    })
}

/// Trains `method` with the penalties in `cfg`.
pub fn fit(train_set: &Dataset, cfg: &TrainConfig, method: Method) -> Result<(Model, Timings)> {
    Ok(match method {
        Method::Mbkl => {
            let (m, t) = train(train_set, cfg)?;
            (Model::Bank(m), t)
        }
        Method::Theta1 => {
            let (m, t) = train_theta1_baseline(train_set, cfg)?;
            (Model::Bank(m), t)
        }
        Method::L1Bits => {
            let (m, _, t) = train_l1_bits_baseline(train_set, cfg)?;
            (Model::Bank(m), t)
        }
        Method::Linear => {
            let (m, t) = train_linear_baseline(train_set, cfg)?;
            (Model::Linear(m), t)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub mean_class_accuracy: f64,
    pub c1: f64,
    pub c2: f64,
    /// Active stumps of the fold's final model (0 for the linear baseline).
    pub n_active: usize,
    /// Indices into the full dataset and the class predicted for each.
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub selection_secs: f64,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub mean_class_accuracy: f64,
}

/// Stratified `k`-fold evaluation. With a grid, penalties are chosen per
/// outer fold on its training part only.
pub fn cross_validate(
    data: &Dataset,
    cfg: &TrainConfig,
    method: Method,
    k: usize,
    grid: Option<&GridSpec>,
) -> Result<CvReport> {
    cfg.validate()?;
    let folds = data.stratified_kfold(k, seed::derive(cfg.seed, Stage::Folds, &[]))?;
    let mut results = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let train_set = data.subset(&fold.train);
        let test = data.subset(&fold.test);
        let mut fold_cfg = TrainConfig {
            seed: seed::derive(cfg.seed, Stage::Folds, &[f as u64 + 1]),
            ..cfg.clone()
        };
        let t = Instant::now();
        if let Some(g) = grid {
            let sel = select_hyperparameters(&train_set, &fold_cfg, method, g)?;
            fold_cfg.c1 = sel.c1;
            fold_cfg.c2 = sel.c2;
        }
        let selection_secs = t.elapsed().as_secs_f64();
        let (model, timings) = fit(&train_set, &fold_cfg, method)?;
        let predictions = model.predict_matrix(test.features())?;
        results.push(FoldResult {
            fold: f,
            n_train: train_set.n_samples(),
            n_test: test.n_samples(),
            accuracy: accuracy(&predictions, test.labels()),
            mean_class_accuracy: mean_class_accuracy(&predictions, test.labels(), data.n_classes()),
            c1: fold_cfg.c1,
            c2: fold_cfg.c2,
            n_active: model.n_active(),
            test_indices: fold.test.clone(),
            predictions,
            selection_secs,
            timings,
        });
    }
    let n = results.len() as f64;
    Ok(CvReport {
        method,
        mean_accuracy: results.iter().map(|r| r.accuracy).sum::<f64>() / n,
        mean_class_accuracy: results.iter().map(|r| r.mean_class_accuracy).sum::<f64>() / n,
        folds: results,
    })
}
