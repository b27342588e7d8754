//! Kernel learning over random stumps: sign initialization, shared kernel
//! weights from a sampled L1-SVM, and a one-vs-rest L2-SVM on the explicit
//! binary map.

mod format;
mod select;
mod step0;
mod step1;

pub use format::{load_model, save_model, Model, ModelKind};
pub use select::{
    accuracy, cross_validate, fit, mean_class_accuracy, select_hyperparameters, CvReport, FoldResult, GridScore, GridSpec, Method, Selection,
    DEFAULT_C_GRID,
};
pub use step0::{step0_counts, step0_init, step0_sign, Step0Mode};
pub use step1::{build_responses, sample_step1_set, step1_learn_theta, step1_learn_theta_path, Step1Set};

use std::sync::OnceLock;
use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_normalizer, fit_logistic_normalizer, Dataset, NormalizationParams, RawCut};
use crate::error::{MbklError, Result};
use crate::linsvm::{train_l1, train_l2_with_gram, Gram, LinearModel, SolverConfig};
use crate::matrix::Matrix;
use crate::seed::{self, Stage};
use crate::stumps::{evaluate_bank, generate_stumps, BitMatrix, FeatureSource, Stump};

/// Stumps with their kernel weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpBank {
    pub stumps: Vec<Stump>,
    pub theta: Vec<f64>,
}

impl StumpBank {
    pub fn new(stumps: Vec<Stump>, theta: Vec<f64>) -> Result<Self> {
        if stumps.len() != theta.len() {
            return Err(MbklError::DimensionMismatch {
                expected: stumps.len(),
                found: theta.len(),
            });
        }
        if let Some(t) = theta.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(MbklError::InvalidConfig(format!("kernel weight {t} is not a finite nonnegative number")));
        }
        Ok(StumpBank { stumps, theta })
    }

    pub fn len(&self) -> usize {
        self.stumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stumps.is_empty()
    }

    pub fn theta_l1(&self) -> f64 {
        self.theta.iter().sum()
    }
}

/// Keeps the stumps with `theta > 0`, in order.
pub fn prune_bank(bank: &StumpBank, theta: &[f64]) -> Result<StumpBank> {
    if theta.len() != bank.len() {
        return Err(MbklError::DimensionMismatch {
            expected: bank.len(),
            found: theta.len(),
        });
    }
    let (stumps, theta) = bank
        .stumps
        .iter()
        .zip(theta)
        .filter(|(_, &t)| t > 0.0)
        .map(|(s, &t)| (*s, t))
        .unzip();
    Ok(StumpBank { stumps, theta })
}

/// `N x 2K` map with column pair `(theta_k bit, theta_k (1 - bit))`.
pub fn step2_feature_map(bits: &BitMatrix, theta: &[f64]) -> Result<Matrix> {
    if theta.len() != bits.n_stumps() {
        return Err(MbklError::DimensionMismatch {
            expected: bits.n_stumps(),
            found: theta.len(),
        });
    }
    let n = bits.n_samples();
    let mut x = Matrix::zeros(n, 2 * theta.len());
    for (k, &t) in theta.iter().enumerate() {
        for j in 0..n {
            let col = if bits.get(k, j) { 2 * k } else { 2 * k + 1 };
            x.set(j, col, t);
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of random stumps; `None` means `max(10 d, 10000)`.
    pub initial_stumps: Option<usize>,
    pub neg_pos_ratio: f64,
    pub step1_cap: usize,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    pub step0_mode: Step0Mode,
    /// Fit and apply the logistic normalizer on the training data.
    pub normalize: bool,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_stumps: None,
            neg_pos_ratio: 1.0,
            step1_cap: 50_000,
            c1: 1.0,
            c2: 1.0,
            seed: 0,
            step0_mode: Step0Mode::Majority,
            normalize: true,
            tol: 1e-6,
            max_epochs: 1000,
        }
    }
}

impl TrainConfig {
    pub fn n_stumps(&self, d: usize) -> usize {
        self.initial_stumps.unwrap_or((10 * d).max(10_000))
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_stumps == Some(0) {
            return Err(MbklError::InvalidConfig("number of stumps must be >= 1".into()));
        }
        if !(self.neg_pos_ratio > 0.0 && self.neg_pos_ratio.is_finite()) {
            return Err(MbklError::InvalidConfig(format!(
                "neg/pos ratio must be positive, got {}",
                self.neg_pos_ratio
            )));
        }
        if self.step1_cap < 2 {
            return Err(MbklError::InvalidConfig("step 1 cap must be >= 2".into()));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2)] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(MbklError::InvalidConfig(format!("{name} must be positive, got {c}")));
            }
        }
        if !(self.tol > 0.0) || self.max_epochs == 0 {
            return Err(MbklError::InvalidConfig("solver tolerance and epochs must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn solver(&self, c: f64) -> SolverConfig {
        SolverConfig {
            c,
            tol: self.tol,
            max_epochs: self.max_epochs,
            seed: seed::derive(self.seed, Stage::Solver, &[]),
            allow_single_class: false,
        }
    }
}

/// Wall-clock seconds per training stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub normalize: f64,
    pub stumps: f64,
    pub step0: f64,
    pub step1: f64,
    pub step2: f64,
    pub total: f64,
}

impl Timings {
    pub fn add(&mut self, other: &Timings) {
        self.normalize += other.normalize;
        self.stumps += other.stumps;
        self.step0 += other.step0;
        self.step1 += other.step1;
        self.step2 += other.step2;
        self.total += other.total;
    }
}

/// Which training route produced a bank model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankKind {
    Mbkl,
    Theta1,
    L1Bits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
}

/// Index of the largest score; ties go to the lowest class id.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct StumpTest {
    feature: usize,
    cut: RawCut,
}

/// Stump tests in raw feature space, built on first use so prediction needs
/// no per-stump normalization. Not serialized and ignored by `==`.
#[derive(Debug, Clone, Default)]
pub struct RawCuts(OnceLock<Vec<StumpTest>>);

impl PartialEq for RawCuts {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Deployable classifier. Per class, `weights[c][2k]` is added when stump
/// `k` fires and `weights[c][2k + 1]` when it does not; the kernel weights
/// are already folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbklModel {
    pub kind: BankKind,
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub normalization: Option<NormalizationParams>,
    pub bank: StumpBank,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Derived from `bank` and `normalization`; reset it after editing them.
    #[serde(skip)]
    pub cuts: RawCuts,
}

impl MbklModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Builds a model from raw Step 2 weights over the theta map. The bank is
    /// reordered by feature index.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: BankKind,
        n_features: usize,
        class_names: Vec<String>,
        normalization: Option<NormalizationParams>,
        bank: StumpBank,
        raw: &[LinearModel],
        c1: f64,
        c2: f64,
    ) -> Result<Self> {
        if raw.len() != class_names.len() {
            return Err(MbklError::DimensionMismatch {
                expected: class_names.len(),
                found: raw.len(),
            });
        }
        let mut weights = Vec::with_capacity(raw.len());
        for m in raw {
            if m.weights.len() != 2 * bank.len() {
                return Err(MbklError::DimensionMismatch {
                    expected: 2 * bank.len(),
                    found: m.weights.len(),
                });
            }
            weights.push(
                m.weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * bank.theta[i / 2])
                    .collect(),
            );
        }
        if let Some(s) = bank.stumps.iter().find(|s| s.feature >= n_features) {
            return Err(MbklError::DimensionMismatch {
                expected: s.feature + 1,
                found: n_features,
            });
        }
        // Stored in feature order so prediction walks `x` sequentially.
        let mut order: Vec<usize> = (0..bank.len()).collect();
        order.sort_by_key(|&k| bank.stumps[k].feature);
        let bank = StumpBank {
            stumps: order.iter().map(|&k| bank.stumps[k]).collect(),
            theta: order.iter().map(|&k| bank.theta[k]).collect(),
        };
        let weights = weights
            .iter()
            .map(|w: &Vec<f64>| order.iter().flat_map(|&k| [w[2 * k], w[2 * k + 1]]).collect())
            .collect();
        Ok(MbklModel {
            kind,
            n_features,
            class_names,
            normalization,
            bank,
            weights,
            biases: raw.iter().map(|m| m.bias).collect(),
            c1,
            c2,
            cuts: RawCuts::default(),
        })
    }

    /// Same model without the stumps whose kernel weight is zero.
    pub fn pruned(&self) -> MbklModel {
        let keep: Vec<usize> = (0..self.bank.len()).filter(|&k| self.bank.theta[k] > 0.0).collect();
        let mut out = self.clone();
        out.cuts = RawCuts::default();
        out.bank = StumpBank {
            stumps: keep.iter().map(|&k| self.bank.stumps[k]).collect(),
            theta: keep.iter().map(|&k| self.bank.theta[k]).collect(),
        };
        out.weights = self
            .weights
            .iter()
            .map(|w| keep.iter().flat_map(|&k| [w[2 * k], w[2 * k + 1]]).collect())
            .collect();
        out
    }

    fn tests(&self) -> &[StumpTest] {
        self.cuts.0.get_or_init(|| {
            self.bank
                .stumps
                .iter()
                .map(|s| {
                    let cut = match &self.normalization {
                        Some(p) => p.raw_cut(s.feature, s.threshold),
                        None => {
                            // `v > t` is `v >= next_up(t)`, except when `t` is +inf.
                            let lo = s.threshold.next_up();
                            let hi = if s.threshold == f64::INFINITY { f64::NAN } else { lo };
                            RawCut { lo, hi }
                        }
                    };
                    StumpTest { feature: s.feature, cut }
                })
                .collect()
        })
    }

    /// Per-class scores. Each stump reads one coordinate of `x`.
    pub fn scores<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Vec<f64>> {
        if x.dim() != self.n_features {
            return Err(MbklError::DimensionMismatch {
                expected: self.n_features,
                found: x.dim(),
            });
        }
        let tests = self.tests();
        let fires = |k: usize| {
            let t = &tests[k];
            let v = x.feature(t.feature);
            t.cut.passes(v, || {
                let s = &self.bank.stumps[k];
                match &self.normalization {
                    Some(p) => p.transform(s.feature, v) > s.threshold,
                    None => v > s.threshold,
                }
            })
        };
        let mut scores = self.biases.clone();
        if self.n_classes() == 2 {
            let (w0, w1) = (&self.weights[0], &self.weights[1]);
            let (mut s0, mut s1) = (0.0, 0.0);
            for k in 0..tests.len() {
                let col = 2 * k + usize::from(!fires(k));
                s0 += w0[col];
                s1 += w1[col];
            }
            scores[0] += s0;
            scores[1] += s1;
        } else {
            let mut acc = vec![0.0; self.n_classes()];
            for k in 0..tests.len() {
                let col = 2 * k + usize::from(!fires(k));
                for (a, w) in acc.iter_mut().zip(&self.weights) {
                    *a += w[col];
                }
            }
            for (s, a) in scores.iter_mut().zip(acc) {
                *s += a;
            }
        }
        Ok(scores)
    }

    pub fn predict<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Prediction> {
        let scores = self.scores(x)?;
        Ok(Prediction {
            class: argmax(&scores),
            scores,
        })
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict(x.row(i)).map(|p| p.class))
            .collect()
    }
}

/// One-vs-rest L2-SVMs on shared features. With two classes the second
/// problem is the first with labels flipped, whose solution is the negated
/// one, so only one is solved.
pub(crate) fn one_vs_rest(
    x: &Matrix,
    gram: &Gram,
    labels: &[usize],
    n_classes: usize,
    cfg: &SolverConfig,
) -> Result<Vec<LinearModel>> {
    let solve = |c: usize| {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        train_l2_with_gram(
            x,
            gram,
            &y,
            &SolverConfig {
                allow_single_class: true,
                ..*cfg
            },
        )
    };
    if n_classes == 2 {
        let m1 = solve(1)?;
        let m0 = LinearModel {
            weights: m1.weights.iter().map(|w| -w).collect(),
            bias: -m1.bias,
            ..m1.clone()
        };
        return Ok(vec![m0, m1]);
    }
    (0..n_classes).into_par_iter().map(solve).collect()
}

/// Everything Steps 0 and 1 need from one training set, computed once and
/// shared by every `C` tried on it.
pub struct Prepared {
    pub normalization: Option<NormalizationParams>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub stumps: Vec<Stump>,
    pub bits: BitMatrix,
    pub signs: Vec<Vec<i8>>,
    pub step1: Option<Step1Set>,
    pub timings: Timings,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

impl Prepared {
    /// Normalizes, draws and evaluates the stumps and, when `with_step1`,
    /// runs Step 0 and builds the Step 1 sample.
    pub fn new(train: &Dataset, cfg: &TrainConfig, with_step1: bool) -> Result<Prepared> {
        cfg.validate()?;
        let start = Instant::now();
        let mut timings = Timings::default();
        let t = Instant::now();
        let (normalization, data) = if cfg.normalize {
            let p = fit_logistic_normalizer(train);
            let d = apply_normalizer(&p, train)?;
            (Some(p), d)
        } else {
            (None, train.clone())
        };
        timings.normalize = secs(t);

        let t = Instant::now();
        let k = cfg.n_stumps(data.n_features());
        let stumps = generate_stumps(data.features(), k, seed::derive(cfg.seed, Stage::Stumps, &[]));
        let bits = evaluate_bank(&stumps, data.features())?;
        timings.stumps = secs(t);

        let labels = data.labels().to_vec();
        let n_classes = data.n_classes();
        let (signs, step1) = if with_step1 {
            let t = Instant::now();
            let signs = (0..n_classes)
                .into_par_iter()
                .map(|c| step0_init(&bits, &labels, c, cfg.step0_mode))
                .collect::<Result<Vec<_>>>()?;
            timings.step0 = secs(t);
            let t = Instant::now();
            let set = sample_step1_set(
                &bits,
                &signs,
                &labels,
                cfg.neg_pos_ratio,
                cfg.step1_cap,
                seed::derive(cfg.seed, Stage::Step1Sampling, &[]),
            )?;
            timings.step1 = secs(t);
            (signs, Some(set))
        } else {
            (Vec::new(), None)
        };
        timings.total = secs(start);
        Ok(Prepared {
            normalization,
            labels,
            class_names: data.class_names().to_vec(),
            n_features: data.n_features(),
            stumps,
            bits,
            signs,
            step1,
            timings,
        })
    }

    /// Kernel weight of every stump for penalty `c1`; zero for stumps that
    /// Step 0 discarded or Step 1 did not select.
    pub fn learn_theta(&self, c1: f64, cfg: &TrainConfig) -> Result<Vec<f64>> {
        let set = self
            .step1
            .as_ref()
            .ok_or_else(|| MbklError::InvalidConfig("step 1 sample was not prepared".into()))?;
        let learned = step1_learn_theta(set, &cfg.solver(c1))?;
        Ok(self.scatter_theta(set, learned))
    }

    /// `learn_theta` for each of `c1s`, warm-starting the solver along the list.
    pub fn learn_theta_path(&self, c1s: &[f64], cfg: &TrainConfig) -> Result<Vec<Vec<f64>>> {
        let set = self
            .step1
            .as_ref()
            .ok_or_else(|| MbklError::InvalidConfig("step 1 sample was not prepared".into()))?;
        let learned = step1_learn_theta_path(set, c1s, &cfg.solver(c1s.first().copied().unwrap_or(cfg.c1)))?;
        Ok(learned.into_iter().map(|l| self.scatter_theta(set, l)).collect())
    }

    fn scatter_theta(&self, set: &Step1Set, learned: Vec<f64>) -> Vec<f64> {
        let mut theta = vec![0.0; self.stumps.len()];
        for (&k, t) in set.columns.iter().zip(learned) {
            theta[k] = t;
        }
        theta
    }

    /// Step 2 on the stumps `active` with kernel weights `theta`, once per
    /// entry of `c2s`; the features and Gram matrix are shared.
    pub fn fit_step2(
        &self,
        kind: BankKind,
        active: &[usize],
        theta: &[f64],
        c1: f64,
        c2s: &[f64],
        cfg: &TrainConfig,
    ) -> Result<Vec<MbklModel>> {
        let bits = self.bits.select_rows(active);
        let x = step2_feature_map(&bits, theta)?;
        let gram = Gram::linear(&x);
        let bank = StumpBank::new(active.iter().map(|&k| self.stumps[k]).collect(), theta.to_vec())?;
        c2s.iter()
            .map(|&c2| {
                let raw = one_vs_rest(&x, &gram, &self.labels, self.class_names.len(), &cfg.solver(c2))?;
                MbklModel::from_parts(
                    kind,
                    self.n_features,
                    self.class_names.clone(),
                    self.normalization.clone(),
                    bank.clone(),
                    &raw,
                    c1,
                    c2,
                )
            })
            .collect()
    }
}

/// Full pipeline with the penalties fixed to `cfg.c1` and `cfg.c2`.
pub fn train(train: &Dataset, cfg: &TrainConfig) -> Result<(MbklModel, Timings)> {
    let start = Instant::now();
    let prep = Prepared::new(train, cfg, true)?;
    let mut timings = prep.timings;
    let t = Instant::now();
    let theta = prep.learn_theta(cfg.c1, cfg)?;
    timings.step1 += secs(t);
    let active: Vec<usize> = (0..theta.len()).filter(|&k| theta[k] > 0.0).collect();
    if active.is_empty() {
        return Err(MbklError::EmptyBank);
    }
    let theta: Vec<f64> = active.iter().map(|&k| theta[k]).collect();
    debug!("step 1 kept {} of {} stumps", active.len(), prep.stumps.len());
    let t = Instant::now();
    let mut models = prep.fit_step2(BankKind::Mbkl, &active, &theta, cfg.c1, &[cfg.c2], cfg)?;
    timings.step2 = secs(t);
    timings.total = secs(start);
    Ok((models.remove(0), timings))
}

/// Kernel weights fixed to one for every stump; Steps 0 and 1 are skipped.
pub fn train_theta1_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<(MbklModel, Timings)> {
    let start = Instant::now();
    let prep = Prepared::new(train, cfg, false)?;
    let mut timings = prep.timings;
    let t = Instant::now();
    let active: Vec<usize> = (0..prep.stumps.len()).collect();
    let theta = vec![1.0; active.len()];
    let mut models = prep.fit_step2(BankKind::Theta1, &active, &theta, cfg.c1, &[cfg.c2], cfg)?;
    timings.step2 = secs(t);
    timings.total = secs(start);
    Ok((models.remove(0), timings))
}

/// One L1-SVM per class on the `+-1` stump responses, each selecting its own
/// stumps. Returned as a bank model over the union of the supports, together
/// with each class's support.
pub fn train_l1_bits_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<(MbklModel, Vec<Vec<usize>>, Timings)> {
    let start = Instant::now();
    let prep = Prepared::new(train, cfg, false)?;
    let mut timings = prep.timings;
    let t = Instant::now();
    let n = prep.bits.n_samples();
    let k = prep.stumps.len();
    let tb = prep.bits.transpose();
    let mut x = Matrix::zeros(n, k);
    for j in 0..n {
        let row = x.row_mut(j);
        for (kk, v) in row.iter_mut().enumerate() {
            *v = if tb.get(j, kk) { 1.0 } else { -1.0 };
        }
    }
    let n_classes = prep.class_names.len();
    let solver = SolverConfig {
        allow_single_class: true,
        ..cfg.solver(cfg.c1)
    };
    let per_class: Vec<LinearModel> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = prep.labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_l1(&x, &y, &solver)
        })
        .collect::<Result<_>>()?;
    let supports: Vec<Vec<usize>> = per_class
        .iter()
        .map(|m| (0..k).filter(|&i| m.weights[i] != 0.0).collect())
        .collect();
    let mut union: Vec<usize> = supports.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    let bank = StumpBank::new(union.iter().map(|&i| prep.stumps[i]).collect(), vec![1.0; union.len()])?;
    // +-1 responses: w (2 bit - 1) = w on a firing stump and -w otherwise.
    let raw: Vec<LinearModel> = per_class
        .iter()
        .map(|m| LinearModel {
            weights: union.iter().flat_map(|&i| [m.weights[i], -m.weights[i]]).collect(),
            ..m.clone()
        })
        .collect();
    let model = MbklModel::from_parts(
        BankKind::L1Bits,
        prep.n_features,
        prep.class_names.clone(),
        prep.normalization.clone(),
        bank,
        &raw,
        cfg.c1,
        cfg.c2,
    )?;
    timings.step1 = secs(t);
    timings.total = secs(start);
    Ok((model, supports, timings))
}

/// One-vs-rest linear SVM on the (optionally normalized) raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOvr {
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub normalization: Option<NormalizationParams>,
    pub models: Vec<LinearModel>,
    pub c: f64,
}

impl LinearOvr {
    pub fn scores<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Vec<f64>> {
        if x.dim() != self.n_features {
            return Err(MbklError::DimensionMismatch {
                expected: self.n_features,
                found: x.dim(),
            });
        }
        let row: Vec<f64> = (0..self.n_features)
            .map(|j| match &self.normalization {
                Some(p) => p.transform(j, x.feature(j)),
                None => x.feature(j),
            })
            .collect();
        Ok(self.models.iter().map(|m| m.score(&row)).collect())
    }

    pub fn predict<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Prediction> {
        let scores = self.scores(x)?;
        Ok(Prediction {
            class: argmax(&scores),
            scores,
        })
    }
}

pub fn train_linear_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<(LinearOvr, Timings)> {
    cfg.validate()?;
    let start = Instant::now();
    let (normalization, data) = if cfg.normalize {
        let p = fit_logistic_normalizer(train);
        let d = apply_normalizer(&p, train)?;
        (Some(p), d)
    } else {
        (None, train.clone())
    };
    let gram = Gram::linear(data.features());
    let models = one_vs_rest(data.features(), &gram, data.labels(), data.n_classes(), &cfg.solver(cfg.c2))?;
    let total = secs(start);
    Ok((
        LinearOvr {
            n_features: data.n_features(),
            class_names: data.class_names().to_vec(),
            normalization,
            models,
            c: cfg.c2,
        },
        Timings {
            step2: total,
            total,
            ..Default::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [(i as f64 + 0.5) / n as f64]).collect();
        let labels = (0..n).map(|i| usize::from((i as f64 + 0.5) / n as f64 > 0.5)).collect();
        Dataset::from_parts(Matrix::from_rows(&rows).unwrap(), labels, 2).unwrap()
    }

    fn accuracy(model: &MbklModel, ds: &Dataset) -> f64 {
        let pred = model.predict_matrix(ds.features()).unwrap();
        pred.iter().zip(ds.labels()).filter(|(a, b)| a == b).count() as f64 / ds.n_samples() as f64
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            initial_stumps: Some(200),
            c1: 10.0,
            c2: 10.0,
            seed: 5,
            normalize: false,
            ..Default::default()
        }
    }

    #[test]
    fn prune_keeps_positive_weights() {
        let stumps: Vec<Stump> = (0..4).map(|i| Stump::new(0, i as f64)).collect();
        let bank = StumpBank::new(stumps, vec![1.0; 4]).unwrap();
        let p = prune_bank(&bank, &[0.0, 2.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.theta, vec![2.0, 1.0]);
        assert_eq!(p.stumps[0].threshold, 1.0);
        assert!(prune_bank(&bank, &[0.0; 4]).unwrap().is_empty());
    }

    #[test]
    fn feature_map_pairs() {
        let m = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let bits = evaluate_bank(&[Stump::new(0, 0.5)], &m).unwrap();
        let x = step2_feature_map(&bits, &[2.0]).unwrap();
        assert_eq!(x.row(0), &[2.0, 0.0]);
        assert_eq!(x.row(1), &[0.0, 2.0]);
    }

    #[test]
    fn zero_model_predicts_by_bias() {
        let model = MbklModel {
            kind: BankKind::Mbkl,
            n_features: 1,
            class_names: vec!["a".into(), "b".into()],
            normalization: None,
            bank: StumpBank::new(vec![Stump::new(0, 0.0)], vec![1.0]).unwrap(),
            weights: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            biases: vec![0.1, -0.2],
            c1: 1.0,
            c2: 1.0,
            cuts: RawCuts::default(),
        };
        assert_eq!(model.predict(&[3.0][..]).unwrap().class, 0);
        assert!(model.predict(&[3.0, 1.0][..]).is_err());
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
    }

    #[test]
    fn separable_toy_is_learned() {
        let ds = toy(40);
        let (model, timings) = train(&ds, &toy_cfg()).unwrap();
        assert_eq!(accuracy(&model, &ds), 1.0);
        assert!(model.bank.theta.iter().all(|&t| t > 0.0));
        assert!(timings.total >= 0.0);
        let (theta1, _) = train_theta1_baseline(&ds, &toy_cfg()).unwrap();
        assert_eq!(theta1.bank.len(), 200);
        assert!(theta1.bank.theta.iter().all(|&t| t == 1.0));
        assert_eq!(accuracy(&theta1, &ds), 1.0);
        let (l1, supports, _) = train_l1_bits_baseline(&ds, &toy_cfg()).unwrap();
        assert!(accuracy(&l1, &ds) >= 0.95);
        assert!(supports.iter().flatten().all(|&k| k < 200));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy(30);
        let a = train(&ds, &toy_cfg()).unwrap().0;
        let b = train(&ds, &toy_cfg()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn linear_baseline_separates_toy() {
        let ds = toy(20);
        let cfg = TrainConfig {
            c2: 1000.0,
            ..toy_cfg()
        };
        let (m, _) = train_linear_baseline(&ds, &cfg).unwrap();
        for i in 0..ds.n_samples() {
            assert_eq!(m.predict(ds.features().row(i)).unwrap().class, ds.labels()[i]);
        }
    }
}
