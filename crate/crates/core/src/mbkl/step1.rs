//! Shared kernel-weight learning: stump responses, the sampled two-class
//! problem and the clamped L1 solution.

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{MbklError, Result};
use crate::linsvm::{train_l1, train_l1_path, SolverConfig};
use crate::matrix::Matrix;
use crate::seed::{self, Stage};
use crate::stumps::BitMatrix;

/// Response matrix of one class: a column per stump with nonzero sign,
/// entry `sign_k * (2 bit - 1)`. Returns the matrix and the retained stump
/// indices.
pub fn build_responses(bits: &BitMatrix, signs: &[i8]) -> Result<(Matrix, Vec<usize>)> {
    if signs.len() != bits.n_stumps() {
        return Err(MbklError::DimensionMismatch {
            expected: bits.n_stumps(),
            found: signs.len(),
        });
    }
    let kept: Vec<usize> = (0..signs.len()).filter(|&k| signs[k] != 0).collect();
    let n = bits.n_samples();
    let mut x = Matrix::zeros(n, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let s = f64::from(signs[k]);
        for j in 0..n {
            x.set(j, c, if bits.get(k, j) { s } else { -s });
        }
    }
    Ok((x, kept))
}

/// The two-class problem solved for the shared kernel weights.
#[derive(Debug, Clone)]
pub struct Step1Set {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Stump index of every column of `x`.
    pub columns: Vec<usize>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Splits `total` over bins holding at most `caps[c]` each as evenly as
/// possible; leftovers go to the lowest bins first.
pub(crate) fn water_fill(total: usize, caps: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; caps.len()];
    let mut left = total.min(caps.iter().sum());
    while left > 0 {
        let open: Vec<usize> = (0..caps.len()).filter(|&c| out[c] < caps[c]).collect();
        let share = left / open.len();
        if share == 0 {
            for &c in open.iter().take(left) {
                out[c] += 1;
            }
            break;
        }
        for &c in &open {
            let add = share.min(caps[c] - out[c]);
            out[c] += add;
            left -= add;
        }
    }
    out
}

/// Builds the Step 1 rows: every training sample once as a positive with the
/// responses of its own class, and `ratio` times as many negatives made of
/// responses of a wrong class, balanced over the negatives' source classes
/// and capped to `cap` rows in total.
pub fn sample_step1_set(
    bits: &BitMatrix,
    signs: &[Vec<i8>],
    labels: &[usize],
    ratio: f64,
    cap: usize,
    seed: u64,
) -> Result<Step1Set> {
    let n = bits.n_samples();
    let n_classes = signs.len();
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(MbklError::InvalidConfig(format!("neg/pos ratio must be positive, got {ratio}")));
    }
    if cap < 2 {
        return Err(MbklError::InvalidConfig("step 1 cap must allow at least 2 rows".into()));
    }
    if labels.len() != n {
        return Err(MbklError::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n_classes < 2 {
        return Err(MbklError::SingleClass);
    }
    if let Some(s) = signs.iter().find(|s| s.len() != bits.n_stumps()) {
        return Err(MbklError::DimensionMismatch {
            expected: bits.n_stumps(),
            found: s.len(),
        });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(MbklError::MissingClass(l));
        }
        by_class[l].push(i);
    }

    // Positives, subsampled per class only when the cap forces it.
    let pos_budget = ((cap as f64 / (1.0 + ratio)).floor() as usize).clamp(1, n);
    let mut positives: Vec<usize> = if pos_budget >= n {
        (0..n).collect()
    } else {
        let caps: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let quota = proportional(pos_budget, &caps);
        let mut chosen = Vec::new();
        for (c, members) in by_class.iter().enumerate() {
            let mut m = members.clone();
            m.shuffle(&mut seed::rng(seed::derive(seed, Stage::Step1Sampling, &[0, c as u64])));
            chosen.extend_from_slice(&m[..quota[c]]);
        }
        chosen.sort_unstable();
        chosen
    };
    positives.dedup();
    let n_pos = positives.len();

    let available: Vec<usize> = by_class.iter().map(|m| m.len() * (n_classes - 1)).collect();
    let total_available: usize = available.iter().sum();
    let wanted = (ratio * n_pos as f64).round() as usize;
    if wanted > total_available {
        warn!("neg/pos ratio {ratio} asks for {wanted} negatives but only {total_available} exist; using all");
    }
    let n_neg_target = wanted.min(total_available).min(cap - n_pos);
    let quota = water_fill(n_neg_target, &available);

    let mut negatives: Vec<(usize, usize)> = Vec::with_capacity(n_neg_target);
    for (c, members) in by_class.iter().enumerate() {
        if quota[c] == 0 {
            continue;
        }
        let wrong: Vec<usize> = (0..n_classes).filter(|&t| t != c).collect();
        let mut m = members.clone();
        m.shuffle(&mut seed::rng(seed::derive(seed, Stage::Step1Sampling, &[1, c as u64])));
        // Targets rotate per sample so each wrong class gets an even share.
        let mut taken = 0;
        'fill: for round in 0..wrong.len() {
            for (pos, &i) in m.iter().enumerate() {
                if taken == quota[c] {
                    break 'fill;
                }
                negatives.push((i, wrong[(pos + round) % wrong.len()]));
                taken += 1;
            }
        }
    }
    let n_neg = negatives.len();

    let columns: Vec<usize> = (0..bits.n_stumps())
        .filter(|&k| signs.iter().any(|s| s[k] != 0))
        .collect();
    let t = bits.transpose();
    let mut x = Matrix::zeros(n_pos + n_neg, columns.len());
    let mut y = Vec::with_capacity(n_pos + n_neg);
    let rows = positives
        .iter()
        .map(|&i| (i, labels[i], 1.0))
        .chain(negatives.iter().map(|&(i, c)| (i, c, -1.0)));
    for (r, (i, class, label)) in rows.enumerate() {
        let s = &signs[class];
        let out = x.row_mut(r);
        for (o, &k) in out.iter_mut().zip(&columns) {
            let sign = f64::from(s[k]);
            *o = if t.get(i, k) { sign } else { -sign };
        }
        y.push(label);
    }
    Ok(Step1Set {
        x,
        y,
        columns,
        n_pos,
        n_neg,
    })
}

/// Largest-remainder apportionment of `total` proportional to `sizes`.
fn proportional(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    let mut out: Vec<usize> = sizes.iter().map(|&s| s * total / sum).collect();
    let mut rest: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(c, &s)| (s * total % sum, c))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - out.iter().sum::<usize>();
    for (_, c) in rest {
        if left == 0 {
            break;
        }
        if out[c] < sizes[c] {
            out[c] += 1;
            left -= 1;
        }
    }
    out
}

/// Kernel weights for the columns of `set`: the L1-SVM weights with negative
/// entries set to zero. The bias is not used downstream.
pub fn step1_learn_theta(set: &Step1Set, cfg: &SolverConfig) -> Result<Vec<f64>> {
    if set.x.cols() == 0 {
        return Ok(Vec::new());
    }
    let cfg = SolverConfig {
        allow_single_class: true,
        ..*cfg
    };
    let model = train_l1(&set.x, &set.y, &cfg)?;
    Ok(clamp(&model.weights))
}

/// `step1_learn_theta` for several penalties, warm-starting each solve.
pub fn step1_learn_theta_path(set: &Step1Set, c1s: &[f64], cfg: &SolverConfig) -> Result<Vec<Vec<f64>>> {
    if set.x.cols() == 0 {
        return Ok(vec![Vec::new(); c1s.len()]);
    }
    let cfg = SolverConfig {
        allow_single_class: true,
        ..*cfg
    };
    let models = train_l1_path(&set.x, &set.y, c1s, &cfg)?;
    Ok(models.iter().map(|m| clamp(&m.weights)).collect())
}

fn clamp(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&v| v.max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stumps::{evaluate_bank, Stump};

    fn bits_for(x: &[f64], thresholds: &[f64]) -> BitMatrix {
        let m = Matrix::from_rows(&x.iter().map(|&v| [v]).collect::<Vec<_>>()).unwrap();
        let stumps: Vec<Stump> = thresholds.iter().map(|&t| Stump::new(0, t)).collect();
        evaluate_bank(&stumps, &m).unwrap()
    }

    #[test]
    fn responses_follow_signs() {
        let bits = bits_for(&[0.2, 0.8], &[0.5, 0.5, 0.5]);
        let (x, kept) = build_responses(&bits, &[1, 0, -1]).unwrap();
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(x.row(0), &[-1.0, 1.0]);
        assert_eq!(x.row(1), &[1.0, -1.0]);
    }

    #[test]
    fn water_fill_balances() {
        assert_eq!(water_fill(10, &[3, 100, 100]), vec![3, 4, 3]);
        assert_eq!(water_fill(5, &[1, 1]), vec![1, 1]);
        assert_eq!(water_fill(4, &[10, 10]), vec![2, 2]);
    }

    #[test]
    fn two_class_ratio_one_uses_every_sample_once() {
        let bits = bits_for(&[0.1, 0.2, 0.7, 0.9, 0.95], &[0.5, 0.15]);
        let labels = [0, 0, 1, 1, 1];
        let signs = vec![vec![-1, 1], vec![1, -1]];
        let set = sample_step1_set(&bits, &signs, &labels, 1.0, 50_000, 3).unwrap();
        assert_eq!((set.n_pos, set.n_neg), (5, 5));
        // Each negative is the other class's responses, which here negate the
        // sample's own responses.
        for i in 0..5 {
            let pos = set.x.row(i).to_vec();
            let neg_row = (5..10)
                .find(|&r| set.x.row(r).iter().zip(&pos).all(|(a, b)| *a == -*b))
                .is_some();
            assert!(neg_row);
        }
    }

    #[test]
    fn three_classes_ratio_two_split_evenly() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        let bits = bits_for(&xs, &[0.3, 0.6]);
        let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let signs = vec![vec![-1, -1], vec![1, -1], vec![1, 1]];
        let set = sample_step1_set(&bits, &signs, &labels, 2.0, 50_000, 9).unwrap();
        assert_eq!((set.n_pos, set.n_neg), (12, 24));
    }

    #[test]
    fn cap_limits_rows() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let bits = bits_for(&xs, &[10.0, 30.0]);
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let signs = vec![vec![1, 1], vec![-1, -1]];
        let set = sample_step1_set(&bits, &signs, &labels, 1.0, 20, 1).unwrap();
        assert_eq!(set.n_pos + set.n_neg, 20);
        assert_eq!(set.n_pos, 10);
    }

    #[test]
    fn degenerate_labels_give_zero_theta() {
        let set = Step1Set {
            x: Matrix::from_rows(&[[1.0, -1.0], [1.0, 1.0]]).unwrap(),
            y: vec![1.0, 1.0],
            columns: vec![0, 1],
            n_pos: 2,
            n_neg: 0,
        };
        assert_eq!(step1_learn_theta(&set, &SolverConfig::default()).unwrap(), vec![0.0, 0.0]);
    }
}
