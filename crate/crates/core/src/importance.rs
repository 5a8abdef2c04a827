//! Permutation variable importance on a 3-MAD trimmed validation set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::{shrinkage_step, Ensemble};
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::stats::median_in_place;

/// Consistency constant applied to the raw median absolute deviation.
pub const MAD_CONSTANT: f64 = 1.438;
/// Width of the trimming band in MAD units.
pub const TRIM_MADS: f64 = 3.0;

/// `MAD_CONSTANT · median |v − median(v)|`.
pub fn robust_mad(values: &[f64]) -> f64 {
    robust_mad_with(values, MAD_CONSTANT)
}

pub fn robust_mad_with(values: &[f64], constant: f64) -> f64 {
    assert!(!values.is_empty(), "MAD of empty slice");
    let mut v = values.to_vec();
    let med = median_in_place(&mut v);
    for x in v.iter_mut() {
        *x = (*x - med).abs();
    }
    constant * median_in_place(&mut v)
}

/// Indices whose prediction error lies within 3 MAD of the median error.
pub fn trim_validation(predictions: &[f64], y: &[f64]) -> Result<Vec<usize>> {
    trim_validation_with(predictions, y, MAD_CONSTANT)
}

/// As [`trim_validation`] with a custom MAD constant.
///
/// When the MAD is zero only rows whose error equals the median are kept,
/// so a constant error vector keeps everything.
pub fn trim_validation_with(predictions: &[f64], y: &[f64], mad_constant: f64) -> Result<Vec<usize>> {
    if predictions.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} responses",
            predictions.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let errors: Vec<f64> = predictions.iter().zip(y).map(|(p, t)| p - t).collect();
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::NonFinite {
            context: "prediction errors",
            value: *bad,
        });
    }
    let mut scratch = errors.clone();
    let med = median_in_place(&mut scratch);
    let mad = robust_mad_with(&errors, mad_constant);
    let kept = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let dev = (**e - med).abs();
            if mad > 0.0 {
                dev < TRIM_MADS * mad
            } else {
                dev == 0.0
            }
        })
        .map(|(i, _)| i)
        .collect();
    Ok(kept)
}

/// Root-mean-square error over the given rows.
pub(crate) fn rmse_over(predictions: &[f64], y: &[f64], rows: &[usize]) -> f64 {
    let sse: f64 = rows.iter().map(|&i| (predictions[i] - y[i]).powi(2)).sum();
    (sse / rows.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub scores: Vec<f64>,
    pub n_kept: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl ImportanceReport {
    /// Feature indices ordered by decreasing importance (stable on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceOptions {
    pub seed: u64,
    /// Shuffles averaged per feature.
    pub repeats: usize,
    pub mad_constant: f64,
}

impl ImportanceOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            repeats: 1,
            mad_constant: MAD_CONSTANT,
        }
    }
}

/// Seeded permutation of `0..n` for feature `j`, repeat `r`.
fn seeded_permutation(seed: u64, j: usize, r: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((j as u64) << 16) | r as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Trimmed-RMSE increase when each feature column is permuted.
pub fn permutation_importance(model: &Ensemble, val: &Dataset, seed: u64) -> Result<ImportanceReport> {
    permutation_importance_with(model, val, &ImportanceOptions::new(seed))
}

pub fn permutation_importance_with(
    model: &Ensemble,
    val: &Dataset,
    opts: &ImportanceOptions,
) -> Result<ImportanceReport> {
    if opts.repeats == 0 {
        return Err(Error::InvalidArgument("importance repeats must be at least 1".into()));
    }
    let n = val.n_rows();
    let seed = opts.seed;
    let scores = importance_with_permutations(model, val, opts.mad_constant, opts.repeats, |j, r| {
        seeded_permutation(seed, j, r, n)
    })?;
    let base = model.predict_checked(&val.x)?;
    let n_kept = trim_validation_with(&base, &val.y, opts.mad_constant)?.len();
    Ok(ImportanceReport {
        scores,
        n_kept,
        seed: opts.seed,
        repeats: opts.repeats,
    })
}

/// Core computation with caller-supplied permutations.
///
/// Per-step tree outputs on the validation rows are cached so that permuting
/// column `j` only re-evaluates trees that split on `j`. Sums are formed in
/// the same order as [`Ensemble::predict_row`].
pub fn importance_with_permutations<P>(
    model: &Ensemble,
    val: &Dataset,
    mad_constant: f64,
    repeats: usize,
    mut permutation: P,
) -> Result<Vec<f64>>
where
    P: FnMut(usize, usize) -> Vec<usize>,
{
    let n = val.n_rows();
    if n == 0 {
        return Err(Error::Empty("validation set"));
    }
    let base = model.predict_checked(&val.x)?;
    let kept = trim_validation_with(&base, &val.y, mad_constant)?;
    if kept.is_empty() {
        return Err(Error::EmptyTrimmedSet);
    }
    let base_rmse = rmse_over(&base, &val.y, &kept);

    let steps = &model.steps[..model.stop_index];
    let init_out: Vec<f64> = val.x.rows().map(|r| model.init.predict_row(r)).collect();
    let step_out: Vec<Vec<f64>> = steps
        .iter()
        .map(|s| val.x.rows().map(|r| s.tree.predict_row(r)).collect())
        .collect();
    let multipliers: Vec<f64> = steps.iter().map(|s| shrinkage_step(s.alpha, model.gamma)).collect();

    let p = val.n_features();
    let mut scores = vec![0.0; p];
    let mut permuted: Matrix = val.x.clone();
    let mut preds = vec![0.0; n];
    for j in 0..p {
        if !model.uses_feature(j) {
            continue;
        }
        let init_uses = model.init.uses_feature(j);
        let uses: Vec<bool> = steps.iter().map(|s| s.tree.uses_feature(j)).collect();
        let column = val.x.column(j);
        let mut total = 0.0;
        for r in 0..repeats {
            let perm = permutation(j, r);
            if !is_permutation(&perm, n) {
                return Err(Error::InvalidArgument(format!("feature {j}: not a permutation of 0..{n}")));
            }
            for (i, &src) in perm.iter().enumerate() {
                permuted.set(i, j, column[src]);
            }
            for (i, pred) in preds.iter_mut().enumerate() {
                let row = permuted.row(i);
                let mut f = if init_uses { model.init.predict_row(row) } else { init_out[i] };
                for (t, s) in steps.iter().enumerate() {
                    let h = if uses[t] { s.tree.predict_row(row) } else { step_out[t][i] };
                    f += multipliers[t] * h;
                }
                *pred = f;
            }
            total += rmse_over(&preds, &val.y, &kept) - base_rmse;
        }
        for (i, v) in column.iter().enumerate() {
            permuted.set(i, j, *v);
        }
        scores[j] = total / repeats as f64;
    }
    Ok(scores)
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    perm.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// Share of `true_set` whose score reaches the `|true_set|`-th largest score.
pub fn recovery_fraction(report: &ImportanceReport, true_set: &[usize]) -> f64 {
    recovery_from_scores(&report.scores, true_set)
}

pub fn recovery_from_scores(scores: &[f64], true_set: &[usize]) -> f64 {
    let m = true_set.len();
    if m == 0 || scores.is_empty() {
        return 0.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cutoff = sorted[m.min(sorted.len()) - 1];
    let hits = true_set
        .iter()
        .filter(|&&j| j < scores.len() && scores[j] >= cutoff)
        .count();
    hits as f64 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::Step;
    use crate::tree::{fit_tree, SplitCriterion, Tree};
    use proptest::prelude::*;

    #[test]
    fn mad_examples() {
        assert!((robust_mad(&[0.0, 0.1, -0.1, 50.0]) - 0.1438).abs() < 1e-12);
        assert_eq!(robust_mad(&[2.0; 5]), 0.0);
        let a = robust_mad(&[1.0, 4.0, -2.0, 7.5, 3.0]);
        let b = robust_mad(&[3.0, 12.0, -6.0, 22.5, 9.0]);
        assert!((b - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn trimming_examples() {
        let y = [0.0; 4];
        let kept = trim_validation(&[0.0, 0.1, -0.1, 50.0], &y).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        let kept = trim_validation(&[3.0; 4], &y).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3]);
        assert!(trim_validation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_sample_is_untrimmed() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // draws beyond ±2.5 are rejected, well inside the 3-MAD band
        let e: Vec<f64> = std::iter::repeat_with(|| StandardNormal.sample(&mut rng))
            .filter(|z: &f64| z.abs() < 2.5)
            .take(200)
            .collect();
        // scalar oracle
        let mut s = e.clone();
        s.sort_by(f64::total_cmp);
        let med = (s[99] + s[100]) / 2.0;
        let mut d: Vec<f64> = e.iter().map(|v| (v - med).abs()).collect();
        d.sort_by(f64::total_cmp);
        let mad = 1.438 * (d[99] + d[100]) / 2.0;
        let expected: Vec<usize> = (0..200).filter(|&i| (e[i] - med).abs() < 3.0 * mad).collect();
        let kept = trim_validation(&e, &vec![0.0; 200]).unwrap();
        assert_eq!(kept, expected);
        assert_eq!(kept.len(), 200);
    }

    #[test]
    fn recovery_examples() {
        // true set {0..4}; top five are {0,1,2,8,9}
        let scores = [9.0, 8.0, 7.0, 1.0, 0.5, 0.1, 0.0, 0.2, 6.0, 5.0];
        assert!((recovery_from_scores(&scores, &[0, 1, 2, 3, 4]) - 0.6).abs() < 1e-15);
        assert_eq!(recovery_from_scores(&[1.0; 10], &[0, 1, 2, 3, 4]), 1.0);
        let dominant = [5.0, 4.0, 3.0, 2.0, 1.5, 0.1, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(recovery_from_scores(&dominant, &[0, 1, 2, 3, 4]), 1.0);
    }

    fn toy_model() -> (Ensemble, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 5.0 * r[0] + (r[1] > 0.5) as u8 as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let data = Dataset::unnamed(x.clone(), y.clone()).unwrap();
        let t1 = fit_tree(&x, &y, SplitCriterion::LeastSquares, 2, 3).unwrap();
        let resid: Vec<f64> = (0..60).map(|i| y[i] - t1.predict_row(x.row(i))).collect();
        let t2 = fit_tree(&x, &resid, SplitCriterion::LeastSquares, 1, 3).unwrap();
        let mut e = Ensemble::from_init(Tree::constant(0.0), 1.0);
        e.steps.push(Step { alpha: 1.0, tree: t1 });
        e.steps.push(Step { alpha: 0.7, tree: t2 });
        e.stop_index = 2;
        (e, data)
    }

    #[test]
    fn unused_feature_and_identity_permutation() {
        let (model, data) = toy_model();
        assert!(!model.uses_feature(2));
        let report = permutation_importance(&model, &data, 1).unwrap();
        assert_eq!(report.scores[2], 0.0);
        assert!(report.scores[0] > 0.0);
        let id = importance_with_permutations(&model, &data, MAD_CONSTANT, 1, |_, _| (0..60).collect()).unwrap();
        assert!(id.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cached_prediction_matches_direct_prediction() {
        let (model, data) = toy_model();
        let perm = seeded_permutation(5, 0, 0, 60);
        let mut x = data.x.clone();
        for i in 0..60 {
            x.set(i, 0, data.x.get(perm[i], 0));
        }
        let direct = model.predict(&x);
        let base = model.predict(&data.x);
        let kept = trim_validation(&base, &data.y).unwrap();
        let expected = rmse_over(&direct, &data.y, &kept) - rmse_over(&base, &data.y, &kept);
        let got = importance_with_permutations(&model, &data, MAD_CONSTANT, 1, |_, _| perm.clone()).unwrap();
        assert_eq!(got[0], expected);
    }

    #[test]
    fn deterministic_given_seed() {
        let (model, data) = toy_model();
        let a = permutation_importance(&model, &data, 9).unwrap();
        let b = permutation_importance(&model, &data, 9).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn recovery_in_unit_interval(scores in proptest::collection::vec(-5.0f64..5.0, 5..20), m in 1usize..5) {
            let truth: Vec<usize> = (0..m).collect();
            let r = recovery_from_scores(&scores, &truth);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn dominant_truth_is_recovered(base in proptest::collection::vec(0.0f64..1.0, 10), m in 1usize..6) {
            let mut scores = base.clone();
            for s in scores.iter_mut().take(m) {
                *s += 2.0;
            }
            let truth: Vec<usize> = (0..m).collect();
            prop_assert_eq!(recovery_from_scores(&scores, &truth), 1.0);
        }

        #[test]
        fn importance_shift_invariant(shift in -100.0f64..100.0) {
            let (model, data) = toy_model();
            let mut shifted = model.clone();
            shifted.init = Tree::constant(shift);
            let y2: Vec<f64> = data.y.iter().map(|v| v + shift).collect();
            let data2 = Dataset::unnamed(data.x.clone(), y2).unwrap();
            let a = permutation_importance(&model, &data, 4).unwrap();
            let b = permutation_importance(&shifted, &data2, 4).unwrap();
            for (u, v) in a.scores.iter().zip(&b.scores) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
