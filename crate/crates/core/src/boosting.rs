//! Shared boosting machinery: the ensemble, fit traces, negative-gradient
//! fitting, the one-dimensional line search and early-stopping bookkeeping.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::tree::{fit_tree_sorted, SortedFeatures, SplitCriterion, Tree};

/// One boosting update: the line-search step and its base learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub alpha: f64,
    pub tree: Tree,
}

/// Additive model `F(x) = init(x) + Σ_{t ≤ stop_index} γ α_t h_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub init: Tree,
    pub steps: Vec<Step>,
    /// Residual M-scale carried from the first stage, when there is one.
    pub sigma_hat: Option<f64>,
    pub gamma: f64,
    /// Number of leading steps that belong to the first stage.
    pub stage_boundary: usize,
    /// Number of leading steps used for prediction.
    pub stop_index: usize,
}

impl Ensemble {
    pub fn from_init(init: Tree, gamma: f64) -> Self {
        Self {
            init,
            steps: Vec::new(),
            sigma_hat: None,
            gamma,
            stage_boundary: 0,
            stop_index: 0,
        }
    }

    /// Prediction for one row; evaluation order matches the training updates
    /// so in-sample predictions reproduce the fitted values bit for bit.
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut f = self.init.predict_row(x);
        for s in &self.steps[..self.stop_index] {
            f += shrinkage_step(s.alpha, self.gamma) * s.tree.predict_row(x);
        }
        f
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Prediction that first checks the matrix is wide enough and finite.
    pub fn predict_checked(&self, x: &Matrix) -> Result<Vec<f64>> {
        if let Some(j) = self.max_feature() {
            if j >= x.n_cols() {
                return Err(Error::InvalidArgument(format!(
                    "model uses feature {j} but input has {} columns",
                    x.n_cols()
                )));
            }
        }
        if let Some(bad) = x.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "prediction features",
                value: *bad,
            });
        }
        Ok(self.predict(x))
    }

    fn active_trees(&self) -> impl Iterator<Item = &Tree> {
        std::iter::once(&self.init).chain(self.steps[..self.stop_index].iter().map(|s| &s.tree))
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.active_trees()
            .flat_map(|t| t.features_used())
            .max()
    }

    /// Whether any tree used for prediction splits on feature `j`.
    pub fn uses_feature(&self, j: usize) -> bool {
        self.active_trees().any(|t| t.uses_feature(j))
    }

    /// Copy truncated to the first `k` steps for prediction.
    pub fn with_stop_index(&self, k: usize) -> Self {
        let mut e = self.clone();
        e.stop_index = k.min(e.steps.len());
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Scale-minimising first stage.
    Scale,
    /// Fixed-scale bounded-loss second stage.
    Refine,
    /// Single-stage baseline boosters.
    Single,
}

/// Why a boosting loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// Every residual sat in the flat region of a bounded loss.
    AllOutlying,
    /// Residuals collapsed to zero (or to a zero adaptive threshold).
    Interpolation,
    /// Too many consecutive zero-length steps.
    Plateau,
}

/// Per-iteration training and validation losses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stage: Vec<Stage>,
    pub alphas: Vec<f64>,
    pub terminations: Vec<(Stage, Termination)>,
}

impl FitTrace {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    pub(crate) fn push(&mut self, stage: Stage, alpha: f64, train: f64, val: f64) {
        self.stage.push(stage);
        self.alphas.push(alpha);
        self.train_loss.push(train);
        self.val_loss.push(val);
    }

    pub fn append(&mut self, other: FitTrace) {
        self.train_loss.extend(other.train_loss);
        self.val_loss.extend(other.val_loss);
        self.stage.extend(other.stage);
        self.alphas.extend(other.alphas);
        self.terminations.extend(other.terminations);
    }

    /// Slice of losses for one stage, in iteration order.
    pub fn stage_losses(&self, stage: Stage) -> (Vec<f64>, Vec<f64>) {
        let mut tr = Vec::new();
        let mut va = Vec::new();
        for (i, s) in self.stage.iter().enumerate() {
            if *s == stage {
                tr.push(self.train_loss[i]);
                va.push(self.val_loss[i]);
            }
        }
        (tr, va)
    }
}

/// Effective update size under shrinkage.
#[inline]
pub fn shrinkage_step(alpha: f64, gamma: f64) -> f64 {
    gamma * alpha
}

/// Least-squares base learner approximating `−g`.
pub fn fit_negative_gradient(
    x: &Matrix,
    sorted: &SortedFeatures,
    g: &[f64],
    depth: usize,
    min_node: usize,
) -> Result<Tree> {
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient",
            value: *bad,
        });
    }
    let target: Vec<f64> = g.iter().map(|v| -v).collect();
    fit_tree_sorted(x, sorted, &target, SplitCriterion::LeastSquares, depth, min_node)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_DOUBLINGS: usize = 30;
const INTERVAL_TOL: f64 = 1e-6;

/// Minimises a one-dimensional objective over α ≥ 0.
///
/// The bracket starts at `[0, bracket_hint]` and doubles while the objective
/// keeps decreasing; golden-section search then narrows it to a relative
/// width of 1e-6. The returned α never does worse than α = 0.
///
/// `+∞` marks infeasible probes; NaN or `−∞` is an error.
pub fn line_search<F>(mut objective: F, bracket_hint: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(bracket_hint > 0.0 && bracket_hint.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bracket hint must be positive, got {bracket_hint}"
        )));
    }
    let mut best = (0.0, f64::INFINITY);
    let mut eval = |a: f64, best: &mut (f64, f64)| -> Result<f64> {
        let v = objective(a);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::NonFinite {
                context: "line search objective",
                value: v,
            });
        }
        if v < best.1 {
            *best = (a, v);
        }
        Ok(v)
    };
    let f0 = eval(0.0, &mut best)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            context: "line search objective at zero",
            value: f0,
        });
    }

    let (mut lo, mut hi);
    let mut mid = bracket_hint;
    let mut fmid = eval(mid, &mut best)?;
    if fmid >= f0 {
        lo = 0.0;
        hi = mid;
    } else {
        lo = 0.0;
        let mut doublings = 0;
        loop {
            let right = 2.0 * mid;
            let fr = eval(right, &mut best)?;
            doublings += 1;
            if fr >= fmid || doublings >= MAX_DOUBLINGS {
                hi = right;
                break;
            }
            lo = mid;
            mid = right;
            fmid = fr;
        }
    }

    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = eval(x1, &mut best)?;
    let mut f2 = eval(x2, &mut best)?;
    for _ in 0..200 {
        if hi - lo <= INTERVAL_TOL * 0.5 * (lo.abs() + hi.abs()) + 1e-15 * bracket_hint {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = eval(x1, &mut best)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = eval(x2, &mut best)?;
        }
    }
    let _ = fmid;
    Ok(if best.1 <= f0 { best.0 } else { 0.0 })
}

/// Index of the first minimum among finite entries, `None` if there is none.
pub fn argmin_stop(trace: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in trace.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Number of steps to keep given a per-iteration validation trace whose
/// entry `t` describes the fit after `t + 1` steps.
pub(crate) fn stopping_steps(val_trace: &[f64]) -> usize {
    argmin_stop(val_trace).map_or(0, |i| i + 1)
}

/// A loss whose per-observation gradient drives a boosting loop.
pub(crate) trait StepLoss {
    /// Refreshes adaptive state from the current training residuals.
    fn prepare(&mut self, _residuals: &[f64]) -> Result<()> {
        Ok(())
    }
    /// ∂L/∂F at residual `r = y − F`.
    fn gradient(&self, r: f64) -> f64;
    fn loss(&self, r: f64) -> f64;
}

pub(crate) struct LoopParams {
    pub max_iter: usize,
    pub depth: usize,
    pub min_node: usize,
    pub gamma: f64,
    pub plateau: Option<usize>,
    pub stage: Stage,
}

pub(crate) struct Design<'a> {
    pub x: &'a Matrix,
    pub sorted: &'a SortedFeatures,
    pub y: &'a [f64],
}

pub(crate) struct LoopOutput {
    pub steps: Vec<Step>,
    pub trace: FitTrace,
}

/// Gradient boosting with a per-iteration fixed loss and exact line search.
///
/// `fitted` and `fitted_val` hold the current fit on the training and
/// validation rows and are updated in place.
pub(crate) fn run_boosting<L: StepLoss>(
    train: &Design<'_>,
    val_x: &Matrix,
    val_y: &[f64],
    fitted: &mut [f64],
    fitted_val: &mut [f64],
    loss: &mut L,
    val_loss: &dyn Fn(&[f64]) -> f64,
    params: &LoopParams,
) -> Result<LoopOutput> {
    let n = train.y.len();
    let mut steps = Vec::new();
    let mut trace = FitTrace::default();
    let mut residuals = vec![0.0; n];
    let mut val_residuals = vec![0.0; val_y.len()];
    let mut grad = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut zero_steps = 0usize;
    let mut termination = Termination::Completed;

    for _ in 0..params.max_iter {
        for i in 0..n {
            residuals[i] = train.y[i] - fitted[i];
        }
        match loss.prepare(&residuals) {
            Ok(()) => {}
            Err(Error::DegenerateScale) => {
                termination = Termination::Interpolation;
                break;
            }
            Err(e) => return Err(e),
        }
        for i in 0..n {
            grad[i] = loss.gradient(residuals[i]);
        }
        let tree = fit_negative_gradient(train.x, train.sorted, &grad, params.depth, params.min_node)?;
        for i in 0..n {
            h[i] = tree.predict_row(train.x.row(i));
        }
        let alpha = if h.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            line_search(
                |a| {
                    residuals
                        .iter()
                        .zip(&h)
                        .map(|(r, hi)| loss.loss(r - a * hi))
                        .sum::<f64>()
                },
                1.0,
            )?
        };
        let step = shrinkage_step(alpha, params.gamma);
        for i in 0..n {
            fitted[i] += step * h[i];
        }
        for (i, row) in val_x.rows().enumerate() {
            fitted_val[i] += step * tree.predict_row(row);
        }
        let train_loss = (0..n)
            .map(|i| loss.loss(train.y[i] - fitted[i]))
            .sum::<f64>()
            / n as f64;
        for i in 0..val_y.len() {
            val_residuals[i] = val_y[i] - fitted_val[i];
        }
        trace.push(params.stage, alpha, train_loss, val_loss(&val_residuals));
        steps.push(Step { alpha, tree });

        if alpha == 0.0 {
            zero_steps += 1;
        } else {
            zero_steps = 0;
        }
        if params.plateau.is_some_and(|p| zero_steps >= p) {
            termination = Termination::Plateau;
            break;
        }
    }
    trace.terminations.push((params.stage, termination));
    Ok(LoopOutput { steps, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{fit_tree, Node};

    #[test]
    fn line_search_quadratic() {
        let a = line_search(|a| (a - 1.0) * (a - 1.0), 1.0).unwrap();
        assert!((a - 1.0).abs() < 1e-4, "{a}");
        let a = line_search(|a| (a - 300.0) * (a - 300.0), 1.0).unwrap();
        assert!((a - 300.0).abs() < 1e-3, "{a}");
        let a = line_search(|a| (a - 0.01) * (a - 0.01), 1.0).unwrap();
        assert!((a - 0.01).abs() < 1e-6, "{a}");
    }

    #[test]
    fn line_search_increasing_gives_zero() {
        assert_eq!(line_search(|a| a, 1.0).unwrap(), 0.0);
        assert_eq!(line_search(|_| 3.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn line_search_errors_on_nan() {
        assert!(line_search(|a| if a > 0.5 { f64::NAN } else { a }, 1.0).is_err());
        assert!(line_search(|_| f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn line_search_never_worse_than_zero() {
        // Non-unimodal objective: golden section may land in a worse basin.
        let f = |a: f64| (5.0 * a).sin() + 0.1 * a;
        let a = line_search(f, 1.0).unwrap();
        assert!(f(a) <= f(0.0) + 1e-12);
    }

    #[test]
    fn argmin_rules() {
        assert_eq!(argmin_stop(&[5.0, 3.0, 4.0]), Some(1));
        assert_eq!(argmin_stop(&[2.0, 2.0, 2.0]), Some(0));
        assert_eq!(argmin_stop(&[3.0, 2.0, 1.0]), Some(2));
        assert_eq!(argmin_stop(&[f64::INFINITY, 4.0, f64::INFINITY]), Some(1));
        assert_eq!(argmin_stop(&[]), None);
    }

    #[test]
    fn shrinkage() {
        assert!((shrinkage_step(2.0, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(shrinkage_step(1.7, 1.0), 1.7);
    }

    #[test]
    fn negative_gradient_fits() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let sorted = SortedFeatures::new(&x);
        let zero = fit_negative_gradient(&x, &sorted, &[0.0; 4], 1, 1).unwrap();
        assert_eq!(zero.root, Node::Leaf { value: 0.0 });

        let y = [0.0, 0.0, 10.0, 10.0];
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let from_g = fit_negative_gradient(&x, &sorted, &g, 1, 1).unwrap();
        let direct = fit_tree(&x, &y, SplitCriterion::LeastSquares, 1, 1).unwrap();
        assert_eq!(from_g, direct);
        let sse: f64 = (0..4).map(|i| (from_g.predict_row(x.row(i)) - y[i]).powi(2)).sum();
        assert_eq!(sse, 0.0);
    }

    #[test]
    fn zero_stop_index_is_initializer() {
        let mut e = Ensemble::from_init(Tree::constant(2.5), 1.0);
        e.steps.push(Step {
            alpha: 3.0,
            tree: Tree::constant(1.0),
        });
        assert_eq!(e.predict_row(&[0.0]), 2.5);
        e.stop_index = 1;
        assert_eq!(e.predict_row(&[0.0]), 5.5);
    }
}
