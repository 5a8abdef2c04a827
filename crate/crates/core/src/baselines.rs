//! Comparison boosters: squared error, absolute error and two adaptive Huber schemes.

use serde::{Deserialize, Serialize};

use crate::boosting::{run_boosting, stopping_steps, Design, Ensemble, FitTrace, LoopParams, Stage, StepLoss};
use crate::config::BoostConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::importance::robust_mad;
use crate::losses::{sign, LossSpec};
use crate::stats::{mean, median, quantile_type7};
use crate::tree::{SortedFeatures, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    L2,
    Lad,
    MBoost,
    Robloss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub t_max: usize,
    pub depth: usize,
    pub min_node: usize,
    pub gamma: f64,
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod, config: &BoostConfig) -> Self {
        Self {
            method,
            t_max: config.t_max,
            depth: config.depth,
            min_node: config.min_node,
            gamma: config.gamma,
        }
    }
}

/// How the Huber threshold is chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum HuberThreshold {
    /// 90% quantile of absolute residuals.
    Quantile90,
    /// 1.438-scaled MAD of residuals.
    Mad,
    #[cfg_attr(not(test), allow(dead_code))]
    Fixed(f64),
}

pub(crate) enum BaselineLoss {
    Square,
    Absolute,
    Huber { rule: HuberThreshold, delta: f64 },
}

impl StepLoss for BaselineLoss {
    fn prepare(&mut self, residuals: &[f64]) -> Result<()> {
        if let BaselineLoss::Huber { rule, delta } = self {
            *delta = match *rule {
                HuberThreshold::Quantile90 => {
                    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
                    quantile_type7(&abs, 0.9)
                }
                HuberThreshold::Mad => robust_mad(residuals),
                HuberThreshold::Fixed(d) => d,
            };
            if !(*delta > 0.0) {
                return Err(Error::DegenerateScale);
            }
        }
        Ok(())
    }

    #[inline]
    fn gradient(&self, r: f64) -> f64 {
        match self {
            BaselineLoss::Square => -r,
            BaselineLoss::Absolute => -sign(r),
            BaselineLoss::Huber { delta, .. } => -r.clamp(-*delta, *delta),
        }
    }

    #[inline]
    fn loss(&self, r: f64) -> f64 {
        match self {
            BaselineLoss::Square => r * r,
            BaselineLoss::Absolute => r.abs(),
            BaselineLoss::Huber { delta, .. } => LossSpec::huber(*delta).rho_value(r),
        }
    }
}

fn mse(rv: &[f64]) -> f64 {
    rv.iter().map(|r| r * r).sum::<f64>() / rv.len() as f64
}

fn mae(rv: &[f64]) -> f64 {
    rv.iter().map(|r| r.abs()).sum::<f64>() / rv.len() as f64
}

/// Trains one of the comparison boosters with validation early stopping.
pub fn baseline_train(train: &Dataset, val: &Dataset, spec: &BaselineSpec) -> Result<(Ensemble, FitTrace)> {
    let (loss, init) = match spec.method {
        BaselineMethod::L2 => (BaselineLoss::Square, mean(&train.y)),
        BaselineMethod::Lad => (BaselineLoss::Absolute, median(&train.y)),
        BaselineMethod::MBoost => (
            BaselineLoss::Huber {
                rule: HuberThreshold::Quantile90,
                delta: 0.0,
            },
            median(&train.y),
        ),
        BaselineMethod::Robloss => (
            BaselineLoss::Huber {
                rule: HuberThreshold::Mad,
                delta: 0.0,
            },
            median(&train.y),
        ),
    };
    let val_fn: fn(&[f64]) -> f64 = match spec.method {
        BaselineMethod::L2 => mse,
        _ => mae,
    };
    train_with_loss(train, val, spec, loss, Tree::constant(init), &val_fn)
}

pub(crate) fn train_with_loss(
    train: &Dataset,
    val: &Dataset,
    spec: &BaselineSpec,
    mut loss: BaselineLoss,
    init: Tree,
    val_fn: &dyn Fn(&[f64]) -> f64,
) -> Result<(Ensemble, FitTrace)> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if val.n_rows() == 0 {
        return Err(Error::Empty("validation set"));
    }
    if !(spec.gamma > 0.0 && spec.gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {}", spec.gamma)));
    }
    if spec.depth == 0 || spec.min_node == 0 {
        return Err(Error::InvalidArgument("depth and min_node must be at least 1".into()));
    }
    let sorted = SortedFeatures::new(&train.x);
    let mut fitted: Vec<f64> = train.x.rows().map(|r| init.predict_row(r)).collect();
    let mut fitted_val: Vec<f64> = val.x.rows().map(|r| init.predict_row(r)).collect();
    let params = LoopParams {
        max_iter: spec.t_max,
        depth: spec.depth,
        min_node: spec.min_node,
        gamma: spec.gamma,
        plateau: None,
        stage: Stage::Single,
    };
    let design = Design {
        x: &train.x,
        sorted: &sorted,
        y: &train.y,
    };
    let out = run_boosting(&design, &val.x, &val.y, &mut fitted, &mut fitted_val, &mut loss, val_fn, &params)?;
    let mut ensemble = Ensemble::from_init(init, spec.gamma);
    let stop = stopping_steps(&out.trace.val_loss);
    ensemble.steps = out.steps;
    ensemble.stop_index = stop;
    Ok((ensemble, out.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth(seed: u64, n: usize, outliers: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows
            .iter()
            .map(|r| {
                let o = if outliers && rng.random::<f64>() < 0.2 { 20.0 } else { 0.0 };
                3.0 * r[0] + r[1] + 0.2 * (rng.random::<f64>() - 0.5) + o
            })
            .collect();
        Dataset::unnamed(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    fn spec(method: BaselineMethod, t: usize) -> BaselineSpec {
        BaselineSpec {
            method,
            t_max: t,
            depth: 1,
            min_node: 3,
            gamma: 1.0,
        }
    }

    #[test]
    fn l2_interpolates_step_function() {
        let x = Matrix::new(8, 1, (0..8).map(f64::from).collect()).unwrap();
        let y = vec![0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0];
        let d = Dataset::unnamed(x, y).unwrap();
        let (e, trace) = baseline_train(&d, &d, &spec(BaselineMethod::L2, 5)).unwrap();
        assert!(trace.train_loss[0] < 1e-20);
        assert!(e.stop_index >= 1 && e.stop_index <= 5);
    }

    #[test]
    fn l2_training_mse_non_increasing() {
        let (tr, va) = (smooth(1, 150, true), smooth(2, 60, true));
        let (_, trace) = baseline_train(&tr, &va, &spec(BaselineMethod::L2, 100)).unwrap();
        for w in trace.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn huber_in_quadratic_regime_matches_l2() {
        let (tr, va) = (smooth(3, 100, false), smooth(4, 50, false));
        let s = spec(BaselineMethod::L2, 30);
        let init = Tree::constant(mean(&tr.y));
        let (l2, _) = train_with_loss(&tr, &va, &s, BaselineLoss::Square, init.clone(), &mse).unwrap();
        let huge = BaselineLoss::Huber {
            rule: HuberThreshold::Fixed(1e9),
            delta: 0.0,
        };
        let (hub, _) = train_with_loss(&tr, &va, &s, huge, init, &mse).unwrap();
        assert_eq!(l2.steps, hub.steps);
    }

    #[test]
    fn all_methods_run() {
        let (tr, va) = (smooth(5, 120, true), smooth(6, 60, true));
        for m in [BaselineMethod::L2, BaselineMethod::Lad, BaselineMethod::MBoost, BaselineMethod::Robloss] {
            let (e, trace) = baseline_train(&tr, &va, &spec(m, 40)).unwrap();
            assert!(e.stop_index <= trace.len());
            assert!(e.predict(&va.x).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn collapsed_threshold_is_interpolation() {
        let x = Matrix::new(6, 1, (0..6).map(f64::from).collect()).unwrap();
        let d = Dataset::unnamed(x, vec![1.0; 6]).unwrap();
        let (e, trace) = baseline_train(&d, &d, &spec(BaselineMethod::Robloss, 10)).unwrap();
        assert_eq!(e.stop_index, 0);
        assert!(trace.is_empty());
        assert_eq!(
            trace.terminations,
            vec![(Stage::Single, crate::boosting::Termination::Interpolation)]
        );
    }
}
