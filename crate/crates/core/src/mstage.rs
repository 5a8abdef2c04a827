//! Second stage: bounded-loss boosting at the frozen first-stage scale.

use crate::boosting::{run_boosting, stopping_steps, Design, Ensemble, FitTrace, LoopParams, Stage, StepLoss};
use crate::config::BoostConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::sboost::{sboost_train_sorted, SBoostFit};
use crate::tree::{select_init_tree, InitSelection, SortedFeatures};

/// `ρ1(r/σ)` with σ held fixed.
pub(crate) struct FixedScaleLoss {
    pub rho: LossSpec,
    pub sigma: f64,
}

impl StepLoss for FixedScaleLoss {
    #[inline]
    fn gradient(&self, r: f64) -> f64 {
        -self.rho.psi_value(r / self.sigma) / self.sigma
    }

    #[inline]
    fn loss(&self, r: f64) -> f64 {
        self.rho.rho_value(r / self.sigma)
    }
}

/// Gradient of `Σ ρ1((y_i − F_i)/σ)` with respect to `F`.
pub fn stage2_gradient(residuals: &[f64], sigma: f64, rho1: &LossSpec) -> Vec<f64> {
    let loss = FixedScaleLoss { rho: *rho1, sigma };
    residuals.iter().map(|&r| loss.gradient(r)).collect()
}

#[derive(Debug, Clone)]
pub struct RrBoostFit {
    pub ensemble: Ensemble,
    pub trace: FitTrace,
    pub init: InitSelection,
    /// Validation scale at the first-stage stopping step.
    pub val_scale: f64,
}

/// Full two-stage fit: initializer selection, scale stage, refinement stage.
pub fn rrboost_train(train: &Dataset, val: &Dataset, config: &BoostConfig) -> Result<RrBoostFit> {
    config.validate()?;
    let sorted = SortedFeatures::new(&train.x);
    let init = select_init_tree(train, val, &config.init_depths, &config.init_min_nodes)?;
    let stage1 = sboost_train_sorted(train, &sorted, val, init.tree.clone(), config)?;
    let (ensemble, trace) = refine_sorted(train, &sorted, val, &stage1, config)?;
    Ok(RrBoostFit {
        ensemble,
        trace,
        init,
        val_scale: stage1.val_scale,
    })
}

/// Runs the refinement stage on top of an existing first-stage fit.
pub fn refine(train: &Dataset, val: &Dataset, stage1: &SBoostFit, config: &BoostConfig) -> Result<(Ensemble, FitTrace)> {
    let sorted = SortedFeatures::new(&train.x);
    refine_sorted(train, &sorted, val, stage1, config)
}

pub(crate) fn refine_sorted(
    train: &Dataset,
    sorted: &SortedFeatures,
    val: &Dataset,
    stage1: &SBoostFit,
    config: &BoostConfig,
) -> Result<(Ensemble, FitTrace)> {
    config.validate()?;
    let mut ensemble = stage1.ensemble.clone();
    let mut trace = stage1.trace.clone();
    if config.t2_max == 0 {
        return Ok((ensemble, trace));
    }
    let sigma = stage1.scale.sigma;
    let val_sigma = stage1.val_scale;
    if !val_sigma.is_finite() || val_sigma <= 0.0 {
        return Err(Error::NoRoot("validation scale at the first-stage stop is undefined".into()));
    }
    let mut fitted = ensemble.predict(&train.x);
    let mut fitted_val = ensemble.predict(&val.x);
    let mut loss = FixedScaleLoss { rho: config.rho1, sigma };
    let rho1 = config.rho1;
    let val_loss = move |rv: &[f64]| rv.iter().map(|r| rho1.rho_value(r / val_sigma)).sum::<f64>() / rv.len() as f64;
    let params = LoopParams {
        max_iter: config.t2_max,
        depth: config.depth,
        min_node: config.min_node,
        gamma: config.gamma,
        plateau: config.plateau_patience,
        stage: Stage::Refine,
    };
    let design = Design {
        x: &train.x,
        sorted,
        y: &train.y,
    };
    let out = run_boosting(&design, &val.x, &val.y, &mut fitted, &mut fitted_val, &mut loss, &val_loss, &params)?;
    let t2_stop = stopping_steps(&out.trace.val_loss);
    ensemble.steps.extend(out.steps);
    ensemble.stop_index = ensemble.stage_boundary + t2_stop;
    trace.append(out.trace);
    Ok((ensemble, trace))
}
