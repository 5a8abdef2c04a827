//! First stage: boosting that minimises the residual M-scale.

use crate::boosting::{
    fit_negative_gradient, line_search, shrinkage_step, stopping_steps, Ensemble, FitTrace, Stage, Step,
    Termination,
};
use crate::config::BoostConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mscale::{mscale_gradient, solve_mscale_from, ScaleSolution};
use crate::tree::{SortedFeatures, Tree};

/// Result of the scale-minimising stage.
#[derive(Debug, Clone)]
pub struct SBoostFit {
    /// Ensemble truncated at the stopping step; `sigma_hat` is set.
    pub ensemble: Ensemble,
    /// Training M-scale at the stopping step.
    pub scale: ScaleSolution,
    /// Validation M-scale at the stopping step, `+∞` if it could not be solved.
    pub val_scale: f64,
    pub trace: FitTrace,
}

fn residuals_into(y: &[f64], fitted: &[f64], out: &mut [f64]) {
    for ((o, yi), fi) in out.iter_mut().zip(y).zip(fitted) {
        *o = yi - fi;
    }
}

/// Runs the scale-minimising boosting stage from `init`.
pub fn sboost_train(train: &Dataset, val: &Dataset, init: Tree, config: &BoostConfig) -> Result<SBoostFit> {
    let sorted = SortedFeatures::new(&train.x);
    sboost_train_sorted(train, &sorted, val, init, config)
}

pub(crate) fn sboost_train_sorted(
    train: &Dataset,
    sorted: &SortedFeatures,
    val: &Dataset,
    init: Tree,
    config: &BoostConfig,
) -> Result<SBoostFit> {
    config.validate()?;
    if train.n_rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if val.n_rows() == 0 {
        return Err(Error::Empty("validation set"));
    }
    let rho0 = config.rho0;
    let kappa = rho0.kappa;
    let tol = config.scale_tol;
    let n = train.n_rows();
    let nv = val.n_rows();

    let mut fitted: Vec<f64> = train.x.rows().map(|r| init.predict_row(r)).collect();
    let mut fitted_val: Vec<f64> = val.x.rows().map(|r| init.predict_row(r)).collect();
    let mut r = vec![0.0; n];
    let mut rv = vec![0.0; nv];
    residuals_into(&train.y, &fitted, &mut r);
    residuals_into(&val.y, &fitted_val, &mut rv);
    let init_scale = solve_mscale_from(&r, &rho0, kappa, tol, None)?;
    let init_val_scale = solve_mscale_from(&rv, &rho0, kappa, tol, None).map_or(f64::INFINITY, |s| s.sigma);

    let mut sigma = init_scale.sigma;
    let mut val_sigma_hint = init_val_scale;
    let mut steps: Vec<Step> = Vec::new();
    let mut trace = FitTrace::default();
    let mut termination = Termination::Completed;
    let mut h = vec![0.0; n];
    let mut probe = vec![0.0; n];

    for _ in 0..config.t1_max {
        let g = match mscale_gradient(&r, sigma, &rho0) {
            Ok(g) => g,
            Err(Error::AllOutlying) => {
                termination = Termination::AllOutlying;
                break;
            }
            Err(e) => return Err(e),
        };
        let tree = fit_negative_gradient(&train.x, sorted, &g, config.depth, config.min_node)?;
        for (i, row) in train.x.rows().enumerate() {
            h[i] = tree.predict_row(row);
        }
        let alpha = if h.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            line_search(
                |a| {
                    if a == 0.0 {
                        return sigma;
                    }
                    for i in 0..n {
                        probe[i] = r[i] - a * h[i];
                    }
                    solve_mscale_from(&probe, &rho0, kappa, tol, Some(sigma)).map_or(f64::INFINITY, |s| s.sigma)
                },
                1.0,
            )?
        };
        let step = shrinkage_step(alpha, config.gamma);
        let mut next = fitted.clone();
        for i in 0..n {
            next[i] += step * h[i];
        }
        residuals_into(&train.y, &next, &mut probe);
        let new_sigma = match solve_mscale_from(&probe, &rho0, kappa, tol, Some(sigma)) {
            Ok(s) => s.sigma,
            Err(Error::DegenerateScale) | Err(Error::NoRoot(_)) => {
                termination = Termination::Interpolation;
                break;
            }
            Err(e) => return Err(e),
        };
        fitted = next;
        r.copy_from_slice(&probe);
        sigma = new_sigma;
        for (i, row) in val.x.rows().enumerate() {
            fitted_val[i] += step * tree.predict_row(row);
        }
        residuals_into(&val.y, &fitted_val, &mut rv);
        let hint = val_sigma_hint.is_finite().then_some(val_sigma_hint);
        let val_sigma = solve_mscale_from(&rv, &rho0, kappa, tol, hint).map_or(f64::INFINITY, |s| s.sigma);
        if val_sigma.is_finite() {
            val_sigma_hint = val_sigma;
        }
        trace.push(Stage::Scale, alpha, sigma, val_sigma);
        steps.push(Step { alpha, tree });
    }
    trace.terminations.push((Stage::Scale, termination));

    let t_stop = stopping_steps(&trace.val_loss);
    let mut ensemble = Ensemble::from_init(init, config.gamma);
    steps.truncate(t_stop);
    ensemble.steps = steps;
    ensemble.stage_boundary = t_stop;
    ensemble.stop_index = t_stop;

    let (scale, val_scale) = if t_stop == 0 {
        (init_scale, init_val_scale)
    } else {
        let fit_stop = ensemble.predict(&train.x);
        residuals_into(&train.y, &fit_stop, &mut r);
        let s = solve_mscale_from(&r, &rho0, kappa, tol, None)?;
        (s, trace.val_loss[t_stop - 1])
    };
    ensemble.sigma_hat = Some(scale.sigma);
    Ok(SBoostFit {
        ensemble,
        scale,
        val_scale,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::mscale::solve_mscale;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows
            .iter()
            .map(|r| 4.0 * r[0] - 2.0 * r[1] + rng.random::<f64>() - 0.5 + if rng.random::<f64>() < 0.1 { 30.0 } else { 0.0 })
            .collect();
        Dataset::unnamed(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    fn config(t1: usize) -> BoostConfig {
        let mut c = BoostConfig::for_depth(1);
        c.t1_max = t1;
        c
    }

    #[test]
    fn zero_iterations_returns_initializer() {
        let (tr, va) = (toy(1, 80), toy(2, 40));
        let init = crate::tree::median_tree(&tr.y);
        let fit = sboost_train(&tr, &va, init.clone(), &config(0)).unwrap();
        assert_eq!(fit.ensemble.init, init);
        assert_eq!(fit.ensemble.stop_index, 0);
        let r: Vec<f64> = tr.y.iter().map(|y| y - init.predict_row(&[])).collect();
        let direct = solve_mscale(&r, &crate::losses::LossSpec::tukey_scale(), 0.5, 1e-10).unwrap();
        assert_eq!(fit.scale.sigma, direct.sigma);
    }

    #[test]
    fn training_scale_is_non_increasing() {
        let (tr, va) = (toy(3, 120), toy(4, 60));
        let init = crate::tree::median_tree(&tr.y);
        let fit = sboost_train(&tr, &va, init, &config(60)).unwrap();
        let mut prev = f64::INFINITY;
        for &s in &fit.trace.train_loss {
            assert!(s <= prev + 1e-10, "{s} > {prev}");
            prev = s;
        }
    }

    #[test]
    fn validation_trace_matches_independent_solve() {
        let (tr, va) = (toy(5, 100), toy(6, 50));
        let init = crate::tree::median_tree(&tr.y);
        let fit = sboost_train(&tr, &va, init, &config(15)).unwrap();
        let k = fit.ensemble.stop_index;
        assert!(k > 0);
        let pred = fit.ensemble.predict(&va.x);
        let rv: Vec<f64> = va.y.iter().zip(&pred).map(|(y, p)| y - p).collect();
        let s = solve_mscale(&rv, &crate::losses::LossSpec::tukey_scale(), 0.5, 1e-10).unwrap();
        assert!((s.sigma / fit.trace.val_loss[k - 1] - 1.0).abs() < 1e-12);
        assert_eq!(fit.val_scale, fit.trace.val_loss[k - 1]);
    }
}
