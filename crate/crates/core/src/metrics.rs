//! Evaluation metrics.

use crate::error::{Error, Result};
use crate::importance::{rmse_over, trim_validation};

fn check_lengths(predictions: &[f64], y: &[f64]) -> Result<()> {
    if predictions.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} responses",
            predictions.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(predictions, y)?;
    let all: Vec<usize> = (0..y.len()).collect();
    Ok(rmse_over(predictions, y, &all))
}

/// RMSE over the rows surviving 3-MAD trimming of the prediction errors.
pub fn trmse(predictions: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(predictions, y)?;
    let kept = trim_validation(predictions, y)?;
    if kept.is_empty() {
        return Err(Error::EmptyTrimmedSet);
    }
    Ok(rmse_over(predictions, y, &kept))
}

/// Mean absolute residual.
pub fn aad(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "summary needs at least 2 values, got {}",
            values.len()
        )));
    }
    let mean = crate::stats::mean(values);
    let sd = crate::stats::sample_variance(values).sqrt();
    Ok((mean, sd))
}
