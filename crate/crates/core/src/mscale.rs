//! M-estimator of residual scale and its gradient with respect to the fit.
//!
//! The scale σ̂ solves `mean_i ρ0(r_i / σ) = κ`. The left-hand side is
//! continuous and non-increasing in σ, so the root is bracketed and then
//! bisected in log-space until the bracket is at machine resolution.

use crate::error::{Error, Result};
use crate::losses::LossSpec;

/// Default tolerance on the scale equation.
pub const DEFAULT_SCALE_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;
const MAX_BRACKET_EXPANSIONS: usize = 80;
const RELATIVE_WIDTH: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSolution {
    pub sigma: f64,
    pub n_iterations: usize,
    /// `|mean ρ0(r/σ̂) − κ|` at the returned σ̂.
    pub equation_residual: f64,
}

#[inline]
fn mean_rho(residuals: &[f64], rho0: &LossSpec, sigma: f64) -> f64 {
    let s: f64 = residuals.iter().map(|&r| rho0.rho_value(r / sigma)).sum();
    s / residuals.len() as f64
}

/// Solves the M-scale equation from a cold start.
pub fn solve_mscale(residuals: &[f64], rho0: &LossSpec, kappa: f64, tol: f64) -> Result<ScaleSolution> {
    solve_mscale_from(residuals, rho0, kappa, tol, None)
}

/// Solves the M-scale equation, optionally warm-starting the bracket at `hint`.
pub fn solve_mscale_from(
    residuals: &[f64],
    rho0: &LossSpec,
    kappa: f64,
    tol: f64,
    hint: Option<f64>,
) -> Result<ScaleSolution> {
    if residuals.is_empty() {
        return Err(Error::Empty("residual vector"));
    }
    rho0.validate()?;
    if !(kappa > 0.0) || kappa > rho0.sup() {
        return Err(Error::InvalidArgument(format!(
            "kappa must lie in (0, sup rho], got {kappa}"
        )));
    }
    let mut n_zero = 0usize;
    let mut max_abs = 0.0f64;
    for &r in residuals {
        if !r.is_finite() {
            return Err(Error::NonFinite {
                context: "residuals",
                value: r,
            });
        }
        if r == 0.0 {
            n_zero += 1;
        }
        max_abs = max_abs.max(r.abs());
    }
    let n = residuals.len();
    if n_zero == n {
        return Err(Error::DegenerateScale);
    }
    if rho0.is_bounded() {
        let zero_frac = n_zero as f64 / n as f64;
        if zero_frac >= 1.0 - kappa / rho0.sup() {
            return Err(Error::NoRoot(format!(
                "{n_zero} of {n} residuals are exactly zero"
            )));
        }
    }

    let f = |s: f64| mean_rho(residuals, rho0, s) - kappa;
    let (mut lo, mut hi) = match hint {
        Some(h) if h.is_finite() && h > 0.0 => (h / 1.5, h * 1.5),
        _ => {
            let mut nz: Vec<f64> = residuals.iter().filter(|r| **r != 0.0).map(|r| r.abs()).collect();
            let mid = nz.len() / 2;
            let (_, med, _) = nz.select_nth_unstable_by(mid, f64::total_cmp);
            (*med / 1e6, max_abs * 10.0)
        }
    };

    let mut expansions = 0;
    while f(lo) <= 0.0 {
        lo /= 10.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS || lo == 0.0 {
            return Err(Error::NoRoot("lower bracket expansion failed".into()));
        }
    }
    expansions = 0;
    while f(hi) >= 0.0 {
        hi *= 10.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS || !hi.is_finite() {
            return Err(Error::NoRoot("upper bracket expansion failed".into()));
        }
    }

    let mut iterations = 0;
    while iterations < MAX_BISECTIONS && hi - lo > RELATIVE_WIDTH * lo {
        let mid = (lo * hi).sqrt();
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let equation_residual = f(sigma).abs();
    if equation_residual > tol {
        return Err(Error::NoRoot(format!(
            "scale equation residual {equation_residual:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(ScaleSolution {
        sigma,
        n_iterations: iterations,
        equation_residual,
    })
}

/// Gradient of σ̂ with respect to the fitted values: `g_ℓ = −C ψ0(r_ℓ/σ̂)` with
/// `C = [Σ ψ0(r_i/σ̂) r_i/σ̂]⁻¹`.
///
/// `sigma` must solve the scale equation for these residuals.
pub fn mscale_gradient(residuals: &[f64], sigma: f64, rho0: &LossSpec) -> Result<Vec<f64>> {
    if residuals.is_empty() {
        return Err(Error::Empty("residual vector"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let mut denom = 0.0;
    let mut psis = Vec::with_capacity(residuals.len());
    for &r in residuals {
        let u = r / sigma;
        let p = rho0.psi_value(u);
        denom += p * u;
        psis.push(p);
    }
    if !(denom > 1e-12 * residuals.len() as f64) {
        return Err(Error::AllOutlying);
    }
    let c = 1.0 / denom;
    Ok(psis.into_iter().map(|p| -c * p).collect())
}
