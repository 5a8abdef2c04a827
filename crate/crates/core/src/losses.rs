//! Loss families ρ and their derivatives ψ.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Tuning constant giving a consistent, 50%-breakdown M-scale at the normal.
pub const TUKEY_SCALE_C: f64 = 1.547;
/// Right-hand side of the M-scale equation for maximal breakdown.
pub const TUKEY_SCALE_KAPPA: f64 = 0.5;
/// Tuning constant for the high-efficiency bounded loss of the second stage.
pub const TUKEY_EFFICIENT_C: f64 = 4.685;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Tukey,
    Huber,
    Square,
    Absolute,
}

/// A ρ-family selector with its tuning constants.
///
/// `c` is ignored by `Square` and `Absolute`; `kappa` only matters when the
/// loss defines an M-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub c: f64,
    pub kappa: f64,
}

impl LossSpec {
    pub fn tukey(c: f64, kappa: f64) -> Self {
        Self {
            family: LossFamily::Tukey,
            c,
            kappa,
        }
    }

    /// Tukey bisquare with `c = 1.547`, `κ = 1/2`.
    pub fn tukey_scale() -> Self {
        Self::tukey(TUKEY_SCALE_C, TUKEY_SCALE_KAPPA)
    }

    /// Tukey bisquare with `c = 4.685`.
    pub fn tukey_efficient() -> Self {
        Self::tukey(TUKEY_EFFICIENT_C, TUKEY_SCALE_KAPPA)
    }

    pub fn huber(c: f64) -> Self {
        Self {
            family: LossFamily::Huber,
            c,
            kappa: TUKEY_SCALE_KAPPA,
        }
    }

    pub fn square() -> Self {
        Self {
            family: LossFamily::Square,
            c: 1.0,
            kappa: 1.0,
        }
    }

    pub fn absolute() -> Self {
        Self {
            family: LossFamily::Absolute,
            c: 1.0,
            kappa: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_c = matches!(self.family, LossFamily::Tukey | LossFamily::Huber);
        if needs_c && !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tuning constant c must be positive, got {}",
                self.c
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Whether ρ is bounded (and then normalised so that sup ρ = 1).
    pub fn is_bounded(&self) -> bool {
        self.family == LossFamily::Tukey
    }

    /// sup ρ, infinite for unbounded families.
    pub fn sup(&self) -> f64 {
        if self.is_bounded() {
            1.0
        } else {
            f64::INFINITY
        }
    }

    /// ρ(u), rejecting non-finite arguments.
    pub fn rho(&self, u: f64) -> Result<f64> {
        ensure_finite("loss argument", u)?;
        Ok(self.rho_value(u))
    }

    /// ψ(u) = ρ'(u), rejecting non-finite arguments.
    pub fn psi(&self, u: f64) -> Result<f64> {
        ensure_finite("loss argument", u)?;
        Ok(self.psi_value(u))
    }

    /// Unchecked ρ(u) for hot loops over validated residuals.
    #[inline]
    pub fn rho_value(&self, u: f64) -> f64 {
        match self.family {
            LossFamily::Tukey => {
                if u.abs() <= self.c {
                    let v = u / self.c;
                    let w = 1.0 - v * v;
                    1.0 - w * w * w
                } else {
                    1.0
                }
            }
            LossFamily::Huber => {
                let a = u.abs();
                if a <= self.c {
                    0.5 * u * u
                } else {
                    self.c * a - 0.5 * self.c * self.c
                }
            }
            LossFamily::Square => u * u,
            LossFamily::Absolute => u.abs(),
        }
    }

    /// Unchecked ψ(u).
    #[inline]
    pub fn psi_value(&self, u: f64) -> f64 {
        match self.family {
            LossFamily::Tukey => {
                if u.abs() <= self.c {
                    let v = u / self.c;
                    let w = 1.0 - v * v;
                    6.0 * u / (self.c * self.c) * w * w
                } else {
                    0.0
                }
            }
            LossFamily::Huber => u.clamp(-self.c, self.c),
            LossFamily::Square => 2.0 * u,
            LossFamily::Absolute => sign(u),
        }
    }
}

#[inline]
pub(crate) fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}
