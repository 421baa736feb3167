//! The cart-pole benchmark: a cart on a track carrying a pendulum, with the
//! control force acting on the cart only.
//!
//! Coordinates are `(x, theta)` with `theta` measured from the upright
//! vertical, so `theta = 0` is the inverted position and `theta = pi` hangs.

pub mod continuous;
pub mod diagnostics;
pub mod discrete;

use crate::error::{Result, VakonError};

/// Physical constants. The defaults are configuration values, not data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    /// Cart mass.
    pub big_m: f64,
    /// Pendulum mass.
    pub m: f64,
    /// Distance from the pivot to the pendulum's center of mass.
    pub l: f64,
    pub g: f64,
    /// Car height; only shifts the potential by a constant.
    pub hbar: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            big_m: 1.0,
            m: 0.3,
            l: 0.5,
            g: 9.8,
            hbar: 0.0,
        }
    }
}

impl CartPoleParams {
    pub fn new(big_m: f64, m: f64, l: f64, g: f64, hbar: f64) -> Result<Self> {
        let p = Self { big_m, m, l, g, hbar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M", self.big_m), ("m", self.m), ("l", self.l), ("g", self.g)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(VakonError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.hbar.is_finite() {
            return Err(VakonError::InvalidParams("hbar must be finite".into()));
        }
        Ok(())
    }

    /// `M + m`.
    pub fn total_mass(&self) -> f64 {
        self.big_m + self.m
    }

    /// `(M + m) - m cos^2 theta`, the coefficient of `xddot` in the bracket.
    pub fn d(&self, theta: f64) -> f64 {
        let c = theta.cos();
        self.total_mass() - self.m * c * c
    }
}
