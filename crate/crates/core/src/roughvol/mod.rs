//! Rough fractional stochastic volatility: Hurst/ν estimation, the
//! fractional log-volatility predictor and an exact fBm simulator.

mod fbm;
mod hurst;
mod predictor;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

pub use fbm::{simulate_fbm, simulate_fgn};
pub use hurst::{estimate_hurst, estimate_hurst_pooled, variogram, HurstEstimate, H_MAX, H_MIN};
pub use predictor::{fractional_weights, rfsv_forecast, tail_mass_bound, FractionalWeights};

pub const DEFAULT_DELTA_MAX: usize = 30;
pub const DEFAULT_TRUNCATION: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughVolError {
    #[error("Hurst exponent {0} outside the admissible range {1}")]
    HurstRange(f64, &'static str),
    #[error("series too short: {have} points, need {need}")]
    TooShort { have: usize, need: usize },
    #[error("series is constant (zero variogram)")]
    Constant,
    #[error("non-positive volatility {value} at history position {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("history length {have} does not match {need} weights")]
    HistoryLength { have: usize, need: usize },
    #[error("circulant embedding not non-negative definite for n={n}; try n={suggested}")]
    Embedding { n: usize, suggested: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// RFSV predictor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfsvParams {
    pub h: f64,
    pub nu: f64,
    /// `exp(Γ(3/2-H) ν² / (2 Γ(H+1/2) Γ(2-2H)))`
    pub c: f64,
}

impl RfsvParams {
    pub fn new(h: f64, nu: f64) -> Result<Self, RoughVolError> {
        if !(h > 0.0 && h < 0.5) {
            return Err(RoughVolError::HurstRange(h, "(0, 1/2)"));
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(RoughVolError::Invalid(format!("nu = {nu}")));
        }
        Ok(RfsvParams {
            h,
            nu,
            c: correction(h, nu),
        })
    }

    pub fn from_estimate(est: &HurstEstimate) -> Result<Self, RoughVolError> {
        Self::new(est.h, est.nu)
    }
}

/// Bias correction turning the forecast of `log σ` into one of `σ`.
pub fn correction(h: f64, nu: f64) -> f64 {
    (gamma(1.5 - h) * nu * nu / (2.0 * gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).exp()
}
