//! Fractional predictor of log-volatility on a daily lag grid.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{RfsvParams, RoughVolError};

/// Normalized kernel weights; `weights[k - 1]` multiplies `log σ_{t-k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalWeights {
    pub h: f64,
    pub weights: Vec<f64>,
}

impl FractionalWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn raw_weight(h: f64, k: f64) -> f64 {
    (h * PI).cos() / PI / ((k + 1.0) * k.powf(h + 0.5))
}

/// Kernel `cos(Hπ)/π · 1/((k+1) k^{H+1/2})` at integer lags `k = 1..=n`,
/// rescaled to sum to one.
pub fn fractional_weights(h: f64, n: usize) -> Result<FractionalWeights, RoughVolError> {
    if !(h > 0.0 && h < 0.5) {
        return Err(RoughVolError::HurstRange(h, "(0, 1/2)"));
    }
    if n < 2 {
        return Err(RoughVolError::Invalid(format!("truncation {n} < 2")));
    }
    let raw: Vec<f64> = (1..=n).map(|k| raw_weight(h, k as f64)).collect();
    let total: f64 = raw.iter().sum();
    Ok(FractionalWeights {
        h,
        weights: raw.into_iter().map(|w| w / total).collect(),
    })
}

/// Upper bound on the unnormalized kernel mass beyond lag `n`:
/// `cos(Hπ)/π · n^{-(H+1/2)} / (H+1/2)`.
pub fn tail_mass_bound(h: f64, n: usize) -> f64 {
    (h * PI).cos() / PI * (n as f64).powf(-(h + 0.5)) / (h + 0.5)
}

/// `c · exp(Σ_k w_k log σ_{t-k})` with `history` ordered oldest first.
pub fn rfsv_forecast(params: &RfsvParams, weights: &FractionalWeights, history: &[f64]) -> Result<f64, RoughVolError> {
    let n = weights.len();
    if history.len() != n {
        return Err(RoughVolError::HistoryLength {
            have: history.len(),
            need: n,
        });
    }
    if let Some(idx) = history.iter().position(|s| !(*s > 0.0)) {
        return Err(RoughVolError::NonPositive {
            index: idx,
            value: history[idx],
        });
    }
    // Logs are taken relative to the latest value; the weights sum to one,
    // so this is the same mean and a flat history maps to exactly `c · s`.
    let last = history[n - 1];
    let base = last.ln();
    let mut acc = 0.0;
    for (k, w) in weights.weights.iter().enumerate() {
        acc += w * (history[n - 1 - k].ln() - base);
    }
    Ok(params.c * (last * acc.exp()))
}
