//! Quadratic rough Heston forecasting device and its blend with RFSV.
//!
//! The rough kernel `K(t) = t^{H-1/2}/Γ(H+1/2)` is replaced by a finite sum
//! of exponentials, which turns the weighted moving average of past returns
//! into `n` geometric recursions (the Z factors). Next-day variance is a
//! quadratic in the aggregated factor.

mod calibrate;
mod kernel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{calibrate_qrh, QrhCalibration, PARAM_FLOOR};
pub use kernel::{kernel_nodes, relative_l2_error, KernelNodes};

pub const DEFAULT_FACTORS: usize = 10;
pub const DEFAULT_T_MIN: f64 = 1.0;
pub const DEFAULT_T_MAX: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrhError {
    #[error("invalid kernel specification: {0}")]
    Kernel(String),
    #[error("calibration needs at least {need} rows, got {have}")]
    TooFewRows { have: usize, need: usize },
    #[error("calibration series lengths differ ({0} vs {1})")]
    Misaligned(usize, usize),
    #[error("calibration regression failed: {0}")]
    Regression(#[from] crate::linalg::LinalgError),
    #[error("blend weight {0} outside [0, 1]")]
    Lambda(f64),
}

/// Z factors `Z_{i,t}` and their aggregate `Z_t = Σ c_i Z_{i,t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrhState {
    pub z_factors: Vec<f64>,
    pub z: f64,
    /// Days advanced since initialization.
    pub steps: usize,
    pub burn_in_done: bool,
}

impl QrhState {
    /// All factors start at zero.
    pub fn new(nodes: &KernelNodes) -> Self {
        QrhState {
            z_factors: vec![0.0; nodes.len()],
            z: 0.0,
            steps: 0,
            burn_in_done: false,
        }
    }

    pub fn aggregate(&self, nodes: &KernelNodes) -> f64 {
        self.z_factors.iter().zip(&nodes.weights).map(|(z, c)| c * z).sum()
    }
}

/// One day: every factor decays by `e^{-γ_i}` and adds `r`.
pub fn advance_z(state: &QrhState, nodes: &KernelNodes, r: f64, burn_in: usize) -> QrhState {
    let mut next = state.clone();
    advance_z_in_place(&mut next, nodes, r, burn_in);
    next
}

pub fn advance_z_in_place(state: &mut QrhState, nodes: &KernelNodes, r: f64, burn_in: usize) {
    for (z, d) in state.z_factors.iter_mut().zip(&nodes.decays) {
        *z = d * *z + r;
    }
    state.z = state.aggregate(nodes);
    state.steps += 1;
    state.burn_in_done = state.steps >= burn_in;
}

/// QRH parameters and the RFSV blend weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrhParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
}

/// `sqrt(a (z_prev - b)^2 + c)`, in the calibration target's units.
pub fn qrh_forecast(params: &QrhParams, z_prev: f64) -> f64 {
    (params.a * (z_prev - params.b).powi(2) + params.c).max(0.0).sqrt()
}

/// `(1 - λ) rfsv + λ qrh`.
pub fn blend(rfsv: f64, qrh: f64, lambda: f64) -> Result<f64, QrhError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(QrhError::Lambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(rfsv);
    }
    if lambda == 1.0 {
        return Ok(qrh);
    }
    Ok((1.0 - lambda) * rfsv + lambda * qrh)
}
