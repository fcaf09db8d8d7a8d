//! Daily realized-volatility forecasting for cryptocurrency panels.
//!
//! The crate is organised around the pipeline it serves:
//!
//! - [`marketdata`]: 5-minute kline ingestion, daily realized volatility,
//!   universe filtering and train/test panels with per-coin normalization.
//! - [`baselines`]: per-coin AR(p) and HAR regressions.
//! - [`roughvol`]: Hurst/ν estimation, the fractional (RFSV) predictor and an
//!   exact fractional Brownian motion simulator.
//! - [`qrh`]: the quadratic rough Heston device (exponential-sum kernel, Z
//!   factors, calibration) and its blend with RFSV.
//! - [`lstm`]: a small from-scratch LSTM regressor with exact gradients, Adam,
//!   seeded ensembles, fine-tuning and input sensitivities.
//! - [`evalharness`]: out-of-sample forecasts, MSE ratio tables, λ sweeps and
//!   the experiment runner.
//! - [`synth`]: a planted-parameter generator for klines and daily panels.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod error;
pub mod evalharness;
pub mod linalg;
pub mod lstm;
pub mod marketdata;
pub mod par;
pub mod qrh;
pub mod roughvol;
pub mod synth;

pub use error::{Error, Result};
