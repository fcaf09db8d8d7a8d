//! Input-gradient sensitivities of the de-normalized forecast.

use chrono::NaiveDate;
use serde::Serialize;

use super::cell::input_gradient;
use super::train::window_input;
use super::{Ensemble, Inputs, LstmError};
use crate::marketdata::{CoinSeries, Panel};
use crate::par::Execution;

/// Per-lag averages over a coin's test days. Index `k` holds lag `tau = k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityProfile {
    pub coin: String,
    pub alpha_mean: Vec<f64>,
    pub alpha_std: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub beta_std: Vec<f64>,
    /// Test days contributing to the averages.
    pub days: usize,
    /// Per lag, terms dropped because the lagged sigma was zero.
    pub zero_sigma: Vec<usize>,
}

/// One test day's forecast and lag-1 inputs and sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub date: NaiveDate,
    pub sigma_hat: f64,
    pub sigma2_prev: f64,
    pub ret_prev: f64,
    pub alpha1: Option<f64>,
    pub beta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub profiles: Vec<SensitivityProfile>,
    /// Scatter streams per coin, parallel to `profiles`.
    pub scatter: Vec<Vec<ScatterPoint>>,
}

/// Forecast, alpha and beta for one date. `alpha[k]` and `beta[k]` refer to
/// lag `k + 1`; alpha is `None` where the lagged sigma is zero.
pub struct DaySensitivity {
    pub sigma_hat: f64,
    pub alpha: Vec<Option<f64>>,
    pub beta: Vec<f64>,
}

/// Exact sensitivities of the raw ensemble forecast for `date` with respect
/// to raw lagged sigma squared and raw lagged returns.
pub fn day_sensitivity(
    ensemble: &Ensemble,
    series: &CoinSeries,
    date: NaiveDate,
) -> Result<Option<DaySensitivity>, LstmError> {
    let cfg = &ensemble.config;
    let p = cfg.window;
    let Some(x) = window_input(series, date, p, cfg.inputs) else {
        return Ok(None);
    };
    let range = series.window_before(date, p).expect("window exists");
    let d = cfg.input_dim();
    let mut y = 0.0;
    let mut dx = vec![0.0; x.len()];
    for m in &ensemble.members {
        let (ym, g) = input_gradient(m, &x, p)?;
        y += ym;
        for (a, b) in dx.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / ensemble.len() as f64;
    y *= inv;
    dx.iter_mut().for_each(|v| *v *= inv);

    let norm = series.norm;
    let mut alpha = vec![None; p];
    let mut beta = vec![0.0; p];
    for (j, i) in range.enumerate() {
        let tau = p - j;
        // d(raw forecast)/d(raw sigma) equals the normalized gradient since
        // both sides scale by vol_scale.
        let dsigma = dx[j * d];
        let s = series.days[i].sigma;
        if s != 0.0 {
            alpha[tau - 1] = Some(dsigma / (2.0 * s));
        }
        if cfg.inputs == Inputs::Ret {
            beta[tau - 1] = norm.vol_scale * dx[j * d + 1] / norm.ret_scale;
        }
    }
    Ok(Some(DaySensitivity {
        sigma_hat: norm.denorm_vol(y),
        alpha,
        beta,
    }))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn coin_profile(
    ensemble: &Ensemble,
    series: &CoinSeries,
    panel: &Panel,
) -> Result<(SensitivityProfile, Vec<ScatterPoint>), LstmError> {
    let p = ensemble.config.window;
    let mut alphas: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut betas: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut zero_sigma = vec![0; p];
    let mut scatter = Vec::new();
    for obs in series.rows_in(&panel.test) {
        let Some(s) = day_sensitivity(ensemble, series, obs.date)? else {
            continue;
        };
        for k in 0..p {
            match s.alpha[k] {
                Some(a) => alphas[k].push(a),
                None => zero_sigma[k] += 1,
            }
            betas[k].push(s.beta[k]);
        }
        let prev = series.days[series.position(obs.date) - 1];
        scatter.push(ScatterPoint {
            date: obs.date,
            sigma_hat: s.sigma_hat,
            sigma2_prev: prev.sigma * prev.sigma,
            ret_prev: prev.ret,
            alpha1: s.alpha[0],
            beta1: s.beta[0],
        });
    }
    let (alpha_mean, alpha_std): (Vec<f64>, Vec<f64>) = alphas.iter().map(|v| mean_std(v)).unzip();
    let (beta_mean, beta_std): (Vec<f64>, Vec<f64>) = betas.iter().map(|v| mean_std(v)).unzip();
    Ok((
        SensitivityProfile {
            coin: series.coin.clone(),
            alpha_mean,
            alpha_std,
            beta_mean,
            beta_std,
            days: scatter.len(),
            zero_sigma,
        },
        scatter,
    ))
}

/// Per-coin alpha and beta profiles averaged with equal weight over test days.
pub fn sensitivities(ensemble: &Ensemble, panel: &Panel, exec: Execution) -> Result<SensitivityReport, LstmError> {
    let per_coin = exec
        .map(&panel.coins, |c| coin_profile(ensemble, c, panel))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let (profiles, scatter) = per_coin.into_iter().unzip();
    Ok(SensitivityReport { profiles, scatter })
}
