//! Fitting and forecasting for every model id.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{EvalError, LstmVariant, ModelForecast, ModelId};
use crate::baselines::{fit_ar, fit_har, predict_raw, LinearModel, LinearSpec};
use crate::config::RunConfig;
use crate::lstm::{fine_tune_ensemble, predict_ensemble, train_ensemble, window_input, Ensemble, Inputs, LstmConfig};
use crate::marketdata::{CoinSeries, DateRange, Panel};
use crate::par::Execution;
use crate::qrh::{
    advance_z_in_place, blend, calibrate_qrh, kernel_nodes, qrh_forecast, KernelNodes, QrhCalibration, QrhState,
};
use crate::roughvol::{estimate_hurst_pooled, fractional_weights, rfsv_forecast, HurstEstimate, RfsvParams};
use crate::{Error, Result};

/// Settings shared by every fit.
pub struct FitContext<'a> {
    pub config: &'a RunConfig,
    pub top_coins: Option<Vec<String>>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSet {
    pub spec: LinearSpec,
    pub coins: BTreeMap<String, LinearModel>,
    pub failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinRough {
    pub estimate: HurstEstimate,
    pub params: RfsvParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfsvArtifact {
    /// Forecast with the pooled parameters rather than each coin's own.
    pub universal: bool,
    pub pooled: CoinRough,
    pub per_coin: BTreeMap<String, CoinRough>,
    pub failures: BTreeMap<String, String>,
    pub truncation: usize,
    pub min_history: usize,
}

impl RfsvArtifact {
    pub fn params_for(&self, coin: &str) -> Option<&RfsvParams> {
        if self.universal {
            Some(&self.pooled.params)
        } else {
            self.per_coin.get(coin).map(|r| &r.params)
        }
    }

    pub fn forecast_at(&self, series: &CoinSeries, date: NaiveDate) -> Option<f64> {
        let params = self.params_for(&series.coin)?;
        let n = series.run_before(date, self.truncation);
        if n < self.min_history.max(2) {
            return None;
        }
        let end = series.position(date);
        let history: Vec<f64> = series.days[end - n..end].iter().map(|d| d.sigma).collect();
        let weights = fractional_weights(params.h, n).ok()?;
        rfsv_forecast(params, &weights, &history).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrhArtifact {
    pub universal: bool,
    pub rfsv: RfsvArtifact,
    pub nodes: KernelNodes,
    pub burn_in: usize,
    pub pooled: Option<QrhCalibration>,
    pub per_coin: BTreeMap<String, QrhCalibration>,
    pub failures: BTreeMap<String, String>,
    pub lambda: f64,
}

impl QrhArtifact {
    pub fn calibration_for(&self, coin: &str) -> Option<&QrhCalibration> {
        if self.universal {
            self.pooled.as_ref()
        } else {
            self.per_coin.get(coin)
        }
    }

    pub fn forecast_at(&self, series: &CoinSeries, date: NaiveDate) -> Option<f64> {
        let cal = self.calibration_for(&series.coin)?;
        let end = series.position(date);
        if end == 0 || series.days[end - 1].date + Duration::days(1) != date {
            return None;
        }
        let z = (*z_path(series, end, &self.nodes, self.burn_in).last()?)?;
        Some(series.norm.denorm_vol(qrh_forecast(&cal.params, z)))
    }

    pub fn blend_at(&self, series: &CoinSeries, date: NaiveDate) -> Option<f64> {
        let r = self.rfsv.forecast_at(series, date)?;
        let q = self.forecast_at(series, date)?;
        blend(r, q, self.lambda).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmArtifact {
    pub ensemble: Ensemble,
    /// Coins the model forecasts; `None` means every coin.
    pub coins: Option<Vec<String>>,
    /// Per-coin fine-tuned ensembles; when non-empty only these coins are forecast.
    pub fine_tuned: BTreeMap<String, Ensemble>,
    pub failures: BTreeMap<String, String>,
}

impl LstmArtifact {
    pub fn ensemble_for(&self, coin: &str) -> Option<&Ensemble> {
        if !self.fine_tuned.is_empty() {
            return self.fine_tuned.get(coin);
        }
        match &self.coins {
            Some(list) if !list.iter().any(|c| c == coin) => None,
            _ => Some(&self.ensemble),
        }
    }

    pub fn forecast_at(&self, series: &CoinSeries, date: NaiveDate) -> Option<f64> {
        let ens = self.ensemble_for(&series.coin)?;
        let x = window_input(series, date, ens.config.window, ens.config.inputs)?;
        Some(series.norm.denorm_vol(predict_ensemble(ens, &x).ok()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Linear(LinearSet),
    Rfsv(RfsvArtifact),
    Qrh(QrhArtifact),
    Blend(QrhArtifact),
    Lstm(LstmArtifact),
}

impl FittedModel {
    /// Raw-sigma forecast for `date` from rows strictly before it.
    pub fn forecast_at(&self, series: &CoinSeries, date: NaiveDate) -> Option<f64> {
        match self {
            FittedModel::Linear(set) => {
                let model = set.coins.get(&series.coin)?;
                let w = series.window_before(date, model.max_lag())?;
                let history: Vec<f64> = w.map(|i| series.norm_vol(i)).collect();
                predict_raw(model, &history, series.norm.vol_scale).ok()
            }
            FittedModel::Rfsv(a) => a.forecast_at(series, date),
            FittedModel::Qrh(a) => a.forecast_at(series, date),
            FittedModel::Blend(a) => a.blend_at(series, date),
            FittedModel::Lstm(a) => a.forecast_at(series, date),
        }
    }

    pub fn failures(&self) -> &BTreeMap<String, String> {
        match self {
            FittedModel::Linear(s) => &s.failures,
            FittedModel::Rfsv(a) => &a.failures,
            FittedModel::Qrh(a) | FittedModel::Blend(a) => &a.failures,
            FittedModel::Lstm(a) => &a.failures,
        }
    }
}

/// Aggregate `Z` after each of the first `end` rows, or `None` before the
/// burn-in has elapsed. Calendar gaps decay the factors with zero return.
pub fn z_path(series: &CoinSeries, end: usize, nodes: &KernelNodes, burn_in: usize) -> Vec<Option<f64>> {
    let mut state = QrhState::new(nodes);
    let mut out = Vec::with_capacity(end);
    let mut prev: Option<NaiveDate> = None;
    for i in 0..end {
        let d = series.days[i].date;
        if let Some(p) = prev {
            for _ in 1..(d - p).num_days() {
                advance_z_in_place(&mut state, nodes, 0.0, burn_in);
            }
        }
        advance_z_in_place(&mut state, nodes, series.norm_ret(i), burn_in);
        out.push(state.burn_in_done.then_some(state.z));
        prev = Some(d);
    }
    out
}

/// Calibration rows `(Z_{t-1}, σ̃_t²)` from the coin's training days.
pub fn qrh_rows(series: &CoinSeries, train: &DateRange, nodes: &KernelNodes, burn_in: usize) -> (Vec<f64>, Vec<f64>) {
    let path = z_path(series, series.days.len(), nodes, burn_in);
    let mut z = Vec::new();
    let mut v = Vec::new();
    for i in 1..series.days.len() {
        let d = series.days[i].date;
        if !train.contains(d) || series.days[i - 1].date + Duration::days(1) != d {
            continue;
        }
        if let Some(zp) = path[i - 1] {
            z.push(zp);
            v.push(series.norm_vol(i).powi(2));
        }
    }
    (z, v)
}

/// Gap-free runs of positive training sigma, as log sigma.
fn log_sigma_segments(series: &CoinSeries, train: &DateRange) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for d in series.rows_in(train) {
        let contiguous = prev.is_some_and(|p| p + Duration::days(1) == d.date);
        if (!contiguous || d.sigma <= 0.0) && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if d.sigma > 0.0 {
            cur.push(d.sigma.ln());
        }
        prev = Some(d.date);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn model_error(id: ModelId, message: impl Into<String>) -> Error {
    EvalError::Model {
        model: id.to_string(),
        message: message.into(),
    }
    .into()
}

fn rough(est: HurstEstimate) -> Result<CoinRough> {
    Ok(CoinRough {
        params: RfsvParams::from_estimate(&est)?,
        estimate: est,
    })
}

fn fit_rfsv(id: ModelId, panel: &Panel, cfg: &RunConfig, universal: bool, exec: Execution) -> Result<RfsvArtifact> {
    let delta = cfg.rfsv.delta_max;
    let segments: Vec<Vec<Vec<f64>>> = exec.map(&panel.coins, |c| log_sigma_segments(c, &panel.train));
    let per: Vec<std::result::Result<CoinRough, String>> = exec.map(&segments, |segs| {
        let refs: Vec<&[f64]> = segs.iter().map(Vec::as_slice).collect();
        estimate_hurst_pooled(&refs, delta)
            .map_err(|e| e.to_string())
            .and_then(|e| rough(e).map_err(|e| e.to_string()))
    });
    let mut per_coin = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (c, r) in panel.coins.iter().zip(per) {
        match r {
            Ok(r) => {
                per_coin.insert(c.coin.clone(), r);
            }
            Err(e) => {
                failures.insert(c.coin.clone(), e);
            }
        }
    }
    let all: Vec<&[f64]> = segments.iter().flatten().map(Vec::as_slice).collect();
    let pooled = estimate_hurst_pooled(&all, delta).map_err(|e| model_error(id, e.to_string()))?;
    if !universal && per_coin.is_empty() {
        return Err(model_error(id, "no coin has enough history for a Hurst estimate"));
    }
    Ok(RfsvArtifact {
        universal,
        pooled: rough(pooled)?,
        per_coin,
        failures,
        truncation: cfg.rfsv.truncation,
        min_history: cfg.rfsv.min_history,
    })
}

fn fit_qrh(id: ModelId, panel: &Panel, cfg: &RunConfig, universal: bool, exec: Execution) -> Result<QrhArtifact> {
    let rfsv = fit_rfsv(id, panel, cfg, universal, exec)?;
    let nodes = kernel_nodes(rfsv.pooled.params.h, cfg.qrh.factors, cfg.qrh.t_min, cfg.qrh.t_max)?;
    let burn_in = cfg.qrh.burn_in();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = exec.map(&panel.coins, |c| qrh_rows(c, &panel.train, &nodes, burn_in));
    let mut per_coin = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut pooled = None;
    if universal {
        let z: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
        let v: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        pooled = Some(calibrate_qrh(&z, &v).map_err(|e| model_error(id, e.to_string()))?);
    } else {
        for (c, (z, v)) in panel.coins.iter().zip(&rows) {
            match calibrate_qrh(z, v) {
                Ok(cal) => {
                    per_coin.insert(c.coin.clone(), cal);
                }
                Err(e) => {
                    failures.insert(c.coin.clone(), e.to_string());
                }
            }
        }
        if per_coin.is_empty() {
            return Err(model_error(id, "no coin could be calibrated"));
        }
    }
    Ok(QrhArtifact {
        universal,
        rfsv,
        nodes,
        burn_in,
        pooled,
        per_coin,
        failures,
        lambda: cfg.qrh.lambda,
    })
}

fn fit_linear(id: ModelId, panel: &Panel, spec: LinearSpec, exec: Execution) -> Result<LinearSet> {
    let fits = exec.map(&panel.coins, |c| match spec {
        LinearSpec::Har => fit_har(c, &panel.train),
        LinearSpec::Ar { p } => fit_ar(c, p, &panel.train),
    });
    let mut coins = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (c, f) in panel.coins.iter().zip(fits) {
        match f {
            Ok(m) => {
                coins.insert(c.coin.clone(), m);
            }
            Err(e) => {
                failures.insert(c.coin.clone(), e.to_string());
            }
        }
    }
    if coins.is_empty() {
        return Err(model_error(id, "no coin could be fitted"));
    }
    Ok(LinearSet { spec, coins, failures })
}

pub fn lstm_config(cfg: &RunConfig, inputs: Inputs, window: usize) -> LstmConfig {
    let l = &cfg.lstm;
    LstmConfig {
        seed: l.seed,
        lr: l.lr,
        epochs: l.epochs,
        batch_size: l.batch_size,
        patience: l.patience,
        val_fraction: l.val_fraction,
        ..LstmConfig::new(inputs, window)
    }
}

/// Fits `id` on the panel's training rows. `done` holds models fitted
/// earlier in the same run; the fine-tuned LSTM reuses the universal one.
pub fn fit_model(
    id: ModelId,
    panel: &Panel,
    ctx: &FitContext,
    done: &BTreeMap<String, FittedModel>,
) -> Result<FittedModel> {
    let cfg = ctx.config;
    let exec = ctx.exec;
    Ok(match id {
        ModelId::Har => FittedModel::Linear(fit_linear(id, panel, LinearSpec::Har, exec)?),
        ModelId::Ar(p) => FittedModel::Linear(fit_linear(id, panel, LinearSpec::Ar { p }, exec)?),
        ModelId::Rfsv { universal } => FittedModel::Rfsv(fit_rfsv(id, panel, cfg, universal, exec)?),
        ModelId::Qrh { universal } => FittedModel::Qrh(fit_qrh(id, panel, cfg, universal, exec)?),
        ModelId::Blend => FittedModel::Blend(fit_qrh(id, panel, cfg, true, exec)?),
        ModelId::Lstm {
            inputs,
            window,
            variant,
        } => {
            let lc = lstm_config(cfg, inputs, window);
            let size = cfg.lstm.ensemble_size;
            match variant {
                LstmVariant::Universal => FittedModel::Lstm(LstmArtifact {
                    ensemble: train_ensemble(panel, &lc, size, exec)?,
                    coins: None,
                    fine_tuned: BTreeMap::new(),
                    failures: BTreeMap::new(),
                }),
                LstmVariant::Top => {
                    let list = ctx
                        .top_coins
                        .clone()
                        .ok_or_else(|| model_error(id, "no top-coins list supplied"))?;
                    let sub = panel.subset(&list);
                    if sub.coins.is_empty() {
                        return Err(model_error(id, "none of the listed coins are in the panel"));
                    }
                    let kept: Vec<String> = sub.coins.iter().map(|c| c.coin.clone()).collect();
                    FittedModel::Lstm(LstmArtifact {
                        ensemble: train_ensemble(&sub, &lc, size, exec)?,
                        coins: Some(kept),
                        fine_tuned: BTreeMap::new(),
                        failures: BTreeMap::new(),
                    })
                }
                LstmVariant::FineTuned => {
                    let base_id = ModelId::Lstm {
                        inputs,
                        window,
                        variant: LstmVariant::Universal,
                    }
                    .to_string();
                    let universal = match done.get(&base_id) {
                        Some(FittedModel::Lstm(a)) => a.ensemble.clone(),
                        _ => train_ensemble(panel, &lc, size, exec)?,
                    };
                    let epochs = cfg.lstm.fine_tune_epochs;
                    let tuned = exec.map(&panel.coins, |c| {
                        fine_tune_ensemble(&universal, c, &panel.train, epochs)
                    });
                    let mut fine_tuned = BTreeMap::new();
                    let mut failures = BTreeMap::new();
                    for (c, t) in panel.coins.iter().zip(tuned) {
                        match t {
                            Ok(e) => {
                                fine_tuned.insert(c.coin.clone(), e);
                            }
                            Err(e) => {
                                failures.insert(c.coin.clone(), e.to_string());
                            }
                        }
                    }
                    if fine_tuned.is_empty() {
                        return Err(model_error(id, "no coin has enough windows to fine-tune"));
                    }
                    FittedModel::Lstm(LstmArtifact {
                        ensemble: universal,
                        coins: None,
                        fine_tuned,
                        failures,
                    })
                }
            }
        }
    })
}

/// Forecasts for every coin and test day the model can cover.
pub fn forecast_model(id: &str, model: &FittedModel, panel: &Panel, exec: Execution) -> Vec<ModelForecast> {
    exec.map(&panel.coins, |c| {
        let rows: Vec<(NaiveDate, f64)> = c
            .rows_in(&panel.test)
            .filter_map(|d| model.forecast_at(c, d.date).map(|f| (d.date, f)))
            .collect();
        ModelForecast {
            model: id.to_string(),
            coin: c.coin.clone(),
            rows,
        }
    })
    .into_iter()
    .filter(|f| !f.rows.is_empty())
    .collect()
}
