//! File-backed pipeline stages. Every stage reads its inputs from the output
//! directory, writes deterministic files and records their hashes in
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::models::{fit_model, forecast_model, FitContext, FittedModel};
use super::sweep::{lambda_sweep, SweepReport};
use super::{ratio_table, realized, EvalError, EvalReport, ModelForecast, ModelId};
use crate::config::RunConfig;
use crate::lstm::sensitivities;
use crate::marketdata::{
    ingest_dir, read_json, read_panel, write_json, write_panel, IngestSettings, Panel, PANEL_CSV, PANEL_JSON,
};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MODELS_DIR: &str = "models";
pub const FORECASTS_DIR: &str = "forecasts";
pub const REPORTS_DIR: &str = "reports";
pub const SENSITIVITIES_DIR: &str = "sensitivities";
pub const SWEEP_DIR: &str = "sweep";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// SHA-256 of each output, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records `outputs` for `stage`, starting a fresh manifest when the
/// configuration changed since the last stage.
fn record_stage(cfg: &RunConfig, stage: &str, outputs: &[PathBuf]) -> Result<()> {
    let out = &cfg.data.out_dir;
    let path = out.join(MANIFEST);
    let hash = cfg.hash();
    let mut manifest = match read_json::<Manifest>(&path) {
        Ok(m) if m.config_hash == hash => m,
        _ => Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hash,
            config: cfg.clone(),
            stages: BTreeMap::new(),
        },
    };
    let mut rec = StageRecord {
        outputs: BTreeMap::new(),
    };
    for p in outputs {
        let rel = p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/");
        rec.outputs.insert(rel, sha256_file(p)?);
    }
    manifest.stages.insert(stage.to_string(), rec);
    write_json(&path, &manifest)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::serde(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn missing(what: impl Into<String>, path: &Path, step: &'static str) -> Error {
    EvalError::MissingArtifact {
        what: what.into(),
        path: path.display().to_string(),
        step,
    }
    .into()
}

fn load_panel(cfg: &RunConfig) -> Result<Panel> {
    let out = &cfg.data.out_dir;
    for f in [PANEL_CSV, PANEL_JSON] {
        let p = out.join(f);
        if !p.is_file() {
            return Err(missing("panel", &p, "ingest"));
        }
    }
    Ok(read_panel(out)?.0)
}

fn model_path(cfg: &RunConfig, id: &str) -> PathBuf {
    cfg.data.out_dir.join(MODELS_DIR).join(format!("{id}.json"))
}

fn forecast_path(cfg: &RunConfig, id: &str) -> PathBuf {
    cfg.data.out_dir.join(FORECASTS_DIR).join(format!("{id}.csv"))
}

fn load_model(cfg: &RunConfig, id: &str) -> Result<FittedModel> {
    let p = model_path(cfg, id);
    if !p.is_file() {
        return Err(missing(format!("fitted model {id}"), &p, "fit"));
    }
    read_json(&p)
}

/// Parses klines, aggregates, filters and writes the panel.
pub fn ingest_stage(cfg: &RunConfig) -> Result<Panel> {
    cfg.validate()?;
    let (train, test) = cfg.ranges()?;
    let dir = &cfg.data.klines_dir;
    if !dir.is_dir() {
        return Err(Error::Config(vec![format!(
            "data.klines_dir {} does not exist",
            dir.display()
        )]));
    }
    let settings = IngestSettings {
        min_bars_per_day: cfg.aggregate.min_bars_per_day,
        min_history: cfg.aggregate.min_history,
        filter: cfg.filter.clone(),
        train,
        test,
    };
    let ingested = ingest_dir(dir, &settings)?;
    let out = &cfg.data.out_dir;
    write_panel(out, &ingested.daily, &ingested.meta)?;
    record_stage(cfg, "ingest", &[out.join(PANEL_CSV), out.join(PANEL_JSON)])?;
    Ok(ingested.panel)
}

#[derive(Serialize)]
struct RoughRow<'a> {
    model: &'a str,
    coin: &'a str,
    h_raw: f64,
    h: f64,
    nu: f64,
    c: f64,
    clamped: bool,
}

#[derive(Serialize)]
struct QrhRow<'a> {
    model: &'a str,
    scope: &'a str,
    a: f64,
    b: f64,
    c: f64,
    se_a: Option<f64>,
    se_b: Option<f64>,
    se_c: Option<f64>,
    rows: usize,
    a_floored: bool,
    c_floored: bool,
    b_negative: bool,
}

#[derive(Serialize)]
struct FailureRow<'a> {
    model: &'a str,
    coin: &'a str,
    reason: &'a str,
}

/// Fits every configured model and writes `models/<id>.json` plus parameter
/// tables for the rough-volatility devices.
pub fn fit_stage(cfg: &RunConfig) -> Result<BTreeMap<String, FittedModel>> {
    cfg.validate()?;
    let ids = cfg.model_ids()?;
    let panel = load_panel(cfg)?;
    let ctx = FitContext {
        config: cfg,
        top_coins: cfg.top_coins()?,
        exec: cfg.execution(),
    };
    let mut done: BTreeMap<String, FittedModel> = BTreeMap::new();
    let mut outputs = Vec::new();
    for id in &ids {
        let name = id.to_string();
        let fitted = fit_model(*id, &panel, &ctx, &done)?;
        let p = model_path(cfg, &name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_json(&p, &fitted)?;
        outputs.push(p);
        done.insert(name, fitted);
    }

    let reports = cfg.data.out_dir.join(REPORTS_DIR);
    let mut rough = Vec::new();
    let mut qrh = Vec::new();
    let mut failures = Vec::new();
    for (name, m) in &done {
        for (coin, reason) in m.failures() {
            failures.push(FailureRow {
                model: name,
                coin,
                reason,
            });
        }
        let (rfsv, q) = match m {
            FittedModel::Rfsv(a) => (a, None),
            FittedModel::Qrh(a) | FittedModel::Blend(a) => (&a.rfsv, Some(a)),
            _ => continue,
        };
        let pooled = &rfsv.pooled;
        rough.push(RoughRow {
            model: name,
            coin: "*",
            h_raw: pooled.estimate.h_raw,
            h: pooled.estimate.h,
            nu: pooled.estimate.nu,
            c: pooled.params.c,
            clamped: pooled.estimate.clamped,
        });
        for (coin, r) in &rfsv.per_coin {
            rough.push(RoughRow {
                model: name,
                coin,
                h_raw: r.estimate.h_raw,
                h: r.estimate.h,
                nu: r.estimate.nu,
                c: r.params.c,
                clamped: r.estimate.clamped,
            });
        }
        if let Some(q) = q {
            let cals = q
                .pooled
                .iter()
                .map(|c| ("*", c))
                .chain(q.per_coin.iter().map(|(k, c)| (k.as_str(), c)));
            for (scope, cal) in cals {
                let se = cal.std_errors;
                qrh.push(QrhRow {
                    model: name,
                    scope,
                    a: cal.params.a,
                    b: cal.params.b,
                    c: cal.params.c,
                    se_a: se.map(|s| s[0]),
                    se_b: se.map(|s| s[1]),
                    se_c: se.map(|s| s[2]),
                    rows: cal.rows,
                    a_floored: cal.a_floored,
                    c_floored: cal.c_floored,
                    b_negative: cal.b_negative,
                });
            }
        }
    }
    let rough_path = reports.join("rfsv_params.csv");
    let qrh_path = reports.join("qrh_params.csv");
    let fail_path = reports.join("fit_failures.csv");
    write_csv(&rough_path, rough)?;
    write_csv(&qrh_path, qrh)?;
    write_csv(&fail_path, failures)?;
    outputs.extend([rough_path, qrh_path, fail_path]);
    record_stage(cfg, "fit", &outputs)?;
    Ok(done)
}

#[derive(Serialize, Deserialize)]
struct ForecastRow {
    model: String,
    coin: String,
    date: NaiveDate,
    sigma_hat: f64,
}

pub fn write_forecasts(path: &Path, forecasts: &[ModelForecast]) -> Result<()> {
    write_csv(
        path,
        forecasts.iter().flat_map(|f| {
            f.rows.iter().map(move |&(date, sigma_hat)| ForecastRow {
                model: f.model.clone(),
                coin: f.coin.clone(),
                date,
                sigma_hat,
            })
        }),
    )
}

/// Reads a forecast CSV, grouping rows by coin in file order.
pub fn read_forecasts(path: &Path) -> Result<Vec<ModelForecast>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<ModelForecast> = Vec::new();
    for row in csv::Reader::from_reader(file).deserialize::<ForecastRow>() {
        let row = row.map_err(|e| Error::serde(path, e))?;
        match out.last_mut() {
            Some(f) if f.coin == row.coin && f.model == row.model => f.rows.push((row.date, row.sigma_hat)),
            _ => out.push(ModelForecast {
                model: row.model,
                coin: row.coin,
                rows: vec![(row.date, row.sigma_hat)],
            }),
        }
    }
    Ok(out)
}

/// Writes `forecasts/<id>.csv` for every configured model.
pub fn forecast_stage(cfg: &RunConfig) -> Result<BTreeMap<String, Vec<ModelForecast>>> {
    cfg.validate()?;
    let ids = cfg.model_ids()?;
    let panel = load_panel(cfg)?;
    let models: Vec<(String, FittedModel)> = ids
        .iter()
        .map(|id| {
            let name = id.to_string();
            load_model(cfg, &name).map(|m| (name, m))
        })
        .collect::<Result<_>>()?;
    let mut all = BTreeMap::new();
    let mut outputs = Vec::new();
    for (name, model) in &models {
        let f = forecast_model(name, model, &panel, cfg.execution());
        let p = forecast_path(cfg, name);
        write_forecasts(&p, &f)?;
        outputs.push(p);
        all.insert(name.clone(), f);
    }
    record_stage(cfg, "forecast", &outputs)?;
    Ok(all)
}

fn load_forecasts(cfg: &RunConfig, id: &str) -> Result<Vec<ModelForecast>> {
    let p = forecast_path(cfg, id);
    if !p.is_file() {
        return Err(missing(format!("forecasts for {id}"), &p, "forecast"));
    }
    read_forecasts(&p)
}

fn write_report(dir: &Path, prefix: &str, report: &EvalReport) -> Result<Vec<PathBuf>> {
    let ratios = dir.join(format!("{prefix}ratios.csv"));
    let summary = dir.join(format!("{prefix}summary.csv"));
    let excluded = dir.join(format!("{prefix}excluded.csv"));
    write_csv(&ratios, &report.rows)?;
    write_csv(&summary, &report.summary)?;
    write_csv(&excluded, &report.excluded)?;
    Ok(vec![ratios, summary, excluded])
}

/// MSE ratio tables against the configured baseline.
pub fn evaluate_stage(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let ids = cfg.model_ids()?;
    let panel = load_panel(cfg)?;
    let mut forecasts = Vec::new();
    for id in &ids {
        forecasts.extend(load_forecasts(cfg, &id.to_string())?);
    }
    let report = ratio_table(&forecasts, &realized(&panel), &cfg.models.baseline)?;
    let outputs = write_report(&cfg.data.out_dir.join(REPORTS_DIR), "", &report)?;
    record_stage(cfg, "evaluate", &outputs)?;
    Ok(report)
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    coin: &'a str,
    tau: usize,
    alpha_mean: f64,
    alpha_std: f64,
    beta_mean: f64,
    beta_std: f64,
    days: usize,
    zero_sigma: usize,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    coin: &'a str,
    date: NaiveDate,
    sigma_hat: f64,
    sigma2_prev: f64,
    ret_prev: f64,
    alpha1: Option<f64>,
    beta1: f64,
}

/// α(τ), β(τ) profiles and scatter streams for the configured LSTM.
pub fn sensitivities_stage(cfg: &RunConfig) -> Result<crate::lstm::SensitivityReport> {
    cfg.validate()?;
    let name = cfg.evaluate.sensitivity_model.clone();
    let id: ModelId = name.parse()?;
    let panel = load_panel(cfg)?;
    let FittedModel::Lstm(art) = load_model(cfg, &id.to_string())? else {
        return Err(Error::Config(vec![format!("{name} is not an LSTM model")]));
    };
    let report = sensitivities(&art.ensemble, &panel, cfg.execution())?;
    let dir = cfg.data.out_dir.join(SENSITIVITIES_DIR);
    let profile_path = dir.join("alpha_beta.csv");
    let scatter_path = dir.join("scatter.csv");
    write_csv(
        &profile_path,
        report.profiles.iter().flat_map(|p| {
            (0..p.alpha_mean.len()).map(move |k| ProfileRow {
                coin: &p.coin,
                tau: k + 1,
                alpha_mean: p.alpha_mean[k],
                alpha_std: p.alpha_std[k],
                beta_mean: p.beta_mean[k],
                beta_std: p.beta_std[k],
                days: p.days,
                zero_sigma: p.zero_sigma[k],
            })
        }),
    )?;
    write_csv(
        &scatter_path,
        report.profiles.iter().zip(&report.scatter).flat_map(|(p, pts)| {
            pts.iter().map(move |s| ScatterRow {
                coin: &p.coin,
                date: s.date,
                sigma_hat: s.sigma_hat,
                sigma2_prev: s.sigma2_prev,
                ret_prev: s.ret_prev,
                alpha1: s.alpha1,
                beta1: s.beta1,
            })
        }),
    )?;
    record_stage(cfg, "sensitivities", &[profile_path, scatter_path])?;
    Ok(report)
}

#[derive(Serialize)]
struct LambdaRow {
    lambda: f64,
    median_ratio: f64,
    is_star: bool,
}

/// Blends the universal RFSV and QRH forecasts over the configured λ grid.
pub fn sweep_stage(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let panel = load_panel(cfg)?;
    let rfsv = load_forecasts(cfg, "rfsv")?;
    let qrh = load_forecasts(cfg, "qrh")?;
    let lstm = match cfg.evaluate.sweep_baseline.as_str() {
        "" => None,
        id if forecast_path(cfg, id).is_file() => Some(load_forecasts(cfg, id)?),
        _ => None,
    };
    let report = lambda_sweep(&rfsv, &qrh, &realized(&panel), &cfg.evaluate.lambdas, lstm.as_deref())?;
    let dir = cfg.data.out_dir.join(SWEEP_DIR);
    let mut outputs = write_report(&dir, "vs_rfsv_", &report.vs_rfsv)?;
    if let Some(vs) = &report.vs_lstm {
        outputs.extend(write_report(&dir, "vs_lstm_", vs)?);
    }
    let lambda_path = dir.join("lambda.csv");
    write_csv(
        &lambda_path,
        report
            .lambdas
            .iter()
            .zip(&report.medians)
            .map(|(&lambda, &median_ratio)| LambdaRow {
                lambda,
                median_ratio,
                is_star: lambda == report.lambda_star,
            }),
    )?;
    outputs.push(lambda_path);
    record_stage(cfg, "sweep", &outputs)?;
    Ok(report)
}

/// Summary of a full run from an existing panel.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub sweep: Option<SweepReport>,
    pub sensitivities: bool,
}

/// fit, forecast, evaluate, then sensitivities and the λ sweep when their
/// inputs are among the configured models.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let ids: Vec<String> = cfg.model_ids()?.iter().map(|m| m.to_string()).collect();
    fit_stage(cfg)?;
    forecast_stage(cfg)?;
    let report = evaluate_stage(cfg)?;
    let sens = !cfg.evaluate.sensitivity_model.is_empty() && ids.contains(&cfg.evaluate.sensitivity_model);
    if sens {
        sensitivities_stage(cfg)?;
    }
    let sweep = if ids.iter().any(|m| m == "rfsv") && ids.iter().any(|m| m == "qrh") {
        Some(sweep_stage(cfg)?)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        report,
        sweep,
        sensitivities: sens,
    })
}
