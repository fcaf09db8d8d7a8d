//! Out-of-sample forecasting, MSE ratio tables, the λ sweep and the staged
//! experiment runner.

mod experiment;
mod metrics;
mod models;
mod sweep;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lstm::Inputs;

pub use experiment::{
    evaluate_stage, fit_stage, forecast_stage, ingest_stage, read_forecasts, run_experiment, sensitivities_stage,
    sweep_stage, write_forecasts, ExperimentOutcome, Manifest, StageRecord, FORECASTS_DIR, MANIFEST, MODELS_DIR,
    REPORTS_DIR, SENSITIVITIES_DIR, SWEEP_DIR,
};
pub use metrics::{
    boxplot, mse, ratio_table, realized, BoxStats, EvalReport, Excluded, ModelForecast, RatioRow, Realized,
};
pub use models::{
    fit_model, forecast_model, lstm_config, qrh_rows, z_path, CoinRough, FitContext, FittedModel, LinearSet,
    LstmArtifact, QrhArtifact, RfsvArtifact,
};
pub use sweep::{lambda_label, lambda_sweep, SweepReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{model} / {coin}: no test dates shared with the realized series")]
    EmptyIntersection { model: String, coin: String },
    #[error("baseline {baseline} has no forecasts for {coin}")]
    MissingBaseline { baseline: String, coin: String },
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error("missing {what} ({path}); run `{step}` first")]
    MissingArtifact {
        what: String,
        path: String,
        step: &'static str,
    },
    #[error("{model}: {message}")]
    Model { model: String, message: String },
    #[error("forecast streams are not aligned: {0}")]
    Misaligned(String),
}

/// LSTM training population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LstmVariant {
    /// Pooled over every coin.
    Universal,
    /// Pooled over the coins in the top-coins file.
    Top,
    /// Universal ensemble fine-tuned per coin.
    FineTuned,
}

/// Forecasting devices known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    Har,
    Ar(usize),
    Rfsv {
        universal: bool,
    },
    Qrh {
        universal: bool,
    },
    Blend,
    Lstm {
        inputs: Inputs,
        window: usize,
        variant: LstmVariant,
    },
}

impl ModelId {
    pub fn is_lstm(&self) -> bool {
        matches!(self, ModelId::Lstm { .. })
    }

    pub fn needs_top_coins(&self) -> bool {
        matches!(
            self,
            ModelId::Lstm {
                variant: LstmVariant::Top,
                ..
            }
        )
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Har => write!(f, "har"),
            ModelId::Ar(p) => write!(f, "ar{p}"),
            ModelId::Rfsv { universal: true } => write!(f, "rfsv"),
            ModelId::Rfsv { universal: false } => write!(f, "rfsv_coin"),
            ModelId::Qrh { universal: true } => write!(f, "qrh"),
            ModelId::Qrh { universal: false } => write!(f, "qrh_coin"),
            ModelId::Blend => write!(f, "blend"),
            ModelId::Lstm {
                inputs,
                window,
                variant,
            } => {
                let kind = match inputs {
                    Inputs::Var => "var",
                    Inputs::Ret => "ret",
                };
                let suffix = match variant {
                    LstmVariant::Universal => "",
                    LstmVariant::Top => "_top50",
                    LstmVariant::FineTuned => "_ft",
                };
                write!(f, "lstm{window}{kind}{suffix}")
            }
        }
    }
}

impl FromStr for ModelId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || EvalError::UnknownModel(s.to_string());
        Ok(match s {
            "har" => ModelId::Har,
            "rfsv" => ModelId::Rfsv { universal: true },
            "rfsv_coin" => ModelId::Rfsv { universal: false },
            "qrh" => ModelId::Qrh { universal: true },
            "qrh_coin" => ModelId::Qrh { universal: false },
            "blend" => ModelId::Blend,
            _ if s.starts_with("ar") => {
                let p: usize = s[2..].parse().map_err(|_| unknown())?;
                if p == 0 || s[2..].starts_with('0') {
                    return Err(unknown());
                }
                ModelId::Ar(p)
            }
            _ if s.starts_with("lstm") => {
                let rest = &s[4..];
                let (rest, variant) = if let Some(r) = rest.strip_suffix("_top50") {
                    (r, LstmVariant::Top)
                } else if let Some(r) = rest.strip_suffix("_ft") {
                    (r, LstmVariant::FineTuned)
                } else {
                    (rest, LstmVariant::Universal)
                };
                let (window, inputs) = if let Some(w) = rest.strip_suffix("var") {
                    (w, Inputs::Var)
                } else if let Some(w) = rest.strip_suffix("ret") {
                    (w, Inputs::Ret)
                } else {
                    return Err(unknown());
                };
                let window = match window {
                    "7" => 7,
                    "30" => 30,
                    _ => return Err(unknown()),
                };
                if variant != LstmVariant::Universal && (inputs, window) != (Inputs::Ret, 30) {
                    return Err(unknown());
                }
                ModelId::Lstm {
                    inputs,
                    window,
                    variant,
                }
            }
            _ => return Err(unknown()),
        })
    }
}
