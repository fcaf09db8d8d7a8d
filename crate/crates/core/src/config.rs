//! Run configuration: one TOML file, every field defaulted.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evalharness::ModelId;
use crate::marketdata::{DateRange, FilterConfig, DEFAULT_MIN_BARS};
use crate::par::Execution;
use crate::qrh::{DEFAULT_FACTORS, DEFAULT_T_MAX, DEFAULT_T_MIN};
use crate::roughvol::{DEFAULT_DELTA_MAX, DEFAULT_TRUNCATION};
use crate::synth::SynthConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub klines_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Newline-separated coin list for the top-coins LSTM variant.
    pub top_coins_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            klines_dir: PathBuf::from("klines"),
            out_dir: PathBuf::from("out"),
            top_coins_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangesConfig {
    pub train_start: String,
    pub train_end: String,
    pub test_start: String,
    pub test_end: String,
}

impl Default for RangesConfig {
    fn default() -> Self {
        RangesConfig {
            train_start: "2020-01-01".into(),
            train_end: "2021-12-31".into(),
            test_start: "2022-01-01".into(),
            test_end: "2022-06-30".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateConfig {
    pub min_bars_per_day: usize,
    /// Fewest modeling days a coin needs inside the train+test span.
    pub min_history: usize,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            min_bars_per_day: DEFAULT_MIN_BARS,
            min_history: 365,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub list: Vec<String>,
    pub baseline: String,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            list: [
                "har",
                "ar7",
                "ar30",
                "rfsv",
                "qrh",
                "blend",
                "lstm7var",
                "lstm30var",
                "lstm7ret",
                "lstm30ret",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            baseline: "har".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfsvConfig {
    pub delta_max: usize,
    pub truncation: usize,
    /// Shortest gap-free history accepted for a forecast.
    pub min_history: usize,
}

impl Default for RfsvConfig {
    fn default() -> Self {
        RfsvConfig {
            delta_max: DEFAULT_DELTA_MAX,
            truncation: DEFAULT_TRUNCATION,
            min_history: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrhConfig {
    pub factors: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Days of Z history required before a value is used; defaults to `t_max`.
    pub burn_in: Option<usize>,
    pub lambda: f64,
}

impl Default for QrhConfig {
    fn default() -> Self {
        QrhConfig {
            factors: DEFAULT_FACTORS,
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            burn_in: None,
            lambda: 0.15,
        }
    }
}

impl QrhConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.t_max.round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSection {
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub ensemble_size: usize,
    pub fine_tune_epochs: usize,
}

impl Default for LstmSection {
    fn default() -> Self {
        LstmSection {
            seed: 0,
            lr: 1e-3,
            epochs: 100,
            batch_size: 256,
            patience: 10,
            val_fraction: 0.1,
            ensemble_size: crate::lstm::ENSEMBLE_SIZE,
            fine_tune_epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub lambdas: Vec<f64>,
    /// Second baseline for the λ sweep; empty to skip.
    pub sweep_baseline: String,
    /// Model whose input sensitivities are reported; empty to skip.
    pub sensitivity_model: String,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            lambdas: (0..=20).map(|k| k as f64 / 20.0).collect(),
            sweep_baseline: "lstm30ret".into(),
            sensitivity_model: "lstm30ret".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub ranges: RangesConfig,
    pub aggregate: AggregateConfig,
    pub filter: FilterConfig,
    pub models: ModelsConfig,
    pub rfsv: RfsvConfig,
    pub qrh: QrhConfig,
    pub lstm: LstmSection,
    pub evaluate: EvaluateConfig,
    pub synth: SynthConfig,
    /// Use the data-parallel paths (no effect without the `parallel` feature).
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            ranges: RangesConfig::default(),
            aggregate: AggregateConfig::default(),
            filter: FilterConfig::default(),
            models: ModelsConfig::default(),
            rfsv: RfsvConfig::default(),
            qrh: QrhConfig::default(),
            lstm: LstmSection::default(),
            evaluate: EvaluateConfig::default(),
            synth: SynthConfig::default(),
            parallel: true,
        }
    }
}

fn parse_date(field: &str, s: &str, problems: &mut Vec<String>) -> Option<NaiveDate> {
    match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        Ok(d) => Some(d),
        Err(e) => {
            problems.push(format!("ranges.{field}: cannot parse {s:?} as YYYY-MM-DD ({e})"));
            None
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::serde(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// `(train, test)`, or every date problem found.
    pub fn ranges(&self) -> Result<(DateRange, DateRange)> {
        let mut problems = Vec::new();
        let r = self.date_ranges(&mut problems);
        match r {
            Some(r) if problems.is_empty() => Ok(r),
            _ => Err(Error::Config(problems)),
        }
    }

    fn date_ranges(&self, problems: &mut Vec<String>) -> Option<(DateRange, DateRange)> {
        let r = &self.ranges;
        let ts = parse_date("train_start", &r.train_start, problems);
        let te = parse_date("train_end", &r.train_end, problems);
        let ss = parse_date("test_start", &r.test_start, problems);
        let se = parse_date("test_end", &r.test_end, problems);
        let (ts, te, ss, se) = (ts?, te?, ss?, se?);
        let mut ok = true;
        if ts > te {
            problems.push(format!("ranges: train_start {ts} is after train_end {te}"));
            ok = false;
        }
        if ss > se {
            problems.push(format!("ranges: test_start {ss} is after test_end {se}"));
            ok = false;
        }
        if te >= ss {
            problems.push(format!("ranges: train_end {te} must precede test_start {ss}"));
            ok = false;
        }
        ok.then_some((DateRange { start: ts, end: te }, DateRange { start: ss, end: se }))
    }

    /// Parsed model ids in list order.
    pub fn model_ids(&self) -> Result<Vec<ModelId>> {
        let mut problems = Vec::new();
        let ids = self.parse_models(&mut problems);
        if problems.is_empty() {
            Ok(ids)
        } else {
            Err(Error::Config(problems))
        }
    }

    fn parse_models(&self, problems: &mut Vec<String>) -> Vec<ModelId> {
        let mut ids = Vec::new();
        for name in &self.models.list {
            match name.parse::<ModelId>() {
                Ok(id) if ids.contains(&id) => problems.push(format!("models.list: {name} listed twice")),
                Ok(id) => ids.push(id),
                Err(e) => problems.push(format!("models.list: {e}")),
            }
        }
        ids
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        self.date_ranges(&mut p);
        let ids = self.parse_models(&mut p);
        if self.models.list.is_empty() {
            p.push("models.list is empty".into());
        }
        let names: Vec<String> = ids.iter().map(|m| m.to_string()).collect();
        match self.models.baseline.parse::<ModelId>() {
            Ok(b) if !names.contains(&b.to_string()) => p.push(format!("models.baseline {b} is not in models.list")),
            Ok(_) => {}
            Err(e) => p.push(format!("models.baseline: {e}")),
        }
        for (field, value) in [
            ("evaluate.sweep_baseline", &self.evaluate.sweep_baseline),
            ("evaluate.sensitivity_model", &self.evaluate.sensitivity_model),
        ] {
            if !value.is_empty() {
                if let Err(e) = value.parse::<ModelId>() {
                    p.push(format!("{field}: {e}"));
                }
            }
        }
        if let Ok(m) = self.evaluate.sensitivity_model.parse::<ModelId>() {
            if !m.is_lstm() {
                p.push(format!("evaluate.sensitivity_model {m} is not an LSTM model"));
            }
        }
        if ids.iter().any(|m| m.needs_top_coins()) {
            match &self.data.top_coins_file {
                None => p.push("data.top_coins_file is required by the top-coins LSTM model".into()),
                Some(f) if !f.is_file() => p.push(format!("data.top_coins_file {} does not exist", f.display())),
                Some(_) => {}
            }
        }
        if self.aggregate.min_bars_per_day == 0 || self.aggregate.min_bars_per_day > crate::marketdata::BARS_PER_DAY {
            p.push(format!(
                "aggregate.min_bars_per_day must be in 1..={}",
                crate::marketdata::BARS_PER_DAY
            ));
        }
        if self.rfsv.delta_max < 2 {
            p.push("rfsv.delta_max must be at least 2".into());
        }
        if self.rfsv.truncation < 2 {
            p.push("rfsv.truncation must be at least 2".into());
        }
        if self.rfsv.min_history < 2 || self.rfsv.min_history > self.rfsv.truncation {
            p.push("rfsv.min_history must be in 2..=rfsv.truncation".into());
        }
        if self.qrh.factors == 0 {
            p.push("qrh.factors must be positive".into());
        }
        if !(self.qrh.t_min > 0.0 && self.qrh.t_min < self.qrh.t_max) {
            p.push("qrh: need 0 < t_min < t_max".into());
        }
        if !(0.0..=1.0).contains(&self.qrh.lambda) {
            p.push(format!("qrh.lambda {} outside [0, 1]", self.qrh.lambda));
        }
        if !(self.lstm.lr > 0.0) {
            p.push("lstm.lr must be positive".into());
        }
        if self.lstm.batch_size == 0 {
            p.push("lstm.batch_size must be positive".into());
        }
        if self.lstm.ensemble_size == 0 {
            p.push("lstm.ensemble_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.lstm.val_fraction) {
            p.push("lstm.val_fraction must be in [0, 1)".into());
        }
        if self.evaluate.lambdas.is_empty() {
            p.push("evaluate.lambdas is empty".into());
        }
        if let Some(l) = self.evaluate.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            p.push(format!("evaluate.lambdas: {l} outside [0, 1]"));
        }
        if !self.evaluate.lambdas.contains(&0.0) {
            p.push("evaluate.lambdas must include 0 (the sweep's reference)".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Coins named in `data.top_coins_file`, one per line; `#` starts a comment.
    pub fn top_coins(&self) -> Result<Option<Vec<String>>> {
        let Some(path) = &self.data.top_coins_file else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Some(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        assert_eq!(c.problems(), Vec::<String>::new());
        let (train, test) = c.ranges().unwrap();
        assert_eq!(train.start, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        assert_eq!(test.end, NaiveDate::from_ymd_opt(2022, 6, 30).unwrap());
    }

    #[test]
    fn toml_round_trip_and_stable_hash() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        let mut d = c.clone();
        d.qrh.lambda = 0.2;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn every_problem_is_listed() {
        let mut c = RunConfig::default();
        c.ranges.train_end = "2022-03-01".into();
        c.models.list.push("gru".into());
        c.qrh.lambda = 1.5;
        c.lstm.batch_size = 0;
        let p = c.problems();
        assert_eq!(p.len(), 4, "{p:?}");
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(RunConfig::from_toml("[qrh]\nlamda = 0.1\n").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("[models]\nlist = [\"har\", \"rfsv\"]\n").unwrap();
        assert_eq!(c.models.baseline, "har");
        assert_eq!(c.qrh.factors, 10);
        assert!(c.validate().is_ok());
    }
}
