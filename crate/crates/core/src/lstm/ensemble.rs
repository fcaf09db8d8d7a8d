use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::forward;
use super::train::{coin_samples, train_on_samples, training_samples, Sample};
use super::{LstmConfig, LstmError, LstmWeights, WeightsFile};
use crate::marketdata::{CoinSeries, DateRange, Panel};
use crate::par::Execution;

pub const ENSEMBLE_SIZE: usize = 10;

/// Fewest training windows a single coin needs for fine-tuning.
pub const MIN_FINE_TUNE_WINDOWS: usize = 50;

/// Identically shaped networks whose forecasts are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleFile", into = "EnsembleFile")]
pub struct Ensemble {
    pub config: LstmConfig,
    pub seeds: Vec<u64>,
    pub members: Vec<LstmWeights>,
}

impl Ensemble {
    pub fn new(config: LstmConfig, seeds: Vec<u64>, members: Vec<LstmWeights>) -> Result<Self, LstmError> {
        if members.is_empty() || seeds.len() != members.len() {
            return Err(LstmError::EnsembleSize {
                have: members.len(),
                need: seeds.len().max(1),
            });
        }
        let (d, h) = (config.input_dim(), config.hidden_dim);
        if let Some(m) = members.iter().find(|m| m.input_dim != d || m.hidden_dim != h) {
            return Err(LstmError::Format(format!(
                "member shape ({}, {}) differs from configured ({d}, {h})",
                m.input_dim, m.hidden_dim
            )));
        }
        Ok(Ensemble { config, seeds, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_file(&self) -> EnsembleFile {
        EnsembleFile {
            version: 1,
            config: self.config.clone(),
            seeds: self.seeds.clone(),
            members: self.members.iter().map(LstmWeights::to_file).collect(),
        }
    }

    pub fn from_file(f: &EnsembleFile) -> Result<Self, LstmError> {
        let members = f
            .members
            .iter()
            .map(LstmWeights::from_file)
            .collect::<Result<Vec<_>, _>>()?;
        Ensemble::new(f.config.clone(), f.seeds.clone(), members)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub version: u32,
    pub config: LstmConfig,
    pub seeds: Vec<u64>,
    pub members: Vec<WeightsFile>,
}

impl From<Ensemble> for EnsembleFile {
    fn from(e: Ensemble) -> Self {
        e.to_file()
    }
}

impl TryFrom<EnsembleFile> for Ensemble {
    type Error = LstmError;

    fn try_from(f: EnsembleFile) -> Result<Self, Self::Error> {
        Ensemble::from_file(&f)
    }
}

/// Mean of the member forecasts, in normalized units.
pub fn predict_ensemble(ensemble: &Ensemble, window: &[f64]) -> Result<f64, LstmError> {
    if ensemble.is_empty() {
        return Err(LstmError::EnsembleSize {
            have: 0,
            need: ENSEMBLE_SIZE,
        });
    }
    let mut sum = 0.0;
    for m in &ensemble.members {
        sum += forward(m, window, ensemble.config.window)?;
    }
    Ok(sum / ensemble.len() as f64)
}

fn init_member(config: &LstmConfig, seed: u64) -> LstmWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LstmWeights::init(config.input_dim(), config.hidden_dim, &mut rng)
}

/// Trains `size` members on the pooled panel with seeds `config.seed + k`.
pub fn train_ensemble(panel: &Panel, config: &LstmConfig, size: usize, exec: Execution) -> Result<Ensemble, LstmError> {
    config.validate()?;
    let (fit, val) = training_samples(&panel.coins, &panel.train, config);
    if fit.is_empty() {
        return Err(LstmError::NoWindows(" in the pooled training panel".into()));
    }
    let seeds: Vec<u64> = (0..size as u64).map(|k| config.seed.wrapping_add(k)).collect();
    let members = exec
        .map(&seeds, |&seed| {
            train_on_samples(init_member(config, seed), &fit, &val, config, config.epochs, seed).map(|o| o.weights)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ensemble::new(config.clone(), seeds, members)
}

/// The coin's own training windows, split like the pooled set.
fn coin_split(series: &CoinSeries, train: &DateRange, config: &LstmConfig) -> (Vec<Sample>, Vec<Sample>) {
    training_samples(std::slice::from_ref(series), train, config)
}

/// Continues training `universal` on one coin's training windows for
/// `epochs` epochs. All parameters stay trainable.
pub fn fine_tune(
    universal: &LstmWeights,
    series: &CoinSeries,
    train: &DateRange,
    config: &LstmConfig,
    epochs: usize,
    seed: u64,
) -> Result<LstmWeights, LstmError> {
    let (fit, val) = coin_split(series, train, config);
    let total = fit.len() + val.len();
    if total < MIN_FINE_TUNE_WINDOWS || fit.is_empty() {
        return Err(LstmError::NoWindows(format!(
            " for {}: {total} windows, need {MIN_FINE_TUNE_WINDOWS}",
            series.coin
        )));
    }
    if epochs == 0 {
        return Ok(universal.clone());
    }
    Ok(train_on_samples(universal.clone(), &fit, &val, config, epochs, seed)?.weights)
}

/// Fine-tunes every member of `universal` on one coin.
pub fn fine_tune_ensemble(
    universal: &Ensemble,
    series: &CoinSeries,
    train: &DateRange,
    epochs: usize,
) -> Result<Ensemble, LstmError> {
    let members = universal
        .members
        .iter()
        .zip(&universal.seeds)
        .map(|(m, &seed)| fine_tune(m, series, train, &universal.config, epochs, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ensemble::new(universal.config.clone(), universal.seeds.clone(), members)
}

/// Windows of `series` whose targets fall inside `range`.
pub fn windows_in(series: &CoinSeries, range: &DateRange, config: &LstmConfig) -> Vec<Sample> {
    coin_samples(series, config.inputs, config.window, range)
}
