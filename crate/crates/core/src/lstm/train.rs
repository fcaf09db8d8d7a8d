//! Pooled mini-batch training with early stopping on a tail-of-train split.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{batch_gradient, forward};
use super::{Adam, Inputs, LstmConfig, LstmError, LstmWeights};
use crate::marketdata::{CoinSeries, DateRange, Panel};

/// One training window: `window * input_dim` normalized inputs and the
/// normalized sigma that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub date: NaiveDate,
}

/// Model input for the `len` days before `date`, or `None` without a
/// gap-free history.
pub fn window_input(series: &CoinSeries, date: NaiveDate, len: usize, inputs: Inputs) -> Option<Vec<f64>> {
    let w = series.window_before(date, len)?;
    let mut x = Vec::with_capacity(len * inputs.dim());
    for i in w {
        x.push(series.norm_vol(i));
        if inputs == Inputs::Ret {
            x.push(series.norm_ret(i));
        }
    }
    Some(x)
}

/// Windows whose target and whole history lie inside `range`.
pub fn coin_samples(series: &CoinSeries, inputs: Inputs, window: usize, range: &DateRange) -> Vec<Sample> {
    series
        .days
        .iter()
        .enumerate()
        .filter(|(_, d)| range.contains(d.date))
        .filter_map(|(i, d)| {
            let start = d.date - Duration::days(window as i64);
            if start < range.start {
                return None;
            }
            window_input(series, d.date, window, inputs).map(|x| Sample {
                x,
                y: series.norm_vol(i),
                date: d.date,
            })
        })
        .collect()
}

/// Pooled training and validation windows. The last `val_fraction` of the
/// training date range is held out for validation.
pub fn training_samples(coins: &[CoinSeries], train: &DateRange, config: &LstmConfig) -> (Vec<Sample>, Vec<Sample>) {
    let val_days = (config.val_fraction * train.days() as f64).round() as i64;
    let cutoff = train.end - Duration::days(val_days);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for c in coins {
        for s in coin_samples(c, config.inputs, config.window, train) {
            if s.date > cutoff {
                val.push(s);
            } else {
                fit.push(s);
            }
        }
    }
    (fit, val)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: LstmWeights,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept (0 means the initial weights).
    pub best_epoch: usize,
}

/// Mean squared error of `w` over `samples`.
pub fn sample_loss(w: &LstmWeights, samples: &[Sample], steps: usize) -> Result<f64, LstmError> {
    let mut total = 0.0;
    for s in samples {
        let e = forward(w, &s.x, steps)? - s.y;
        total += e * e;
    }
    Ok(total / samples.len() as f64)
}

/// Adam from `init` over `fit` samples; keeps the weights with the best
/// validation loss when `val` is non-empty.
pub fn train_on_samples(
    init: LstmWeights,
    fit: &[Sample],
    val: &[Sample],
    config: &LstmConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainOutcome, LstmError> {
    if fit.is_empty() {
        return Err(LstmError::NoWindows(String::new()));
    }
    let steps = config.window;
    let need = steps * init.input_dim;
    if let Some(s) = fit.iter().chain(val).find(|s| s.x.len() != need) {
        return Err(LstmError::WindowLength { have: s.x.len(), need });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5a_u64);
    let mut weights = init;
    let mut opt = Adam::new(weights.params.len(), config.lr);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut grad = vec![0.0; weights.params.len()];
    let mut history = Vec::with_capacity(epochs);

    let mut best = weights.clone();
    let mut best_val = if val.is_empty() {
        f64::INFINITY
    } else {
        sample_loss(&weights, val, steps)?
    };
    let mut best_epoch = 0;
    let mut stale = 0;

    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let pairs: Vec<(&[f64], f64)> = batch.iter().map(|&i| (fit[i].x.as_slice(), fit[i].y)).collect();
            let loss = batch_gradient(&weights, &pairs, steps, &mut grad);
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut weights.params, &grad);
        }
        let train_loss = epoch_loss / fit.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(sample_loss(&weights, val, steps)?)
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        match val_loss {
            Some(v) if v < best_val => {
                best_val = v;
                best = weights.clone();
                best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if config.patience > 0 && stale >= config.patience {
                    break;
                }
            }
            None => {
                best = weights.clone();
                best_epoch = epoch;
            }
        }
    }
    Ok(TrainOutcome {
        weights: best,
        history,
        best_epoch,
    })
}

/// Trains one network on the pooled training windows of every coin.
pub fn train(panel: &Panel, config: &LstmConfig) -> Result<TrainOutcome, LstmError> {
    config.validate()?;
    let (fit, val) = training_samples(&panel.coins, &panel.train, config);
    if fit.is_empty() {
        return Err(LstmError::NoWindows(" in the pooled training panel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = LstmWeights::init(config.input_dim(), config.hidden_dim, &mut rng);
    train_on_samples(init, &fit, &val, config, config.epochs, config.seed)
}
