//! Single-layer LSTM regressor with SiLU cell activations, trained from
//! scratch with exact reverse-mode gradients and Adam.
//!
//! Cell update per time step (gates `i, f, o` sigmoid, `g` and the cell
//! output SiLU):
//!
//! ```text
//! i = s(W_ii x + b_ii + W_hi h + b_hi)      c' = f * c + i * g
//! f = s(W_if x + b_if + W_hf h + b_hf)      h' = o * SiLU(c')
//! g = SiLU(W_ig x + b_ig + W_hg h + b_hg)
//! o = s(W_io x + b_io + W_ho h + b_ho)      y = w_d · h_p + b_d
//! ```

mod adam;
mod cell;
mod ensemble;
mod sensitivity;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use cell::{forward, forward_batch, gradients, input_gradient, sigmoid, silu, Gradients};
pub use ensemble::{
    fine_tune, fine_tune_ensemble, predict_ensemble, train_ensemble, windows_in, Ensemble, EnsembleFile, ENSEMBLE_SIZE,
    MIN_FINE_TUNE_WINDOWS,
};
pub use sensitivity::{
    day_sensitivity, sensitivities, DaySensitivity, ScatterPoint, SensitivityProfile, SensitivityReport,
};
pub use train::{
    coin_samples, sample_loss, train, train_on_samples, training_samples, window_input, EpochStats, Sample,
    TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstmError {
    #[error("window has {have} values, expected {need}")]
    WindowLength { have: usize, need: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no usable training windows{0}")]
    NoWindows(String),
    #[error("ensemble has {have} members, expected {need}")]
    EnsembleSize { have: usize, need: usize },
    #[error("weights file: {0}")]
    Format(String),
}

/// Network inputs: volatility only, or volatility and return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inputs {
    Var,
    Ret,
}

impl Inputs {
    pub fn dim(self) -> usize {
        match self {
            Inputs::Var => 1,
            Inputs::Ret => 2,
        }
    }

    pub fn hidden(self) -> usize {
        match self {
            Inputs::Var => 2,
            Inputs::Ret => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub inputs: Inputs,
    pub window: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub patience: usize,
    /// Fraction of the training date range held out (at its end) for validation.
    pub val_fraction: f64,
}

impl LstmConfig {
    pub fn new(inputs: Inputs, window: usize) -> Self {
        LstmConfig {
            inputs,
            window,
            hidden_dim: inputs.hidden(),
            seed: 0,
            lr: 1e-3,
            epochs: 100,
            batch_size: 256,
            patience: 10,
            val_fraction: 0.1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        let mut problems = Vec::new();
        if self.hidden_dim != self.inputs.hidden() {
            problems.push(format!(
                "hidden_dim {} does not match {:?} inputs (expected {})",
                self.hidden_dim,
                self.inputs,
                self.inputs.hidden()
            ));
        }
        if self.window != 7 && self.window != 30 {
            problems.push(format!("window {} not in {{7, 30}}", self.window));
        }
        if !(self.lr > 0.0) {
            problems.push("lr must be positive".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            problems.push("val_fraction must be in [0, 1)".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LstmError::Config(problems.join("; ")))
        }
    }
}

pub const GATES: [&str; 4] = ["i", "f", "g", "o"];

/// All trainable parameters in one flat vector.
///
/// Layout, gate order `i, f, g, o`: four `H x D` input matrices, four
/// `H x H` recurrent matrices, four input biases, four recurrent biases,
/// the dense weight (`H`) and the dense bias. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub params: Vec<f64>,
}

impl LstmWeights {
    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        let (d, h) = (input_dim, hidden_dim);
        4 * h * d + 4 * h * h + 8 * h + h + 1
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmWeights {
            input_dim,
            hidden_dim,
            params: vec![0.0; Self::param_count(input_dim, hidden_dim)],
        }
    }

    /// Uniform in `±1/sqrt(hidden_dim)`, deterministic in `seed`.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl rand::Rng) -> Self {
        let k = 1.0 / (hidden_dim as f64).sqrt();
        let mut w = Self::zeros(input_dim, hidden_dim);
        for p in &mut w.params {
            *p = rng.random_range(-k..k);
        }
        w
    }

    pub fn w_in_offset(&self, gate: usize) -> usize {
        gate * self.hidden_dim * self.input_dim
    }

    pub fn w_rec_offset(&self, gate: usize) -> usize {
        let (d, h) = (self.input_dim, self.hidden_dim);
        4 * h * d + gate * h * h
    }

    pub fn b_in_offset(&self, gate: usize) -> usize {
        let (d, h) = (self.input_dim, self.hidden_dim);
        4 * h * d + 4 * h * h + gate * h
    }

    pub fn b_rec_offset(&self, gate: usize) -> usize {
        self.b_in_offset(0) + 4 * self.hidden_dim + gate * self.hidden_dim
    }

    pub fn dense_offset(&self) -> usize {
        self.b_in_offset(0) + 8 * self.hidden_dim
    }

    pub fn dense_w(&self) -> &[f64] {
        let o = self.dense_offset();
        &self.params[o..o + self.hidden_dim]
    }

    pub fn dense_b(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn dense_b_mut(&mut self) -> &mut f64 {
        let n = self.params.len();
        &mut self.params[n - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_file(&self) -> WeightsFile {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let slice = |o: usize, n: usize| self.params[o..o + n].to_vec();
        WeightsFile {
            input_dim: d,
            hidden_dim: h,
            gates: GATES.iter().map(|s| s.to_string()).collect(),
            w_in: (0..4).map(|g| slice(self.w_in_offset(g), h * d)).collect(),
            w_rec: (0..4).map(|g| slice(self.w_rec_offset(g), h * h)).collect(),
            b_in: (0..4).map(|g| slice(self.b_in_offset(g), h)).collect(),
            b_rec: (0..4).map(|g| slice(self.b_rec_offset(g), h)).collect(),
            dense_w: self.dense_w().to_vec(),
            dense_b: self.dense_b(),
        }
    }

    pub fn from_file(f: &WeightsFile) -> Result<Self, LstmError> {
        let (d, h) = (f.input_dim, f.hidden_dim);
        let shapes_ok = f.w_in.len() == 4
            && f.w_rec.len() == 4
            && f.b_in.len() == 4
            && f.b_rec.len() == 4
            && f.w_in.iter().all(|m| m.len() == h * d)
            && f.w_rec.iter().all(|m| m.len() == h * h)
            && f.b_in.iter().chain(&f.b_rec).all(|b| b.len() == h)
            && f.dense_w.len() == h;
        if !shapes_ok {
            return Err(LstmError::Format(format!("arrays inconsistent with D={d}, H={h}")));
        }
        let mut params = Vec::with_capacity(Self::param_count(d, h));
        for group in [&f.w_in, &f.w_rec, &f.b_in, &f.b_rec] {
            for m in group {
                params.extend_from_slice(m);
            }
        }
        params.extend_from_slice(&f.dense_w);
        params.push(f.dense_b);
        let w = LstmWeights {
            input_dim: d,
            hidden_dim: h,
            params,
        };
        if !w.is_finite() {
            return Err(LstmError::Format("non-finite parameter".into()));
        }
        Ok(w)
    }
}

/// Serialized form of [`LstmWeights`]: shapes plus row-major arrays per gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub gates: Vec<String>,
    pub w_in: Vec<Vec<f64>>,
    pub w_rec: Vec<Vec<f64>>,
    pub b_in: Vec<Vec<f64>>,
    pub b_rec: Vec<Vec<f64>>,
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_grid_enforced() {
        assert!(LstmConfig::new(Inputs::Var, 7).validate().is_ok());
        assert!(LstmConfig::new(Inputs::Ret, 30).validate().is_ok());
        assert!(LstmConfig::new(Inputs::Ret, 10).validate().is_err());
        let mut c = LstmConfig::new(Inputs::Var, 7);
        c.hidden_dim = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = LstmWeights::init(2, 4, &mut rng);
        let json = serde_json::to_string(&w.to_file()).unwrap();
        let back = LstmWeights::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(w, back);
        let bound = 0.5;
        assert!(w.params.iter().all(|p| p.abs() <= bound));
    }

    #[test]
    fn param_layout_is_contiguous() {
        let w = LstmWeights::zeros(2, 4);
        assert_eq!(w.params.len(), 4 * 8 + 4 * 16 + 32 + 4 + 1);
        assert_eq!(w.w_rec_offset(0), 32);
        assert_eq!(w.b_in_offset(0), 96);
        assert_eq!(w.b_rec_offset(0), 112);
        assert_eq!(w.dense_offset(), 128);
    }
}
