//! Per-coin AR(p) and HAR volatility regressions fitted by least squares on
//! normalized training sigmas.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::marketdata::{CoinSeries, DateRange};

/// HAR windows: daily, weekly and monthly for a 7-day trading week.
pub const HAR_WINDOWS: [usize; 3] = [1, 7, 30];
const HAR_MIN_ROWS: usize = 40;
const AR_EXTRA_ROWS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{coin}: {have} usable training rows, need {need}")]
    InsufficientRows { coin: String, have: usize, need: usize },
    #[error("{coin}: regression failed: {source}")]
    Regression {
        coin: String,
        #[source]
        source: LinalgError,
    },
    #[error("history of length {have} is shorter than the model's {need} lags")]
    ShortHistory { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinearSpec {
    Ar { p: usize },
    Har,
}

impl LinearSpec {
    pub fn max_lag(&self) -> usize {
        match self {
            LinearSpec::Ar { p } => *p,
            LinearSpec::Har => HAR_WINDOWS[2],
        }
    }

    /// Regressors for the day after `history` (oldest first).
    ///
    /// HAR uses plain sums over its windows, not averages.
    pub fn regressors(&self, history: &[f64]) -> Vec<f64> {
        let n = history.len();
        match self {
            LinearSpec::Ar { p } => (1..=*p).map(|j| history[n - j]).collect(),
            LinearSpec::Har => HAR_WINDOWS.iter().map(|&w| history[n - w..].iter().sum()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub spec: LinearSpec,
}

/// Regression rows `(regressors, target)` from the coin's training days.
pub fn design_rows(series: &CoinSeries, spec: LinearSpec, train: &DateRange) -> (Vec<Vec<f64>>, Vec<f64>) {
    let lag = spec.max_lag();
    let vols: Vec<f64> = (0..series.days.len()).map(|i| series.norm_vol(i)).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, day) in series.days.iter().enumerate() {
        if !train.contains(day.date) {
            continue;
        }
        let Some(w) = series.window_before(day.date, lag) else {
            continue;
        };
        if series.days[w.start].date < train.start {
            continue;
        }
        x.push(spec.regressors(&vols[w]));
        y.push(vols[i]);
    }
    (x, y)
}

fn fit(series: &CoinSeries, spec: LinearSpec, train: &DateRange, need: usize) -> Result<LinearModel, FitError> {
    let (x, y) = design_rows(series, spec, train);
    if y.len() < need {
        return Err(FitError::InsufficientRows {
            coin: series.coin.clone(),
            have: y.len(),
            need,
        });
    }
    let f = linalg::ols(&x, &y).map_err(|source| FitError::Regression {
        coin: series.coin.clone(),
        source,
    })?;
    Ok(LinearModel {
        intercept: f.intercept,
        coeffs: f.coeffs,
        spec,
    })
}

/// AR(p) on normalized sigma: target at `t`, regressors at `t-1..t-p`.
pub fn fit_ar(series: &CoinSeries, p: usize, train: &DateRange) -> Result<LinearModel, FitError> {
    fit(series, LinearSpec::Ar { p }, train, p + AR_EXTRA_ROWS)
}

/// HAR with regressors `(sigma_{t-1}, sum_{j<=7} sigma_{t-j}, sum_{j<=30} sigma_{t-j})`.
pub fn fit_har(series: &CoinSeries, train: &DateRange) -> Result<LinearModel, FitError> {
    fit(series, LinearSpec::Har, train, HAR_MIN_ROWS)
}

impl LinearModel {
    pub fn max_lag(&self) -> usize {
        self.spec.max_lag()
    }

    /// Forecast in normalized units from `history` (oldest first).
    pub fn predict(&self, history: &[f64]) -> Result<f64, FitError> {
        let need = self.max_lag();
        if history.len() < need {
            return Err(FitError::ShortHistory {
                have: history.len(),
                need,
            });
        }
        let x = self.spec.regressors(history);
        Ok(self.intercept + x.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Normalized forecast for the day after `history`.
pub fn predict_linear(model: &LinearModel, history: &[f64]) -> Result<f64, FitError> {
    model.predict(history)
}

/// Raw-sigma forecast, floored at zero after de-normalization.
pub fn predict_raw(model: &LinearModel, history: &[f64], vol_scale: f64) -> Result<f64, FitError> {
    Ok((model.predict(history)? * vol_scale).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{DailyObs, NormStats};
    use chrono::{Duration, NaiveDate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn coin(sigmas: &[f64]) -> CoinSeries {
        let mut s = CoinSeries::new(
            "X",
            sigmas
                .iter()
                .enumerate()
                .map(|(i, &sigma)| DailyObs {
                    date: start() + Duration::days(i as i64),
                    sigma,
                    ret: 0.0,
                })
                .collect(),
        );
        s.norm = NormStats::IDENTITY;
        s
    }

    fn all(n: usize) -> DateRange {
        DateRange::new(start(), start() + Duration::days(n as i64)).unwrap()
    }

    #[test]
    fn exact_ar1_recovered() {
        // sigma_t = 2 - sigma_{t-1} alternates between 0.7 and 1.3 forever.
        let mut s = vec![0.7];
        for _ in 0..100 {
            s.push(2.0 - s[s.len() - 1]);
        }
        let m = fit_ar(&coin(&s), 1, &all(s.len())).unwrap();
        assert!((m.intercept - 2.0).abs() < 1e-10);
        assert!((m.coeffs[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn noisy_ar1_within_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = vec![0.7];
        for _ in 0..2000 {
            let e: f64 = rng.random_range(-0.05..0.05);
            s.push(0.5 + 0.3 * s[s.len() - 1] + e);
        }
        let series = coin(&s);
        let train = all(s.len());
        let m = fit_ar(&series, 1, &train).unwrap();
        let (x, y) = design_rows(&series, LinearSpec::Ar { p: 1 }, &train);
        let f = linalg::ols(&x, &y).unwrap();
        let cov = f.covariance();
        assert!((m.intercept - 0.5).abs() <= 3.0 * cov[0][0].sqrt());
        assert!((m.coeffs[0] - 0.3).abs() <= 3.0 * cov[1][1].sqrt());
    }

    #[test]
    fn constant_series_is_singular() {
        let s = vec![1.0; 200];
        assert!(matches!(
            fit_ar(&coin(&s), 7, &all(200)),
            Err(FitError::Regression { .. })
        ));
        assert!(matches!(
            fit_har(&coin(&s), &all(200)),
            Err(FitError::Regression { .. })
        ));
    }

    #[test]
    fn har_needs_enough_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..60).map(|_| rng.random_range(0.5..1.5)).collect();
        // 60 days leave 30 usable rows after the 30-day window.
        assert!(matches!(
            fit_har(&coin(&s), &all(60)),
            Err(FitError::InsufficientRows { have: 30, .. })
        ));
    }

    #[test]
    fn predict_examples() {
        let ar = LinearModel {
            intercept: 0.4,
            coeffs: vec![0.0; 7],
            spec: LinearSpec::Ar { p: 7 },
        };
        assert_eq!(ar.predict(&[9.0; 7]).unwrap(), 0.4);
        let ar1 = LinearModel {
            intercept: 0.0,
            coeffs: vec![1.0],
            spec: LinearSpec::Ar { p: 1 },
        };
        assert_eq!(ar1.predict(&[0.2, 1.3]).unwrap(), 1.3);
        let har = LinearModel {
            intercept: 0.0,
            coeffs: vec![0.0, 1.0, 0.0],
            spec: LinearSpec::Har,
        };
        let mut h = vec![5.0; 23];
        h.extend([0.2; 7]);
        assert!((har.predict(&h).unwrap() - 1.4).abs() < 1e-12);
        assert!(matches!(har.predict(&[0.2; 7]), Err(FitError::ShortHistory { .. })));
    }

    #[test]
    fn raw_forecast_floors_at_zero() {
        let m = LinearModel {
            intercept: -1.0,
            coeffs: vec![0.0],
            spec: LinearSpec::Ar { p: 1 },
        };
        assert_eq!(predict_raw(&m, &[1.0], 0.05).unwrap(), 0.0);
    }
}
