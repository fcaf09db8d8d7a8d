use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::marketdata::Panel;

/// Raw realized sigma per coin over the test range, in date order.
pub type Realized = BTreeMap<String, Vec<(NaiveDate, f64)>>;

pub fn realized(panel: &Panel) -> Realized {
    panel
        .coins
        .iter()
        .map(|c| {
            (
                c.coin.clone(),
                c.rows_in(&panel.test).map(|d| (d.date, d.sigma)).collect(),
            )
        })
        .collect()
}

/// One model's raw-sigma forecasts for one coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelForecast {
    pub model: String,
    pub coin: String,
    pub rows: Vec<(NaiveDate, f64)>,
}

fn squared_error_mean(pairs: &mut [(NaiveDate, f64, f64)]) -> f64 {
    pairs.sort_by_key(|p| p.0);
    pairs.iter().map(|(_, f, r)| (f - r) * (f - r)).sum::<f64>() / pairs.len() as f64
}

/// Mean squared error over the dates present in both series. Row order
/// does not matter.
pub fn mse(forecast: &ModelForecast, realized: &[(NaiveDate, f64)]) -> Result<f64, EvalError> {
    let truth: BTreeMap<NaiveDate, f64> = realized.iter().copied().collect();
    let mut pairs: Vec<(NaiveDate, f64, f64)> = forecast
        .rows
        .iter()
        .filter_map(|&(d, f)| truth.get(&d).map(|&r| (d, f, r)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::EmptyIntersection {
            model: forecast.model.clone(),
            coin: forecast.coin.clone(),
        });
    }
    Ok(squared_error_mean(&mut pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub model: String,
    pub coin: String,
    /// Test days shared by the model, the baseline and the realized series.
    pub days: usize,
    pub mse: f64,
    pub baseline_mse: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub model: String,
    pub coin: String,
    pub reason: String,
}

/// Boxplot statistics with 1.5 IQR whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub model: String,
    pub coins: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
    pub mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles by linear interpolation; whiskers reach the most extreme values
/// within 1.5 IQR of the box, and never end inside it. `None` for an empty sample.
pub fn boxplot(model: &str, values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    Some(BoxStats {
        model: model.to_string(),
        coins: v.len(),
        median: quantile(&v, 0.5),
        q1,
        q3,
        // With interpolated quartiles the nearest inside value can fall
        // within the box; the whisker then stops at the box edge.
        whisker_low: inside.first().map_or(q1, |x| x.min(q1)),
        whisker_high: inside.last().map_or(q3, |x| x.max(q3)),
        outliers: v.len() - inside.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: String,
    /// Sorted by model (first-appearance order) then coin.
    pub rows: Vec<RatioRow>,
    pub summary: Vec<BoxStats>,
    pub excluded: Vec<Excluded>,
}

impl EvalReport {
    pub fn ratio(&self, model: &str, coin: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.coin == coin)
            .map(|r| r.ratio)
    }

    pub fn summary_for(&self, model: &str) -> Option<&BoxStats> {
        self.summary.iter().find(|s| s.model == model)
    }

    pub fn ratios(&self, model: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.model == model).map(|r| r.ratio).collect()
    }
}

/// MSE of every model on every coin, divided by the baseline's MSE on the
/// same dates. A model and the baseline are compared only on the test days
/// both forecast.
pub fn ratio_table(forecasts: &[ModelForecast], realized: &Realized, baseline: &str) -> Result<EvalReport, EvalError> {
    let mut models: Vec<&str> = Vec::new();
    for f in forecasts {
        if !models.contains(&f.model.as_str()) {
            models.push(&f.model);
        }
    }
    if !models.contains(&baseline) {
        return Err(EvalError::MissingBaseline {
            baseline: baseline.to_string(),
            coin: "*".into(),
        });
    }
    let base: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = forecasts
        .iter()
        .filter(|f| f.model == baseline)
        .map(|f| (f.coin.as_str(), f.rows.iter().copied().collect()))
        .collect();

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut summary = Vec::new();
    for model in models {
        let mut per_coin: Vec<&ModelForecast> = forecasts.iter().filter(|f| f.model == model).collect();
        per_coin.sort_by(|a, b| a.coin.cmp(&b.coin));
        let mut ratios = Vec::new();
        for f in per_coin {
            let exclude = |reason: &str| Excluded {
                model: model.to_string(),
                coin: f.coin.clone(),
                reason: reason.to_string(),
            };
            let Some(b) = base.get(f.coin.as_str()) else {
                excluded.push(exclude("baseline has no forecasts"));
                continue;
            };
            let truth: BTreeMap<NaiveDate, f64> = realized.get(&f.coin).into_iter().flatten().copied().collect();
            let mut mp = Vec::new();
            let mut bp = Vec::new();
            for &(d, v) in &f.rows {
                if let (Some(&bv), Some(&r)) = (b.get(&d), truth.get(&d)) {
                    mp.push((d, v, r));
                    bp.push((d, bv, r));
                }
            }
            if mp.is_empty() {
                excluded.push(exclude("no test dates shared with the baseline"));
                continue;
            }
            let m = squared_error_mean(&mut mp);
            let bm = squared_error_mean(&mut bp);
            if bm == 0.0 {
                excluded.push(exclude("baseline mse is zero"));
                continue;
            }
            let ratio = if model == baseline { 1.0 } else { m / bm };
            ratios.push(ratio);
            rows.push(RatioRow {
                model: model.to_string(),
                coin: f.coin.clone(),
                days: mp.len(),
                mse: m,
                baseline_mse: bm,
                ratio,
            });
        }
        if let Some(s) = boxplot(model, &ratios) {
            summary.push(s);
        }
    }
    Ok(EvalReport {
        baseline: baseline.to_string(),
        rows,
        summary,
        excluded,
    })
}
