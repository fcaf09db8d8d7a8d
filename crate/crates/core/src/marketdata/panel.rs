//! Train/test panels and per-coin normalization.

use std::ops::Range;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::aggregate::DayRecord;
use super::filter::CoinDaily;
use super::DataError;

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DataError> {
        if end < start {
            return Err(DataError::Range(format!("{start} is after {end}")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

/// Training-set statistics used to scale volatility and standardize returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Mean training sigma.
    pub vol_scale: f64,
    /// Mean training return.
    pub ret_loc: f64,
    /// Population standard deviation of training returns.
    pub ret_scale: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        vol_scale: 1.0,
        ret_loc: 0.0,
        ret_scale: 1.0,
    };

    /// Computes statistics from `(sigma, ret)` training rows.
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a DailyObs>) -> Option<NormStats> {
        let mut n = 0usize;
        let (mut s_sum, mut r_sum) = (0.0, 0.0);
        let rows: Vec<&DailyObs> = rows.collect();
        for r in &rows {
            n += 1;
            s_sum += r.sigma;
            r_sum += r.ret;
        }
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let vol_scale = s_sum / nf;
        let ret_loc = r_sum / nf;
        let var = rows.iter().map(|r| (r.ret - ret_loc).powi(2)).sum::<f64>() / nf;
        Some(NormStats {
            vol_scale,
            ret_loc,
            ret_scale: var.sqrt(),
        })
    }

    pub fn vol(&self, sigma: f64) -> f64 {
        sigma / self.vol_scale
    }

    pub fn ret(&self, r: f64) -> f64 {
        (r - self.ret_loc) / self.ret_scale
    }

    pub fn denorm_vol(&self, v: f64) -> f64 {
        v * self.vol_scale
    }

    pub fn denorm_ret(&self, z: f64) -> f64 {
        z * self.ret_scale + self.ret_loc
    }
}

/// A complete modeling day: raw realized volatility and return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyObs {
    pub date: NaiveDate,
    pub sigma: f64,
    pub ret: f64,
}

/// One coin's modeling rows in date order.
///
/// Dates are strictly increasing but may contain gaps; each maximal
/// gap-free run is a segment and no model window crosses a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinSeries {
    pub coin: String,
    pub days: Vec<DailyObs>,
    pub norm: NormStats,
}

impl CoinSeries {
    pub fn new(coin: impl Into<String>, days: Vec<DailyObs>) -> Self {
        CoinSeries {
            coin: coin.into(),
            days,
            norm: NormStats::IDENTITY,
        }
    }

    /// Index of the first day on or after `date`.
    pub fn position(&self, date: NaiveDate) -> usize {
        self.days.partition_point(|d| d.date < date)
    }

    /// Index range of the `len` days immediately preceding `date`, provided
    /// they are gap-free and end on `date - 1`.
    pub fn window_before(&self, date: NaiveDate, len: usize) -> Option<Range<usize>> {
        let i = self.position(date);
        if len == 0 || i < len {
            return None;
        }
        let last = self.days[i - 1].date;
        let first = self.days[i - len].date;
        if last + Duration::days(1) != date || (last - first).num_days() != len as i64 - 1 {
            return None;
        }
        Some(i - len..i)
    }

    /// Length of the gap-free run ending on `date - 1`, capped at `cap`.
    pub fn run_before(&self, date: NaiveDate, cap: usize) -> usize {
        let i = self.position(date);
        if i == 0 || self.days[i - 1].date + Duration::days(1) != date {
            return 0;
        }
        let mut n = 1;
        while n < cap && n < i {
            if self.days[i - n - 1].date + Duration::days(1) != self.days[i - n].date {
                break;
            }
            n += 1;
        }
        n
    }

    /// Gap-free runs as index ranges.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.days.len() {
            if i == self.days.len() || self.days[i - 1].date + Duration::days(1) != self.days[i].date {
                if i > start {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    pub fn rows_in<'a>(&'a self, range: &'a DateRange) -> impl Iterator<Item = &'a DailyObs> + 'a {
        self.days.iter().filter(move |d| range.contains(d.date))
    }

    pub fn norm_vol(&self, i: usize) -> f64 {
        self.norm.vol(self.days[i].sigma)
    }

    pub fn norm_ret(&self, i: usize) -> f64 {
        self.norm.ret(self.days[i].ret)
    }

    /// Drops every row on or after `date`.
    pub fn truncated_before(&self, date: NaiveDate) -> CoinSeries {
        let i = self.position(date);
        CoinSeries {
            coin: self.coin.clone(),
            days: self.days[..i].to_vec(),
            norm: self.norm,
        }
    }
}

/// Aligned multi-coin dataset with a train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub coins: Vec<CoinSeries>,
    pub train: DateRange,
    pub test: DateRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub coin: String,
    pub reason: String,
}

impl Panel {
    pub fn new(coins: Vec<CoinSeries>, train: DateRange, test: DateRange) -> Result<Self, DataError> {
        if train.end >= test.start {
            return Err(DataError::Range(format!(
                "train range ends {} but test range starts {}",
                train.end, test.start
            )));
        }
        Ok(Panel { coins, train, test })
    }

    pub fn coin(&self, name: &str) -> Option<&CoinSeries> {
        self.coins.iter().find(|c| c.coin == name)
    }

    pub fn subset(&self, names: &[String]) -> Panel {
        Panel {
            coins: self
                .coins
                .iter()
                .filter(|c| names.iter().any(|n| n == &c.coin))
                .cloned()
                .collect(),
            train: self.train,
            test: self.test,
        }
    }
}

/// Turns aggregated days into modeling rows: complete days with a defined
/// return, clipped to `[train.start, test.end]`. Coins with fewer than
/// `min_history` rows are excluded.
pub fn assemble_panel(
    coins: &[CoinDaily],
    train: DateRange,
    test: DateRange,
    min_history: usize,
) -> Result<(Panel, Vec<Exclusion>), DataError> {
    let span = DateRange::new(train.start, test.end)?;
    let mut series = Vec::new();
    let mut excluded = Vec::new();
    for c in coins {
        let days: Vec<DailyObs> = c
            .days
            .iter()
            .filter(|d| d.complete && span.contains(d.date))
            .filter_map(|d: &DayRecord| {
                d.ret.map(|ret| DailyObs {
                    date: d.date,
                    sigma: d.sigma,
                    ret,
                })
            })
            .collect();
        if days.len() < min_history {
            excluded.push(Exclusion {
                coin: c.coin.clone(),
                reason: format!("only {} modeling days (minimum {min_history})", days.len()),
            });
            continue;
        }
        series.push(CoinSeries::new(c.coin.clone(), days));
    }
    Ok((Panel::new(series, train, test)?, excluded))
}

/// Computes each coin's [`NormStats`] from its training rows.
///
/// Coins without training rows, with all-zero training sigma or with zero
/// training return variance are excluded and reported.
pub fn normalize(panel: Panel) -> (Panel, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for mut coin in panel.coins {
        match NormStats::from_rows(coin.rows_in(&panel.train)) {
            None => excluded.push(Exclusion {
                coin: coin.coin.clone(),
                reason: "no training rows".into(),
            }),
            Some(s) if !(s.ret_scale > 0.0) => excluded.push(Exclusion {
                coin: coin.coin.clone(),
                reason: DataError::Degenerate {
                    coin: coin.coin.clone(),
                    what: "zero training return variance".into(),
                }
                .to_string(),
            }),
            Some(s) if !(s.vol_scale > 0.0) => excluded.push(Exclusion {
                coin: coin.coin.clone(),
                reason: DataError::Degenerate {
                    coin: coin.coin.clone(),
                    what: "zero training volatility".into(),
                }
                .to_string(),
            }),
            Some(s) => {
                coin.norm = s;
                kept.push(coin);
            }
        }
    }
    (
        Panel {
            coins: kept,
            train: panel.train,
            test: panel.test,
        },
        excluded,
    )
}
