//! Daily realized volatility and close-to-close returns from 5-minute bars.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::klines::Bar;

/// Bars in a complete 24-hour UTC day.
pub const BARS_PER_DAY: usize = 288;
pub const DEFAULT_MIN_BARS: usize = 272;

/// One UTC day of aggregated bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    /// `sqrt(sum_i r_{t,i}^2)` over the day's 5-minute returns.
    pub sigma: f64,
    /// Close-to-close return; `None` when the previous day is missing or
    /// either day is incomplete.
    pub ret: Option<f64>,
    pub n_intervals: usize,
    pub complete: bool,
    pub close: f64,
    pub quote_volume: f64,
}

/// Groups sorted bars by UTC day and computes `sigma` and `ret`.
///
/// Within a day the first return is measured from the first bar's open; the
/// rest are close-to-close between consecutive bars. Days with fewer than
/// `min_bars` bars are kept but flagged incomplete.
pub fn daily_aggregate(bars: &[Bar], min_bars: usize) -> Vec<DayRecord> {
    let mut days: Vec<DayRecord> = Vec::new();
    let mut i = 0;
    while i < bars.len() {
        let date = bars[i].ts.date_naive();
        let mut j = i;
        while j < bars.len() && bars[j].ts.date_naive() == date {
            j += 1;
        }
        let day = &bars[i..j];
        let mut prev = day[0].open;
        let mut ss = 0.0;
        for b in day {
            let r = (b.close - prev) / prev;
            ss += r * r;
            prev = b.close;
        }
        let n = day.len().min(BARS_PER_DAY);
        days.push(DayRecord {
            date,
            sigma: ss.sqrt(),
            ret: None,
            n_intervals: n,
            complete: n >= min_bars,
            close: day[day.len() - 1].close,
            quote_volume: day.iter().map(|b| b.volume).sum(),
        });
        i = j;
    }
    for k in 1..days.len() {
        let (before, after) = days.split_at_mut(k);
        let prev = &before[k - 1];
        let cur = &mut after[0];
        if prev.complete && cur.complete && prev.date.succ_opt() == Some(cur.date) {
            cur.ret = Some((cur.close - prev.close) / prev.close);
        }
    }
    days
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn day_bars(start: NaiveDate, open: f64, closes: &[f64]) -> Vec<Bar> {
        let t0 = Utc.from_utc_datetime(&start.and_hms_opt(0, 0, 0).unwrap());
        let mut prev = open;
        closes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let b = Bar {
                    coin: "X".into(),
                    ts: t0 + Duration::minutes(5 * i as i64),
                    open: prev,
                    high: prev.max(c),
                    low: prev.min(c),
                    close: c,
                    volume: 1.0,
                    trades: 1,
                };
                prev = c;
                b
            })
            .collect()
    }

    fn d(y: i32, m: u32, dd: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, dd).unwrap()
    }

    #[test]
    fn constant_price_has_zero_sigma_and_return() {
        let mut bars = day_bars(d(2020, 1, 1), 100.0, &[100.0; 288]);
        bars.extend(day_bars(d(2020, 1, 2), 100.0, &[100.0; 288]));
        let days = daily_aggregate(&bars, DEFAULT_MIN_BARS);
        assert_eq!(days.len(), 2);
        assert_eq!(days[1].sigma, 0.0);
        assert_eq!(days[1].ret, Some(0.0));
        assert_eq!(days[0].ret, None);
        assert_eq!(days[1].n_intervals, 288);
    }

    #[test]
    fn single_nonzero_return() {
        let bars = day_bars(d(2020, 1, 1), 100.0, &[101.0; 288]);
        let days = daily_aggregate(&bars, DEFAULT_MIN_BARS);
        assert!((days[0].sigma - 0.01).abs() < 1e-15);
    }

    #[test]
    fn uniform_returns_direct_sum() {
        let mut closes = Vec::new();
        let mut p = 100.0;
        for _ in 0..288 {
            p *= 1.01;
            closes.push(p);
        }
        let bars = day_bars(d(2020, 1, 1), 100.0, &closes);
        let days = daily_aggregate(&bars, DEFAULT_MIN_BARS);
        // Direct summation oracle: 288 squared returns of 0.01.
        let oracle = (0..288).map(|_| 0.01f64 * 0.01).sum::<f64>().sqrt();
        assert!((days[0].sigma - oracle).abs() < 1e-12);
        assert!((days[0].sigma - 0.169706).abs() < 1e-6);
    }

    #[test]
    fn short_day_is_incomplete_and_breaks_returns() {
        let mut bars = day_bars(d(2020, 1, 1), 100.0, &[100.0; 288]);
        bars.extend(day_bars(d(2020, 1, 2), 100.0, &[101.0; 200]));
        bars.extend(day_bars(d(2020, 1, 3), 101.0, &[102.0; 288]));
        let days = daily_aggregate(&bars, DEFAULT_MIN_BARS);
        assert!(!days[1].complete);
        assert_eq!(days[1].n_intervals, 200);
        assert_eq!(days[2].ret, None);
    }

    #[test]
    fn calendar_gap_leaves_return_undefined() {
        let mut bars = day_bars(d(2020, 1, 1), 100.0, &[100.0; 288]);
        bars.extend(day_bars(d(2020, 1, 3), 100.0, &[100.0; 288]));
        let days = daily_aggregate(&bars, DEFAULT_MIN_BARS);
        assert_eq!(days[1].ret, None);
    }
}
