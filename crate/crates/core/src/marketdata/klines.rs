//! Binance kline CSV ingestion.

use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::DataError;

pub const BAR_MILLIS: i64 = 5 * 60 * 1000;

/// One 5-minute OHLCV bar. `volume` is quote-currency volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub coin: String,
    pub ts: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub trades: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalformedRow {
    /// 1-based line number in the source.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct KlineParse {
    pub bars: Vec<Bar>,
    pub malformed: Vec<MalformedRow>,
    /// Exact duplicate rows removed after sorting.
    pub duplicates: usize,
}

impl KlineParse {
    pub fn skipped(&self) -> usize {
        self.malformed.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    open_time: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
    quote_volume: usize,
    trades: usize,
}

impl Columns {
    const POSITIONAL: Columns = Columns {
        open_time: 0,
        open: 1,
        high: 2,
        low: 3,
        close: 4,
        quote_volume: 7,
        trades: 8,
    };

    fn from_header(header: &csv::StringRecord) -> Result<Columns, String> {
        let names: Vec<String> = header
            .iter()
            .map(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase())
            .collect();
        let find = |aliases: &[&str]| names.iter().position(|n| aliases.contains(&n.as_str()));
        let mut missing = Vec::new();
        let mut get = |name: &'static str, aliases: &[&str]| {
            find(aliases).unwrap_or_else(|| {
                missing.push(name);
                usize::MAX
            })
        };
        let cols = Columns {
            open_time: get("open_time", &["open_time", "opentime", "open time"]),
            open: get("open", &["open"]),
            high: get("high", &["high"]),
            low: get("low", &["low"]),
            close: get("close", &["close"]),
            quote_volume: get(
                "quote_volume",
                &[
                    "quote_volume",
                    "quote_asset_volume",
                    "quote asset volume",
                    "quotevolume",
                ],
            ),
            trades: get("trades", &["trades", "number_of_trades", "count", "number of trades"]),
        };
        if missing.is_empty() {
            Ok(cols)
        } else {
            Err(format!("header lacks column(s): {}", missing.join(", ")))
        }
    }
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, coin: &str) -> Result<Bar, String> {
    let field = |i: usize, name: &str| rec.get(i).map(str::trim).ok_or_else(|| format!("missing field {name}"));
    let num = |i: usize, name: &str| -> Result<f64, String> {
        let s = field(i, name)?;
        let v: f64 = s.parse().map_err(|_| format!("{name}={s:?} is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name} is not finite"))
        }
    };
    let raw_ts: i64 = field(cols.open_time, "open_time")?
        .parse()
        .map_err(|_| "open_time is not an integer".to_string())?;
    // Newer Binance dumps use microseconds.
    let millis = if raw_ts.abs() >= 100_000_000_000_000 {
        raw_ts / 1000
    } else {
        raw_ts
    };
    if millis.rem_euclid(BAR_MILLIS) != 0 {
        return Err(format!("open_time {raw_ts} is not on a 5-minute boundary"));
    }
    let ts = DateTime::from_timestamp_millis(millis).ok_or("open_time out of range")?;
    let open = num(cols.open, "open")?;
    let high = num(cols.high, "high")?;
    let low = num(cols.low, "low")?;
    let close = num(cols.close, "close")?;
    let volume = num(cols.quote_volume, "quote_volume")?;
    let trades_s = field(cols.trades, "trades")?;
    let trades: u64 = trades_s
        .parse()
        .or_else(|_| trades_s.parse::<f64>().map(|v| v as u64))
        .map_err(|_| format!("trades={trades_s:?} is not a count"))?;

    if !(open > 0.0 && high > 0.0 && low > 0.0 && close > 0.0) {
        return Err("non-positive price".into());
    }
    if low > open.min(close) || high < open.max(close) {
        return Err("high/low do not bracket open/close".into());
    }
    if volume < 0.0 {
        return Err("negative volume".into());
    }
    Ok(Bar {
        coin: coin.to_string(),
        ts,
        open,
        high,
        low,
        close,
        volume,
        trades,
    })
}

/// Parses a kline CSV (Binance column layout, header optional).
///
/// A header row is recognised when its first field is not an integer; it
/// must name every required column. Headerless files are read positionally.
/// Rows that fail to parse or violate the bar invariants are recorded in
/// [`KlineParse::malformed`]. Exact duplicates are dropped; two different
/// bars at one timestamp are an error.
pub fn parse_klines<R: Read>(stream: R, coin: &str) -> Result<KlineParse, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream);

    let mut out = KlineParse::default();
    let mut cols: Option<Columns> = None;
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                if first {
                    return Err(DataError::Format {
                        coin: coin.to_string(),
                        message: e.to_string(),
                    });
                }
                out.malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let head = record.get(0).unwrap_or("").trim_start_matches('\u{feff}');
            if head.parse::<i64>().is_err() {
                cols = Some(Columns::from_header(&record).map_err(|message| DataError::Format {
                    coin: coin.to_string(),
                    message,
                })?);
                continue;
            }
            cols = Some(Columns::POSITIONAL);
        }
        let c = cols.as_ref().expect("columns resolved on first record");
        match parse_row(&record, c, coin) {
            Ok(bar) => out.bars.push(bar),
            Err(reason) => out.malformed.push(MalformedRow { line, reason }),
        }
    }

    out.bars.sort_by_key(|b| b.ts);
    let mut deduped: Vec<Bar> = Vec::with_capacity(out.bars.len());
    for bar in out.bars.drain(..) {
        match deduped.last() {
            Some(prev) if prev.ts == bar.ts => {
                if *prev == bar {
                    out.duplicates += 1;
                } else {
                    return Err(DataError::DuplicateTimestamp {
                        coin: coin.to_string(),
                        ts: bar.ts,
                    });
                }
            }
            _ => deduped.push(bar),
        }
    }
    out.bars = deduped;
    Ok(out)
}

/// Binance kline header used when writing synthetic files.
pub const KLINE_HEADER: [&str; 12] = [
    "open_time",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "close_time",
    "quote_volume",
    "trades",
    "taker_buy_base_volume",
    "taker_buy_quote_volume",
    "ignore",
];

/// Writes bars in the Binance kline layout with a header row.
pub fn write_klines<W: std::io::Write>(out: W, bars: &[Bar]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KLINE_HEADER)?;
    for b in bars {
        let open_ms = b.ts.timestamp_millis();
        let base_volume = b.volume / b.close;
        w.write_record(&[
            open_ms.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            base_volume.to_string(),
            (open_ms + BAR_MILLIS - 1).to_string(),
            b.volume.to_string(),
            b.trades.to_string(),
            (base_volume / 2.0).to_string(),
            (b.volume / 2.0).to_string(),
            "0".to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
