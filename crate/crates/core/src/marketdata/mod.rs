//! Market data: kline ingestion, daily aggregation, universe filtering and
//! normalized train/test panels.

mod aggregate;
mod filter;
mod io;
mod klines;
mod panel;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub use aggregate::{daily_aggregate, DayRecord, BARS_PER_DAY, DEFAULT_MIN_BARS};
pub use filter::{filter_universe, CoinDaily, FilterConfig, FilterOutcome, RejectReason, Rejection};
pub use io::{
    read_json, read_panel, read_panel_meta, write_json, write_panel, PanelMeta, ParseSummary, PANEL_CSV,
    PANEL_FORMAT_VERSION, PANEL_JSON,
};
pub use klines::{parse_klines, write_klines, Bar, KlineParse, MalformedRow, BAR_MILLIS, KLINE_HEADER};
pub use panel::{assemble_panel, normalize, CoinSeries, DailyObs, DateRange, Exclusion, NormStats, Panel};

use crate::par;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{coin}: kline format error: {message}")]
    Format { coin: String, message: String },
    #[error("{coin}: conflicting bars share timestamp {ts}")]
    DuplicateTimestamp { coin: String, ts: DateTime<Utc> },
    #[error("{coin}: degenerate series ({what})")]
    Degenerate { coin: String, what: String },
    #[error("invalid date range: {0}")]
    Range(String),
    #[error("no kline files found in {0}")]
    NoInput(String),
}

/// Settings for turning a directory of kline files into a panel.
#[derive(Debug, Clone)]
pub struct IngestSettings {
    pub min_bars_per_day: usize,
    pub min_history: usize,
    pub filter: FilterConfig,
    pub train: DateRange,
    pub test: DateRange,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Aggregated days of every coin in the panel, clipped to the panel span.
    pub daily: Vec<CoinDaily>,
    pub panel: Panel,
    pub meta: PanelMeta,
}

/// Parses every `<SYMBOL>.csv` in `dir` (per coin, in parallel), aggregates
/// to daily records, filters the universe and assembles a normalized panel.
pub fn ingest_dir(dir: &Path, settings: &IngestSettings) -> crate::Result<Ingested> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| crate::Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x.eq_ignore_ascii_case("csv")).unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DataError::NoInput(dir.display().to_string()).into());
    }

    let parsed = par::map(&files, |path| {
        let coin = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let result = std::fs::File::open(path)
            .map_err(|e| DataError::Format {
                coin: coin.clone(),
                message: e.to_string(),
            })
            .and_then(|f| parse_klines(std::io::BufReader::new(f), &coin))
            .map(|p| {
                let days = daily_aggregate(&p.bars, settings.min_bars_per_day);
                let summary = ParseSummary {
                    bars: p.bars.len(),
                    malformed: p.malformed.len(),
                    duplicates: p.duplicates,
                    incomplete_days: days.iter().filter(|d| !d.complete).count(),
                };
                (
                    CoinDaily {
                        coin: coin.clone(),
                        days,
                    },
                    summary,
                )
            });
        (coin, result)
    });

    let mut parse_report = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut daily = Vec::new();
    for (coin, result) in parsed {
        match result {
            Ok((cd, summary)) => {
                parse_report.insert(coin, summary);
                daily.push(cd);
            }
            Err(e) => excluded.push(Exclusion {
                coin,
                reason: e.to_string(),
            }),
        }
    }

    let span = DateRange::new(settings.train.start, settings.test.end)?;
    for cd in &mut daily {
        cd.days.retain(|d| span.contains(d.date));
    }
    let outcome = filter_universe(daily, &settings.filter);
    let (panel, mut short) = assemble_panel(&outcome.kept, settings.train, settings.test, settings.min_history)?;
    excluded.append(&mut short);
    let (panel, mut degenerate) = normalize(panel);
    excluded.append(&mut degenerate);

    let kept: Vec<CoinDaily> = outcome
        .kept
        .into_iter()
        .filter(|c| panel.coin(&c.coin).is_some())
        .collect();
    let meta = PanelMeta {
        version: PANEL_FORMAT_VERSION,
        train: settings.train,
        test: settings.test,
        min_bars_per_day: settings.min_bars_per_day,
        min_history: settings.min_history,
        norms: panel.coins.iter().map(|c| (c.coin.clone(), c.norm)).collect(),
        filter_report: outcome.rejected,
        excluded,
        parse_report,
    };
    Ok(Ingested {
        daily: kept,
        panel,
        meta,
    })
}
