//! Canonical panel file (`panel.csv`) and its JSON sidecar (`panel.json`).

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::aggregate::DayRecord;
use super::filter::{CoinDaily, Rejection};
use super::panel::{assemble_panel, normalize, DateRange, Exclusion, NormStats, Panel};
use crate::{Error, Result};

pub const PANEL_CSV: &str = "panel.csv";
pub const PANEL_JSON: &str = "panel.json";
pub const PANEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub bars: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub incomplete_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub version: u32,
    pub train: DateRange,
    pub test: DateRange,
    pub min_bars_per_day: usize,
    pub min_history: usize,
    pub norms: BTreeMap<String, NormStats>,
    pub filter_report: Vec<Rejection>,
    pub excluded: Vec<Exclusion>,
    pub parse_report: BTreeMap<String, ParseSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PanelRow {
    coin: String,
    date: NaiveDate,
    sigma: f64,
    ret: Option<f64>,
    complete: bool,
}

pub fn write_panel(dir: &Path, coins: &[CoinDaily], meta: &PanelMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(PANEL_CSV);
    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for c in coins {
        for d in &c.days {
            w.serialize(PanelRow {
                coin: c.coin.clone(),
                date: d.date,
                sigma: d.sigma,
                ret: d.ret,
                complete: d.complete,
            })
            .map_err(|e| Error::serde(&csv_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_json(&dir.join(PANEL_JSON), meta)
}

pub fn read_panel_meta(dir: &Path) -> Result<PanelMeta> {
    read_json(&dir.join(PANEL_JSON))
}

/// Loads `panel.csv` + `panel.json` and re-derives the normalized panel.
pub fn read_panel(dir: &Path) -> Result<(Panel, PanelMeta)> {
    let meta = read_panel_meta(dir)?;
    let csv_path = dir.join(PANEL_CSV);
    let file = File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut coins: Vec<CoinDaily> = Vec::new();
    for row in r.deserialize::<PanelRow>() {
        let row = row.map_err(|e| Error::serde(&csv_path, e))?;
        if coins.last().map(|c| c.coin != row.coin).unwrap_or(true) {
            coins.push(CoinDaily {
                coin: row.coin.clone(),
                days: Vec::new(),
            });
        }
        coins.last_mut().unwrap().days.push(DayRecord {
            date: row.date,
            sigma: row.sigma,
            ret: row.ret,
            n_intervals: 0,
            complete: row.complete,
            close: f64::NAN,
            quote_volume: f64::NAN,
        });
    }
    let (panel, _) = assemble_panel(&coins, meta.train, meta.test, meta.min_history)?;
    let (panel, _) = normalize(panel);
    Ok((panel, meta))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::serde(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::serde(path, e))
}
