//! Synthetic coins with planted rough volatility and QRH return feedback.
//!
//! Each coin's daily variance mixes a rough lognormal component and a
//! quadratic function of a kernel-weighted sum of past returns:
//!
//! ```text
//! σ_R(t) = base · exp(ν B^H_t)
//! σ²(t)  = (1 - λ) σ_R(t)² + λ base² (a (Z_{t-1} - b)² + c)
//! ```
//!
//! `Z` starts at zero on the first reported day and is driven by daily
//! returns divided by `base`, clipped to `±3` so the feedback cannot run away. Intraday 5-minute
//! returns are Gaussian with variance `σ²(t) / 288`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::marketdata::{write_klines, Bar, CoinDaily, DayRecord, BARS_PER_DAY};
use crate::par::Execution;
use crate::qrh::{advance_z_in_place, kernel_nodes, QrhState, DEFAULT_FACTORS, DEFAULT_T_MAX, DEFAULT_T_MIN};
use crate::roughvol::simulate_fbm;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub coins: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Central Hurst exponent; coins draw theirs within `±h_spread`.
    pub h: f64,
    pub h_spread: f64,
    pub nu: f64,
    /// Typical daily volatility; coins scale it by `exp(U(-0.5, 0.5))`.
    pub base_vol: f64,
    /// Weight of the QRH variance component.
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Unreported leading days of the rough path. Return feedback starts
    /// on the first reported day so `Z` is recoverable from the data.
    pub warmup: usize,
    /// Mean quote volume per 5-minute bar.
    pub bar_volume: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            coins: 5,
            days: 900,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 0,
            h: 0.1,
            h_spread: 0.02,
            nu: 0.3,
            base_vol: 0.04,
            lambda: 0.5,
            a: 0.05,
            b: 0.3,
            c: 0.5,
            warmup: 500,
            bar_volume: 5_000.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.coins == 0 {
            problems.push("synth: coins must be positive".to_string());
        }
        if self.days < 2 {
            problems.push("synth: days must be at least 2".to_string());
        }
        let (lo, hi) = (self.h - self.h_spread, self.h + self.h_spread);
        if !(lo > 0.0 && hi < 0.5) {
            problems.push(format!("synth: H range [{lo}, {hi}] must lie inside (0, 0.5)"));
        }
        if !(self.nu >= 0.0) {
            problems.push("synth: nu must be non-negative".into());
        }
        if !(self.base_vol > 0.0) {
            problems.push("synth: base_vol must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            problems.push("synth: lambda must be in [0, 1]".into());
        }
        if !(self.a >= 0.0 && self.c > 0.0) {
            problems.push("synth: need a >= 0 and c > 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn coin_name(k: usize) -> String {
        format!("SYN{k}USDT")
    }
}

/// Parameters drawn for one coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCoin {
    pub coin: String,
    pub h: f64,
    pub nu: f64,
    pub base_vol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub coins: Vec<PlantedCoin>,
}

/// Bound on the return shock fed to `Z`, in units of `base`.
pub const FEEDBACK_CLIP: f64 = 3.0;

fn coin_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1)
}

pub fn planted_coins(cfg: &SynthConfig) -> Vec<PlantedCoin> {
    (0..cfg.coins)
        .map(|k| {
            let seed = coin_seed(cfg.seed, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u_h: f64 = rng.random_range(-1.0..=1.0);
            let u_nu: f64 = rng.random_range(-1.0..=1.0);
            let u_b: f64 = rng.random_range(-0.5..=0.5);
            PlantedCoin {
                coin: SynthConfig::coin_name(k),
                h: cfg.h + cfg.h_spread * u_h,
                nu: cfg.nu * (1.0 + 0.1 * u_nu),
                base_vol: cfg.base_vol * u_b.exp(),
                seed,
            }
        })
        .collect()
}

/// Runs one coin's generator, calling `sink(date, true_sigma, intraday)` for
/// every reported day.
pub fn simulate_coin<F>(cfg: &SynthConfig, coin: &PlantedCoin, mut sink: F) -> Result<()>
where
    F: FnMut(NaiveDate, f64, &[f64]),
{
    let total = cfg.warmup + cfg.days;
    let fbm = simulate_fbm(coin.h, total, coin.seed ^ 0xF8A3)?;
    let nodes = kernel_nodes(cfg.h, DEFAULT_FACTORS, DEFAULT_T_MIN, DEFAULT_T_MAX)?;
    let mut state = QrhState::new(&nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(coin.seed ^ 0x1D_A7);
    let base = coin.base_vol;
    let step = (BARS_PER_DAY as f64).sqrt();
    let mut intraday = vec![0.0; BARS_PER_DAY];
    for t in 0..total {
        let rough = base * (coin.nu * fbm[t + 1]).exp();
        let q = cfg.a * (state.z - cfg.b).powi(2) + cfg.c;
        let sigma = ((1.0 - cfg.lambda) * rough * rough + cfg.lambda * base * base * q).sqrt();
        let mut growth = 1.0;
        for r in intraday.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *r = sigma / step * e;
            growth *= 1.0 + *r;
        }
        if t >= cfg.warmup {
            let shock = ((growth - 1.0) / base).clamp(-FEEDBACK_CLIP, FEEDBACK_CLIP);
            advance_z_in_place(&mut state, &nodes, shock, 0);
            let date = cfg.start + Duration::days((t - cfg.warmup) as i64);
            sink(date, sigma, &intraday);
        }
    }
    Ok(())
}

/// Daily records equivalent to aggregating the coin's klines.
pub fn synth_daily(cfg: &SynthConfig, exec: Execution) -> Result<(Vec<CoinDaily>, SynthManifest)> {
    cfg.validate()?;
    let coins = planted_coins(cfg);
    let daily = exec
        .map(&coins, |coin| {
            let mut days: Vec<DayRecord> = Vec::with_capacity(cfg.days);
            let mut close = 100.0;
            let volume = cfg.bar_volume * BARS_PER_DAY as f64;
            simulate_coin(cfg, coin, |date, _, rs| {
                let open = close;
                let mut ss = 0.0;
                for r in rs {
                    ss += r * r;
                    close *= 1.0 + r;
                }
                let ret = (!days.is_empty()).then(|| (close - open) / open);
                days.push(DayRecord {
                    date,
                    sigma: ss.sqrt(),
                    ret,
                    n_intervals: BARS_PER_DAY,
                    complete: true,
                    close,
                    quote_volume: volume,
                });
            })?;
            Ok(CoinDaily {
                coin: coin.coin.clone(),
                days,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((
        daily,
        SynthManifest {
            config: cfg.clone(),
            coins,
        },
    ))
}

/// Writes one kline CSV per coin into `dir` plus `synth_manifest.json`.
pub fn write_synth_klines(cfg: &SynthConfig, dir: &Path, exec: Execution) -> Result<SynthManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let coins = planted_coins(cfg);
    exec.map(&coins, |coin| write_coin(cfg, coin, dir))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let manifest = SynthManifest {
        config: cfg.clone(),
        coins,
    };
    crate::marketdata::write_json(&dir.join(SYNTH_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub const SYNTH_MANIFEST: &str = "synth_manifest.json";

fn write_coin(cfg: &SynthConfig, coin: &PlantedCoin, dir: &Path) -> Result<()> {
    let mut bars = Vec::with_capacity(cfg.days * BARS_PER_DAY);
    let mut rng = ChaCha8Rng::seed_from_u64(coin.seed ^ 0xBA55);
    let mut close = 100.0;
    simulate_coin(cfg, coin, |date, sigma, rs| {
        let t0 = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"));
        for (j, r) in rs.iter().enumerate() {
            let open = close;
            close *= 1.0 + r;
            let wick = sigma / (BARS_PER_DAY as f64).sqrt() * 0.5;
            let up: f64 = rng.random::<f64>() * wick;
            let down: f64 = rng.random::<f64>() * wick;
            let vol_noise: f64 = rng.random_range(-0.5..0.5);
            bars.push(Bar {
                coin: coin.coin.clone(),
                ts: t0 + Duration::minutes(5 * j as i64),
                open,
                high: open.max(close) * (1.0 + up),
                low: open.min(close) * (1.0 - down),
                close,
                volume: cfg.bar_volume * vol_noise.exp(),
                trades: rng.random_range(50..500),
            });
        }
    })?;
    let path = dir.join(format!("{}.csv", coin.coin));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_klines(BufWriter::new(file), &bars).map_err(|e| Error::serde(&path, e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            coins: 2,
            days: 40,
            warmup: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = small();
        let (a, _) = synth_daily(&cfg, Execution::Sequential).unwrap();
        let (b, _) = synth_daily(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let (c, _) = synth_daily(&SynthConfig { seed: 1, ..cfg }, Execution::Sequential).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn calendar_and_first_return() {
        let (daily, m) = synth_daily(&small(), Execution::Sequential).unwrap();
        assert_eq!(m.coins.len(), 2);
        let days = &daily[0].days;
        assert_eq!(days.len(), 40);
        assert_eq!(days[0].date, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        assert!(days[0].ret.is_none());
        assert!(days[1..].iter().all(|d| d.ret.is_some() && d.sigma > 0.0));
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let cfg = SynthConfig {
            coins: 0,
            days: 1,
            lambda: 2.0,
            ..SynthConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
