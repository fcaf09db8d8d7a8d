//! Universe selection: drops stablecoins, leveraged tokens, short histories
//! and illiquid coins.

use serde::{Deserialize, Serialize};

use super::aggregate::DayRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Base-asset symbols treated as stablecoins.
    pub stablecoins: Vec<String>,
    /// Glob patterns (`*` wildcard) for leveraged tokens, e.g. `*UP`.
    pub leveraged_patterns: Vec<String>,
    /// Quote suffix stripped from file symbols before matching (`BTCUSDT` -> `BTC`).
    pub quote_asset: Option<String>,
    /// Minimum number of complete days.
    pub min_days: usize,
    /// Minimum median daily quote volume over complete days.
    pub min_median_quote_volume: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            stablecoins: [
                "USDT", "USDC", "BUSD", "TUSD", "DAI", "USDP", "PAX", "UST", "FDUSD", "SUSD", "GUSD", "EUR", "GBP",
                "AUD",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            leveraged_patterns: ["*UP", "*DOWN", "*BULL", "*BEAR"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            quote_asset: Some("USDT".to_string()),
            min_days: 365,
            min_median_quote_volume: 1e5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Stablecoin,
    Leveraged { pattern: String },
    InsufficientData { complete_days: usize },
    LowLiquidity { median_quote_volume: f64 },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::Stablecoin => write!(f, "stablecoin"),
            RejectReason::Leveraged { .. } => write!(f, "leveraged"),
            RejectReason::InsufficientData { .. } => write!(f, "insufficient_data"),
            RejectReason::LowLiquidity { .. } => write!(f, "low_liquidity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub coin: String,
    #[serde(flatten)]
    pub reason: RejectReason,
}

/// Aggregated days for one coin, before panel assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinDaily {
    pub coin: String,
    pub days: Vec<DayRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<CoinDaily>,
    pub rejected: Vec<Rejection>,
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || !text[first.len()..].ends_with(last) {
        return false;
    }
    if text.len() < first.len() + last.len() {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    true
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl FilterConfig {
    pub fn base_symbol<'a>(&self, coin: &'a str) -> &'a str {
        match &self.quote_asset {
            Some(q) if coin.len() > q.len() && coin.ends_with(q.as_str()) => &coin[..coin.len() - q.len()],
            _ => coin,
        }
    }

    pub fn check(&self, series: &CoinDaily) -> Option<RejectReason> {
        let base = self.base_symbol(&series.coin).to_ascii_uppercase();
        if self.stablecoins.iter().any(|s| s.eq_ignore_ascii_case(&base)) {
            return Some(RejectReason::Stablecoin);
        }
        if let Some(p) = self
            .leveraged_patterns
            .iter()
            .find(|p| glob_match(&p.to_ascii_uppercase(), &base))
        {
            return Some(RejectReason::Leveraged { pattern: p.clone() });
        }
        let mut volumes: Vec<f64> = series
            .days
            .iter()
            .filter(|d| d.complete)
            .map(|d| d.quote_volume)
            .collect();
        if volumes.len() < self.min_days {
            return Some(RejectReason::InsufficientData {
                complete_days: volumes.len(),
            });
        }
        let med = median(&mut volumes);
        if med < self.min_median_quote_volume {
            return Some(RejectReason::LowLiquidity {
                median_quote_volume: med,
            });
        }
        None
    }
}

/// Splits `series` into retained coins and per-coin rejection reasons.
pub fn filter_universe(series: Vec<CoinDaily>, config: &FilterConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for s in series {
        match config.check(&s) {
            None => out.kept.push(s),
            Some(reason) => out.rejected.push(Rejection { coin: s.coin, reason }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn coin(name: &str, days: usize, volume: f64) -> CoinDaily {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        CoinDaily {
            coin: name.into(),
            days: (0..days)
                .map(|i| DayRecord {
                    date: start + chrono::Duration::days(i as i64),
                    sigma: 0.03,
                    ret: Some(0.0),
                    n_intervals: 288,
                    complete: true,
                    close: 1.0,
                    quote_volume: volume,
                })
                .collect(),
        }
    }

    #[test]
    fn stablecoin_rejected() {
        let cfg = FilterConfig {
            stablecoins: vec!["USDC".into()],
            ..FilterConfig::default()
        };
        let out = filter_universe(vec![coin("USDC", 900, 1e9)], &cfg);
        assert!(out.kept.is_empty());
        assert_eq!(out.rejected[0].reason.to_string(), "stablecoin");
        let out = filter_universe(vec![coin("USDCUSDT", 900, 1e9)], &cfg);
        assert_eq!(out.rejected[0].reason, RejectReason::Stablecoin);
    }

    #[test]
    fn leveraged_rejected() {
        let cfg = FilterConfig::default();
        let out = filter_universe(vec![coin("BTCUP", 900, 1e9), coin("ETHDOWNUSDT", 900, 1e9)], &cfg);
        assert_eq!(out.rejected.len(), 2);
        assert!(out.rejected.iter().all(|r| r.reason.to_string() == "leveraged"));
    }

    #[test]
    fn liquid_long_coin_retained() {
        let out = filter_universe(vec![coin("BTCUSDT", 900, 1e9)], &FilterConfig::default());
        assert_eq!(out.kept.len(), 1);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn short_and_illiquid_rejected() {
        let out = filter_universe(
            vec![coin("AAA", 100, 1e9), coin("BBB", 900, 10.0)],
            &FilterConfig::default(),
        );
        assert_eq!(out.rejected[0].reason.to_string(), "insufficient_data");
        assert_eq!(out.rejected[1].reason.to_string(), "low_liquidity");
    }

    #[test]
    fn glob() {
        assert!(glob_match("*UP", "BTCUP"));
        assert!(!glob_match("*UP", "UPBTC"));
        assert!(glob_match("A*B*C", "AxxBxC"));
        assert!(!glob_match("AB*BA", "ABA"));
        assert!(glob_match("BTC", "BTC"));
    }
}
