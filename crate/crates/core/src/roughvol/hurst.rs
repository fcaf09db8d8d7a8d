//! Variogram (q = 2) estimator of the Hurst exponent and the
//! volatility-of-volatility ν of log realized volatility.

use serde::{Deserialize, Serialize};

use super::RoughVolError;

/// Clamp applied before the estimate feeds the predictor.
pub const H_MIN: f64 = 0.01;
pub const H_MAX: f64 = 0.49;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    /// Unclamped regression estimate.
    pub h_raw: f64,
    /// `h_raw` clamped to `[H_MIN, H_MAX]`.
    pub h: f64,
    pub nu: f64,
    pub clamped: bool,
}

/// `m(2, Δ)` for `Δ = 1..=delta_max`: the mean squared lag-Δ increment,
/// pooled over increment sets drawn within each segment.
pub fn variogram(segments: &[&[f64]], delta_max: usize) -> Result<Vec<f64>, RoughVolError> {
    let mut out = Vec::with_capacity(delta_max);
    for lag in 1..=delta_max {
        let mut sum = 0.0;
        let mut count = 0usize;
        for seg in segments {
            for w in seg.windows(lag + 1) {
                let d = w[lag] - w[0];
                sum += d * d;
                count += 1;
            }
        }
        if count == 0 {
            return Err(RoughVolError::TooShort {
                have: segments.iter().map(|s| s.len()).max().unwrap_or(0),
                need: lag + 1,
            });
        }
        out.push(sum / count as f64);
    }
    Ok(out)
}

fn fit_loglog(m: &[f64]) -> Result<HurstEstimate, RoughVolError> {
    if m.iter().any(|&v| !(v > 0.0)) {
        return Err(RoughVolError::Constant);
    }
    let xs: Vec<f64> = (1..=m.len()).map(|d| (d as f64).ln()).collect();
    let ys: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let h_raw = slope / 2.0;
    let h = h_raw.clamp(H_MIN, H_MAX);
    Ok(HurstEstimate {
        h_raw,
        h,
        nu: (intercept / 2.0).exp(),
        clamped: h != h_raw,
    })
}

/// Regresses `log m(2, Δ)` on `log Δ`: `H = slope / 2`, `ν = exp(intercept / 2)`.
pub fn estimate_hurst(log_sigma: &[f64], delta_max: usize) -> Result<HurstEstimate, RoughVolError> {
    if delta_max < 2 {
        return Err(RoughVolError::Invalid("delta_max must be at least 2".into()));
    }
    let need = 10 * delta_max;
    if log_sigma.len() < need {
        return Err(RoughVolError::TooShort {
            have: log_sigma.len(),
            need,
        });
    }
    fit_loglog(&variogram(&[log_sigma], delta_max)?)
}

/// Pooled estimate over several series (coins or gap-free segments).
///
/// Increment sets are concatenated; no increment spans two series.
pub fn estimate_hurst_pooled(series: &[&[f64]], delta_max: usize) -> Result<HurstEstimate, RoughVolError> {
    if delta_max < 2 {
        return Err(RoughVolError::Invalid("delta_max must be at least 2".into()));
    }
    let total: usize = series.iter().map(|s| s.len()).sum();
    let need = 10 * delta_max;
    if total < need {
        return Err(RoughVolError::TooShort { have: total, need });
    }
    fit_loglog(&variogram(series, delta_max)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roughvol::simulate_fbm;

    #[test]
    fn constant_series_errors() {
        assert_eq!(estimate_hurst(&[0.5; 400], 30), Err(RoughVolError::Constant));
    }

    #[test]
    fn short_series_errors() {
        assert!(matches!(
            estimate_hurst(&[0.5; 100], 30),
            Err(RoughVolError::TooShort { .. })
        ));
    }

    #[test]
    fn exact_power_law_variogram() {
        // A path whose squared increments follow ν² Δ^{2H} exactly is not
        // available, so check the log-log fit directly.
        let m: Vec<f64> = (1..=30).map(|d| 0.09 * (d as f64).powf(0.2)).collect();
        let e = fit_loglog(&m).unwrap();
        assert!((e.h_raw - 0.1).abs() < 1e-12);
        assert!((e.nu - 0.3).abs() < 1e-12);
        assert!(!e.clamped);
    }

    #[test]
    fn brownian_path_near_half_and_clamped() {
        let path = simulate_fbm(0.5, 100_000, 3).unwrap();
        let e = estimate_hurst(&path, 30).unwrap();
        assert!((0.48..=0.52).contains(&e.h_raw), "{e:?}");
        if e.h_raw > H_MAX {
            assert!(e.clamped);
            assert_eq!(e.h, H_MAX);
        }
    }

    #[test]
    fn scaling_sigma_leaves_h_unchanged() {
        let path: Vec<f64> = simulate_fbm(0.15, 5000, 9).unwrap().iter().map(|x| 0.3 * x).collect();
        let shifted: Vec<f64> = path.iter().map(|x| x + 3.7f64.ln()).collect();
        let a = estimate_hurst(&path, 30).unwrap();
        let b = estimate_hurst(&shifted, 30).unwrap();
        assert!((a.h_raw - b.h_raw).abs() < 1e-12);
        assert!((a.nu - b.nu).abs() < 1e-12);
    }

    #[test]
    fn pooling_does_not_join_series() {
        // Two flat series at different levels: joining them would create a
        // jump; pooled increments stay zero.
        let a = [1.0; 200];
        let b = [5.0; 200];
        assert_eq!(estimate_hurst_pooled(&[&a, &b], 10), Err(RoughVolError::Constant));
    }
}
