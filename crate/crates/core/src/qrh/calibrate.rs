//! Regression of next-day variance on `(Z_{t-1}, Z_{t-1}^2)`.

use serde::{Deserialize, Serialize};

use super::{QrhError, QrhParams};
use crate::linalg;

/// Positivity floor for `a` and `c`.
pub const PARAM_FLOOR: f64 = 1e-12;
const MIN_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrhCalibration {
    pub params: QrhParams,
    /// Raw regression coefficients `(k0, k1, k2)` of `σ² = k0 + k1 Z + k2 Z²`.
    pub coefficients: [f64; 3],
    /// Delta-method standard errors of `(a, b, c)`; `None` when `a` was floored.
    pub std_errors: Option<[f64; 3]>,
    pub rows: usize,
    pub a_floored: bool,
    pub c_floored: bool,
    pub b_negative: bool,
}

/// Fits `σ²_t = a (Z_{t-1} - b)² + c` by OLS on `(1, Z, Z²)`.
///
/// `a = k2`, `b = -k1 / (2a)`, `c = k0 - a b²`. `a` and `c` are floored at
/// [`PARAM_FLOOR`] and the floors are reported; `b` keeps its sign.
pub fn calibrate_qrh(z_prev: &[f64], var: &[f64]) -> Result<QrhCalibration, QrhError> {
    if z_prev.len() != var.len() {
        return Err(QrhError::Misaligned(z_prev.len(), var.len()));
    }
    if var.len() < MIN_ROWS {
        return Err(QrhError::TooFewRows {
            have: var.len(),
            need: MIN_ROWS,
        });
    }
    let x: Vec<Vec<f64>> = z_prev.iter().map(|&z| vec![z, z * z]).collect();
    let fit = linalg::ols(&x, var)?;
    let (k0, k1, k2) = (fit.intercept, fit.coeffs[0], fit.coeffs[1]);

    let a_floored = !(k2 > PARAM_FLOOR);
    let a = if a_floored { PARAM_FLOOR } else { k2 };
    let b = -k1 / (2.0 * a);
    let c_raw = k0 - a * b * b;
    let c_floored = !(c_raw > PARAM_FLOOR);
    let c = if c_floored { PARAM_FLOOR } else { c_raw };

    let std_errors = (!a_floored).then(|| {
        let v = fit.covariance();
        let grads: [[f64; 3]; 3] = [
            [0.0, 0.0, 1.0],
            [0.0, -1.0 / (2.0 * k2), k1 / (2.0 * k2 * k2)],
            [1.0, -k1 / (2.0 * k2), k1 * k1 / (4.0 * k2 * k2)],
        ];
        grads.map(|g| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += g[i] * v[i][j] * g[j];
                }
            }
            s.max(0.0).sqrt()
        })
    });

    Ok(QrhCalibration {
        params: QrhParams { a, b, c, lambda: 0.0 },
        coefficients: [k0, k1, k2],
        std_errors,
        rows: var.len(),
        a_floored,
        c_floored,
        b_negative: b < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zs(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect()
    }

    #[test]
    fn exact_quadratic_recovered() {
        let z = zs(500);
        let v: Vec<f64> = z.iter().map(|z| 2.0 * (z - 0.3).powi(2) + 0.5).collect();
        let cal = calibrate_qrh(&z, &v).unwrap();
        let p = cal.params;
        assert!((p.a - 2.0).abs() < 1e-8);
        assert!((p.b - 0.3).abs() < 1e-8);
        assert!((p.c - 0.5).abs() < 1e-8);
        assert!(!cal.a_floored && !cal.c_floored && !cal.b_negative);
    }

    #[test]
    fn flat_target_floors_curvature() {
        let z = zs(300);
        let v = vec![0.8; 300];
        let cal = calibrate_qrh(&z, &v).unwrap();
        assert!(cal.params.a <= PARAM_FLOOR);
        assert!((cal.params.c - 0.8).abs() < 1e-6);
    }

    #[test]
    fn shift_invariance() {
        let z = zs(400);
        let v: Vec<f64> = z
            .iter()
            .map(|z| 1.5 * (z + 0.2).powi(2) + 0.3 + 0.01 * (z * 13.0).sin())
            .collect();
        let base = calibrate_qrh(&z, &v).unwrap().params;
        let delta = 0.75;
        let shifted: Vec<f64> = z.iter().map(|z| z + delta).collect();
        let s = calibrate_qrh(&shifted, &v).unwrap().params;
        assert!((s.a - base.a).abs() < 1e-8);
        assert!((s.c - base.c).abs() < 1e-8);
        assert!((s.b - (base.b + delta)).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            calibrate_qrh(&[0.0; 10], &[1.0; 10]),
            Err(QrhError::TooFewRows { .. })
        ));
        assert!(matches!(
            calibrate_qrh(&[0.0; 60], &[1.0; 59]),
            Err(QrhError::Misaligned(..))
        ));
    }
}
