use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ratio_table, EvalError, EvalReport, ModelForecast, Realized};
use crate::qrh::blend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub lambdas: Vec<f64>,
    /// Blends against λ = 0 (RFSV alone).
    pub vs_rfsv: EvalReport,
    /// Blends against an LSTM stream, when one was supplied.
    pub vs_lstm: Option<EvalReport>,
    /// Median ratio vs λ = 0 for each λ, `NaN` when no coin qualified.
    pub medians: Vec<f64>,
    /// λ with the smallest median ratio vs λ = 0; ties go to the smaller λ.
    pub lambda_star: f64,
}

pub fn lambda_label(lambda: f64) -> String {
    format!("lambda={lambda}")
}

/// Blends aligned RFSV and QRH forecasts at every λ and compares each blend
/// with the pure RFSV stream and, optionally, an LSTM stream.
pub fn lambda_sweep(
    rfsv: &[ModelForecast],
    qrh: &[ModelForecast],
    realized: &Realized,
    lambdas: &[f64],
    lstm: Option<&[ModelForecast]>,
) -> Result<SweepReport, EvalError> {
    if !lambdas.contains(&0.0) {
        return Err(EvalError::Misaligned("the λ grid must contain 0".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(EvalError::Misaligned(format!("λ = {bad} outside [0, 1]")));
    }
    let q: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = qrh
        .iter()
        .map(|f| (f.coin.as_str(), f.rows.iter().copied().collect()))
        .collect();
    // (coin, [(date, rfsv, qrh)])
    type Aligned<'a> = (&'a str, Vec<(NaiveDate, f64, f64)>);
    let mut aligned: Vec<Aligned> = Vec::new();
    for f in rfsv {
        let Some(qc) = q.get(f.coin.as_str()) else { continue };
        let rows: Vec<_> = f
            .rows
            .iter()
            .filter_map(|&(d, r)| qc.get(&d).map(|&v| (d, r, v)))
            .collect();
        if !rows.is_empty() {
            aligned.push((&f.coin, rows));
        }
    }
    if aligned.is_empty() {
        return Err(EvalError::Misaligned("RFSV and QRH share no (coin, date) pairs".into()));
    }

    let mut blends = Vec::new();
    for &l in lambdas {
        for (coin, rows) in &aligned {
            let rows = rows
                .iter()
                .map(|&(d, r, v)| blend(r, v, l).map(|b| (d, b)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EvalError::Misaligned(e.to_string()))?;
            blends.push(ModelForecast {
                model: lambda_label(l),
                coin: coin.to_string(),
                rows,
            });
        }
    }
    let vs_rfsv = ratio_table(&blends, realized, &lambda_label(0.0))?;
    let vs_lstm = match lstm {
        Some(l) if !l.is_empty() => {
            let id = l[0].model.clone();
            let mut all = l.to_vec();
            all.extend(blends.iter().cloned());
            Some(ratio_table(&all, realized, &id)?)
        }
        _ => None,
    };

    let medians: Vec<f64> = lambdas
        .iter()
        .map(|&l| vs_rfsv.summary_for(&lambda_label(l)).map_or(f64::NAN, |s| s.median))
        .collect();
    let mut order: Vec<usize> = (0..lambdas.len()).filter(|&i| !medians[i].is_nan()).collect();
    order.sort_by(|&a, &b| {
        medians[a]
            .total_cmp(&medians[b])
            .then(lambdas[a].total_cmp(&lambdas[b]))
    });
    let lambda_star = order.first().map_or(0.0, |&i| lambdas[i]);
    Ok(SweepReport {
        lambdas: lambdas.to_vec(),
        vs_rfsv,
        vs_lstm,
        medians,
        lambda_star,
    })
}
