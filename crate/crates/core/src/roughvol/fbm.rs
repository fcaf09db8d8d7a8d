//! Exact fractional Gaussian noise by circulant embedding (Davies–Harte).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::RoughVolError;

fn autocovariance(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let p = 2.0 * h;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// `n` unit-variance fractional Gaussian noise samples, deterministic in `seed`.
pub fn simulate_fgn(h: f64, n: usize, seed: u64) -> Result<Vec<f64>, RoughVolError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(RoughVolError::HurstRange(h, "(0, 1)"));
    }
    if n < 2 {
        return Err(RoughVolError::Invalid(format!("n = {n}, need at least 2")));
    }
    let half = (n - 1).next_power_of_two().max(1);
    let m = 2 * half;

    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex::new(autocovariance(h, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let max_eig = row.iter().map(|c| c.re).fold(0.0f64, f64::max);
    let mut scale = Vec::with_capacity(m);
    for c in &row {
        let lambda = c.re;
        if lambda < -1e-9 * max_eig {
            return Err(RoughVolError::Embedding { n, suggested: 2 * n });
        }
        scale.push((lambda.max(0.0) / m as f64).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi: Vec<Complex<f64>> = scale
        .iter()
        .map(|&s| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex::new(s * a, s * b)
        })
        .collect();
    fft.process(&mut xi);
    Ok(xi.into_iter().take(n).map(|c| c.re).collect())
}

/// fBm path `B_0 = 0, B_1, ..., B_n` on the integer grid (unit variance at lag 1).
pub fn simulate_fbm(h: f64, n: usize, seed: u64) -> Result<Vec<f64>, RoughVolError> {
    let noise = simulate_fgn(h, n, seed)?;
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    let mut acc = 0.0;
    for x in noise {
        acc += x;
        path.push(acc);
    }
    Ok(path)
}
