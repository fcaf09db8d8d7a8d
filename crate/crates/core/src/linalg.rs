//! Small dense least-squares kernel shared by the linear baselines and the
//! QRH calibration.
//!
//! Regressions are solved through centered normal equations. A ridge jitter
//! of `1e-10 * trace / k` keeps the Cholesky factorization alive on strongly
//! collinear windows, and a few steps of iterative refinement against the
//! un-jittered system remove the bias the jitter introduces.

use thiserror::Error;

const JITTER: f64 = 1e-10;
const SINGULAR_PIVOT: f64 = 1e-10;
const REFINE_STEPS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("not enough rows: {rows} rows for {params} parameters")]
    TooFewRows { rows: usize, params: usize },
    #[error("design matrix is singular (regressor {column} is collinear)")]
    Singular { column: usize },
    #[error("row length mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value in regression input")]
    NonFinite,
}

/// Ordinary least-squares fit `y = intercept + x · coeffs`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub n: usize,
    means: Vec<f64>,
    /// Inverse of the centered cross-product matrix, row-major.
    centered_inv: Vec<f64>,
}

/// Lower-triangular Cholesky factor, row-major `k x k`.
struct Cholesky {
    k: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes `a`; returns the index of the first column whose pivot
    /// falls below `tol * a[j][j]` on failure.
    fn factor(a: &[f64], k: usize, tol: f64) -> Result<Self, usize> {
        let mut l = vec![0.0; k * k];
        for j in 0..k {
            let mut d = a[j * k + j];
            for p in 0..j {
                d -= l[j * k + p] * l[j * k + p];
            }
            if !(d > tol * a[j * k + j]) || a[j * k + j] <= 0.0 {
                return Err(j);
            }
            let d = d.sqrt();
            l[j * k + j] = d;
            for i in (j + 1)..k {
                let mut s = a[i * k + j];
                for p in 0..j {
                    s -= l[i * k + p] * l[j * k + p];
                }
                l[i * k + j] = s / d;
            }
        }
        Ok(Cholesky { k, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut z = b.to_vec();
        for i in 0..k {
            for p in 0..i {
                z[i] -= self.l[i * k + p] * z[p];
            }
            z[i] /= self.l[i * k + i];
        }
        for i in (0..k).rev() {
            for p in (i + 1)..k {
                z[i] -= self.l[p * k + i] * z[p];
            }
            z[i] /= self.l[i * k + i];
        }
        z
    }
}

fn matvec(a: &[f64], x: &[f64], k: usize) -> Vec<f64> {
    (0..k).map(|i| (0..k).map(|j| a[i * k + j] * x[j]).sum()).collect()
}

/// Fits `y` on the rows of `x` (each of length `ncols`) plus an intercept.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit, LinalgError> {
    let n = y.len();
    if x.len() != n {
        return Err(LinalgError::Shape {
            expected: n,
            got: x.len(),
        });
    }
    let k = x.first().map_or(0, |r| r.len());
    if n < k + 2 {
        return Err(LinalgError::TooFewRows { rows: n, params: k + 1 });
    }
    for row in x {
        if row.len() != k {
            return Err(LinalgError::Shape {
                expected: k,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }

    let nf = n as f64;
    let mut means = vec![0.0; k];
    for row in x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= nf);
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut s = vec![0.0; k * k];
    let mut sxy = vec![0.0; k];
    let mut centered = vec![0.0; k];
    for (row, &yi) in x.iter().zip(y) {
        for j in 0..k {
            centered[j] = row[j] - means[j];
        }
        let yc = yi - y_mean;
        for i in 0..k {
            sxy[i] += centered[i] * yc;
            for j in 0..=i {
                s[i * k + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            s[j * k + i] = s[i * k + j];
        }
    }

    let exact = Cholesky::factor(&s, k, SINGULAR_PIVOT).map_err(|column| LinalgError::Singular { column })?;

    let trace: f64 = (0..k).map(|i| s[i * k + i]).sum();
    let lambda = if k > 0 { JITTER * trace / k as f64 } else { 0.0 };
    let mut jittered = s.clone();
    for i in 0..k {
        jittered[i * k + i] += lambda;
    }
    let chol = Cholesky::factor(&jittered, k, 0.0).map_err(|column| LinalgError::Singular { column })?;

    let mut beta = chol.solve(&sxy);
    for _ in 0..REFINE_STEPS {
        let sb = matvec(&s, &beta, k);
        let resid: Vec<f64> = sxy.iter().zip(&sb).map(|(a, b)| a - b).collect();
        let delta = chol.solve(&resid);
        beta.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
    }

    let intercept = y_mean - means.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
    let rss = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let pred = intercept + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            (yi - pred).powi(2)
        })
        .sum();

    let mut centered_inv = vec![0.0; k * k];
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = exact.solve(&e);
        for i in 0..k {
            centered_inv[i * k + j] = col[i];
        }
    }

    Ok(OlsFit {
        intercept,
        coeffs: beta,
        rss,
        n,
        means,
        centered_inv,
    })
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Unbiased residual variance `rss / (n - k - 1)`.
    pub fn sigma2(&self) -> f64 {
        let dof = self.n.saturating_sub(self.coeffs.len() + 1).max(1);
        self.rss / dof as f64
    }

    /// Covariance of `[intercept, coeffs...]` under homoskedastic errors.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let k = self.coeffs.len();
        let s2 = self.sigma2();
        let inv = &self.centered_inv;
        let mut cov = vec![vec![0.0; k + 1]; k + 1];
        // inv * means
        let im: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| inv[i * k + j] * self.means[j]).sum())
            .collect();
        let quad: f64 = self.means.iter().zip(&im).map(|(m, v)| m * v).sum();
        cov[0][0] = s2 * (1.0 / self.n as f64 + quad);
        for i in 0..k {
            cov[0][i + 1] = -s2 * im[i];
            cov[i + 1][0] = cov[0][i + 1];
            for j in 0..k {
                cov[i + 1][j + 1] = s2 * inv[i * k + j];
            }
        }
        cov
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_plane_recovered() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 - 2.0 * r[0] + 0.25 * r[1]).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.intercept - 1.5).abs() < 1e-12);
        assert!((fit.coeffs[0] + 2.0).abs() < 1e-12);
        assert!((fit.coeffs[1] - 0.25).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn collinear_columns_are_singular() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(ols(&x, &y), Err(LinalgError::Singular { column: 1 })));
    }

    #[test]
    fn constant_column_is_singular() {
        let x: Vec<Vec<f64>> = (0..20).map(|_| vec![3.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(ols(&x, &y), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn simple_regression_covariance_matches_textbook() {
        // slope variance = s2 / Sxx, intercept variance = s2 (1/n + xbar^2/Sxx)
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [1.1, 1.9, 3.2, 3.9, 5.1, 5.8];
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let fit = ols(&x, &ys).unwrap();
        let xbar = 3.5;
        let sxx: f64 = xs.iter().map(|v| (v - xbar) * (v - xbar)).sum();
        let s2 = fit.sigma2();
        let cov = fit.covariance();
        assert!((cov[1][1] - s2 / sxx).abs() < 1e-14);
        assert!((cov[0][0] - s2 * (1.0 / 6.0 + xbar * xbar / sxx)).abs() < 1e-14);
        assert!((cov[0][1] + s2 * xbar / sxx).abs() < 1e-14);
    }
}
