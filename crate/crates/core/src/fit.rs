//! Small least-squares fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Straight-line fit `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub residual_rms: T,
    pub max_abs_residual: T,
    pub points: usize,
}

pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let design: Vec<Vec<T>> = x.iter().map(|&xi| vec![xi, T::one()]).collect();
    let ls = least_squares(&design, y)?;
    Ok(LinearFit {
        slope: ls.coefficients[0],
        intercept: ls.coefficients[1],
        r_squared: ls.r_squared,
        residual_rms: ls.residual_rms,
        max_abs_residual: ls.max_abs_residual,
        points: x.len(),
    })
}

/// General linear least squares result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub r_squared: T,
    pub residual_rms: T,
    pub max_abs_residual: T,
}

/// Solves `min ||A c - y||` by Householder QR; `rows[i]` is row `i` of `A`.
pub fn least_squares<T: Real>(rows: &[Vec<T>], y: &[T]) -> Result<LeastSquares<T>> {
    let m = rows.len();
    if m != y.len() {
        return Err(Error::DimensionMismatch { expected: m, got: y.len() });
    }
    let p = rows.first().map_or(0, Vec::len);
    if p == 0 || m < p {
        return Err(Error::Fit(format!("{m} points for {p} parameters")));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Fit("ragged design matrix".into()));
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    // column-major copy of A plus the right-hand side
    let mut a: Vec<Vec<T>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let mut diag = vec![T::zero(); p];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        let scale = a.iter().map(|c| c.iter().fold(T::zero(), |s, v| s.max(v.abs()))).fold(T::zero(), T::max);
        if norm <= T::epsilon() * T::lit(64.0) * scale.max(T::one()) {
            return Err(Error::Fit("rank-deficient design matrix".into()));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        diag[k] = alpha;
        a[k][k] = a[k][k] - alpha;
        let vnorm2: T = a[k][k..].iter().map(|&v| v * v).sum();
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dotp: T = v.iter().zip(&col[k..]).map(|(&x, &y)| x * y).sum();
            let f = T::lit(2.0) * dotp / vnorm2;
            for (c, &vi) in col[k..].iter_mut().zip(v) {
                *c = *c - f * vi;
            }
        }
        let dotp: T = v.iter().zip(&b[k..]).map(|(&x, &y)| x * y).sum();
        let f = T::lit(2.0) * dotp / vnorm2;
        for (c, &vi) in b[k..].iter_mut().zip(v) {
            *c = *c - f * vi;
        }
    }
    let mut coeffs = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut acc = b[k];
        for j in (k + 1)..p {
            acc = acc - a[j][k] * coeffs[j];
        }
        coeffs[k] = acc / diag[k];
    }

    let fitted: Vec<T> = rows
        .iter()
        .map(|r| r.iter().zip(&coeffs).map(|(&x, &c)| x * c).sum())
        .collect();
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&yi, &fi)| yi - fi).collect();
    let mean = y.iter().copied().sum::<T>() / T::from_usize_lossy(m);
    let ss_res: T = residuals.iter().map(|&r| r * r).sum();
    let ss_tot: T = y.iter().map(|&yi| (yi - mean) * (yi - mean)).sum();
    let r_squared = if ss_tot > T::zero() {
        T::one() - ss_res / ss_tot
    } else if ss_res <= T::epsilon() {
        T::one()
    } else {
        T::zero()
    };
    let residual_rms = (ss_res / T::from_usize_lossy(m)).sqrt();
    let max_abs_residual = residuals.iter().fold(T::zero(), |acc, r| acc.max(r.abs()));
    Ok(LeastSquares {
        coefficients: coeffs,
        residuals,
        r_squared,
        residual_rms,
        max_abs_residual,
    })
}

/// Fits `y = amplitude * exp(rate * x)` through a line in `ln y`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExponentialFit<T> {
    pub rate: T,
    pub amplitude: T,
    pub log_fit: LinearFit<T>,
}

pub fn exponential_fit<T: Real>(x: &[T], y: &[T]) -> Result<ExponentialFit<T>> {
    if let Some(bad) = y.iter().find(|v| !(**v > T::zero())) {
        return Err(Error::Fit(format!("non-positive value {bad} in exponential fit")));
    }
    let logs: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let log_fit = linear_fit(x, &logs)?;
    Ok(ExponentialFit {
        rate: log_fit.slope,
        amplitude: log_fit.intercept.exp(),
        log_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-13);
        assert!((f.intercept + 1.0).abs() < 1e-13);
        assert!((f.r_squared - 1.0).abs() < 1e-13);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let f = linear_fit(&[5.0f64, 7.0, 9.0, 11.0], &[0.3; 4]).unwrap();
        assert!(f.slope.abs() < 1e-15);
    }

    #[test]
    fn three_parameter_model() {
        // y = 1 + 2 max(x,0) + 3 max(-x,0)
        let xs = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0f64];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x.max(0.0), (-x).max(0.0)]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 1.0 + 2.0 * x.max(0.0) + 3.0 * (-x).max(0.0)).collect();
        let ls = least_squares(&rows, &y).unwrap();
        for (c, want) in ls.coefficients.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_recovers_rate() {
        let x: Vec<f64> = (0..10).map(|i| 0.3 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 0.8 * (-1.7 * t).exp()).collect();
        let f = exponential_fit(&x, &y).unwrap();
        assert!((f.rate + 1.7).abs() < 1e-6 * 1.7);
        assert!((f.amplitude - 0.8).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(exponential_fit(&[0.0, 1.0, 2.0], &[1.0, 0.0, 0.5]).is_err());
    }
}
