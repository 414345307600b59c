//! Small least-squares fits used to extract tail and Taylor coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coeffs: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Least squares for `y ≈ Σ c_k basis_k(x)`.
pub fn linear_lsq(xs: &[f64], ys: &[f64], basis: &[&dyn Fn(f64) -> f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < basis.len() || basis.is_empty() {
        return Err(Error::Fit(format!(
            "{} points for {} basis functions",
            xs.len(),
            basis.len()
        )));
    }
    let a = DMatrix::from_fn(xs.len(), basis.len(), |i, j| basis[j](xs[i]));
    // Column scaling keeps the SVD well conditioned for power bases.
    let scales: Vec<f64> = (0..basis.len())
        .map(|j| a.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    let mut a_s = a.clone();
    for (j, s) in scales.iter().enumerate() {
        a_s.column_mut(j).scale_mut(1.0 / s);
    }
    let b = DVector::from_column_slice(ys);
    let svd = a_s.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let coeffs: Vec<f64> = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let resid = &a * DVector::from_column_slice(&coeffs) - b;
    let rms = (resid.norm_squared() / xs.len() as f64).sqrt();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    Ok(LinearFit { coeffs, rms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
}

/// Straight-line fit of `log y` against `log x`. All values must be positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least two points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if lx.len() > 2 {
        let ss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
    })
}
