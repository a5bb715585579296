//! Least-squares power-law fit of the convergence metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate points: {0}")]
    DegeneratePoints(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitResult {
    /// `(epsilon + nu, sup metric)`
    pub points: Vec<(f64, f64)>,
    pub fitted_order: f64,
    /// RMS of the log-space residuals.
    pub fit_residual: f64,
}

/// Slope of `log(metric)` against `log(epsilon + nu)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(p) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(FitError::DegeneratePoints(format!(
            "({}, {}) is not positive and finite",
            p.0, p.1
        )));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return Err(FitError::DegeneratePoints("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    Ok(RateFitResult {
        points: points.to_vec(),
        fitted_order: slope,
        fit_residual: (rss / n).sqrt(),
    })
}
