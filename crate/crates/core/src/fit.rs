//! Least-squares fits of exponential decay.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MIN_FIT_POINTS: usize = 6;

/// log y ≈ intercept + slope·x over the retained points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

impl ExpFit {
    /// Per-step rate e^slope.
    pub fn rate(&self) -> f64 {
        self.slope.exp()
    }
}

/// Fits log y against x, ignoring points with y ≤ floor.
pub fn fit_exponential(xs: &[f64], ys: &[f64], floor: f64) -> Result<ExpFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > floor && y.is_finite())
        .map(|(&x, &y)| (x, y.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(LabError::Other(format!("{} points above the floor; at least {MIN_FIT_POINTS} needed", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::Other("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok(ExpFit { slope, intercept: my - slope * mx, points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_rate() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * 0.7f64.powf(*x)).collect();
        let f = fit_exponential(&xs, &ys, 0.0).unwrap();
        assert!((f.rate() - 0.7).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-10);
        assert!(fit_exponential(&xs[..5], &ys[..5], 0.0).is_err());
    }
}
