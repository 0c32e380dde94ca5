use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log y ≈ γ log x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_powerlaw(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!("power-law fit needs >= 3 points, got {}", pairs.len())));
    }
    if let Some((x, y)) = pairs.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidInput(format!("power-law fit needs positive data, got ({x}, {y})")));
    }
    let n = pairs.len() as f64;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("power-law fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let gamma = sxy / sxx;
    let intercept = my - gamma * mx;
    let residual = (logs.iter().map(|p| (p.1 - gamma * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PowerLawFit { gamma, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pairs: Vec<_> = [8.0, 16.0, 32.0, 64.0].iter().map(|&l: &f64| (l, 7.0 * l * l)).collect();
        let fit = fit_powerlaw(&pairs).unwrap();
        assert!((fit.gamma - 2.0).abs() < 1e-10);
        assert!((fit.intercept - 7.0f64.ln()).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn constant_data() {
        let fit = fit_powerlaw(&[(1.0, 5.0), (2.0, 5.0), (4.0, 5.0)]).unwrap();
        assert!(fit.gamma.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_powerlaw(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_powerlaw(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_powerlaw(&[(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)]).is_err());
    }
}
