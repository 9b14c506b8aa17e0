use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::K_B;

/// `tau = tau0 * exp(Ueff / T)` with `Ueff` in kelvin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusParams {
    pub tau0: f64,
    pub ueff_k: f64,
}

impl ArrheniusParams {
    pub fn ueff_cm(&self) -> f64 {
        self.ueff_k * K_B
    }

    pub fn tau(&self, t: f64) -> f64 {
        self.tau0 * (self.ueff_k / t).exp()
    }
}

/// Wald-Wolfowitz runs test on residual signs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunsTest {
    pub runs: usize,
    pub expected: f64,
    /// Standard score; strongly negative means residuals cluster by sign.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusFit {
    pub params: ArrheniusParams,
    /// RMS residual of `ln tau`.
    pub residual: f64,
    pub residuals: Vec<f64>,
    pub runs: Option<RunsTest>,
    /// Set when the runs test rejects randomness at the 5% level, which is
    /// the signature of curvature such as a low-temperature tunneling plateau.
    pub systematic_residuals: bool,
}

const RUNS_Z_CRITICAL: f64 = -1.96;

pub fn runs_test(residuals: &[f64]) -> Option<RunsTest> {
    let scale = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let signs: Vec<bool> = residuals.iter().filter(|r| r.abs() > 1e-12 * scale.max(1e-300)).map(|r| *r > 0.0).collect();
    let n = signs.len();
    let np = signs.iter().filter(|s| **s).count();
    let nm = n - np;
    if np == 0 || nm == 0 {
        return None;
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let (n, np, nm) = (n as f64, np as f64, nm as f64);
    let expected = 1.0 + 2.0 * np * nm / n;
    let var = 2.0 * np * nm * (2.0 * np * nm - n) / (n * n * (n - 1.0));
    if !(var > 0.0) {
        return None;
    }
    Some(RunsTest { runs, expected, z: (runs as f64 - expected) / var.sqrt() })
}

/// Linear least squares of `ln tau` against `1/T`.
pub fn arrhenius_fit(taus: &[f64], temps: &[f64]) -> Result<ArrheniusFit> {
    if taus.len() != temps.len() {
        return Err(Error::Dimension(format!("{} relaxation times for {} temperatures", taus.len(), temps.len())));
    }
    if taus.len() < 2 {
        return Err(Error::InvalidArgument("Arrhenius fit needs at least two points".into()));
    }
    if taus.iter().chain(temps).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("relaxation times and temperatures must be positive".into()));
    }
    let x: Vec<f64> = temps.iter().map(|t| 1.0 / t).collect();
    let y: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 1e-24 * mx * mx * n {
        return Err(Error::Rank("all temperatures coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - (intercept + slope * a)).collect();
    let residual = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let runs = if residuals.len() >= 3 { runs_test(&residuals) } else { None };
    let systematic_residuals = runs.map(|r| r.z < RUNS_Z_CRITICAL).unwrap_or(false);
    Ok(ArrheniusFit {
        params: ArrheniusParams { tau0: intercept.exp(), ueff_k: slope },
        residual,
        residuals,
        runs,
        systematic_residuals,
    })
}
