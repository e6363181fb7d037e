use rayon::prelude::*;
use serde::Serialize;

use super::{integrate, mode_spectrum, GyroParams, GyroState, IntegratorOptions, Vec3};
use crate::error::{Error, Result};

/// One row of a spin-rate sweep: spin and precession periods at a given Ω₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub omega0: f64,
    #[serde(rename = "T_s")]
    pub fast_period: f64,
    #[serde(rename = "T_l")]
    pub slow_period: Option<f64>,
}

/// Integrates a horizontal moment spinning about the vertical,
/// Ω = (0, 0, Ω₀), e = (1, 0, 0), for every Ω₀ and extracts both lines.
///
/// Points run in parallel; the output order follows `omega0s`.
pub fn precession_sweep(
    omega0s: &[f64],
    params: &GyroParams,
    t_end: f64,
    options: IntegratorOptions,
) -> Result<Vec<SweepPoint>> {
    omega0s
        .par_iter()
        .map(|&omega0| {
            let s = GyroState::new(Vec3::new(0.0, 0.0, omega0), Vec3::new(1.0, 0.0, 0.0), 0.0)?;
            let tr = integrate(&s, params, t_end, options)?;
            let m = mode_spectrum(&tr)?;
            Ok(SweepPoint { omega0, fast_period: m.fast_period(), slow_period: m.slow_period() })
        })
        .collect()
}

/// Fits ln T_l = ln C − α ln T_s over the points with a slow line; returns (ln C, α).
pub fn fit_power_law(points: &[SweepPoint]) -> Result<(f64, f64)> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter_map(|p| p.slow_period.map(|tl| (p.fast_period.ln(), tl.ln()))).collect();
    if logs.len() < 2 {
        return Err(Error::Degenerate(format!("power-law fit needs two slow lines, have {}", logs.len())));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all spin periods coincide".into()));
    }
    let alpha = -sxy / sxx;
    Ok((my + alpha * mx, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let pts: Vec<SweepPoint> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&ts: &f64| SweepPoint { omega0: 0.0, fast_period: ts, slow_period: Some(80.0 * ts.powf(-0.96)) })
            .collect();
        let (lnc, alpha) = fit_power_law(&pts).unwrap();
        assert!((alpha - 0.96).abs() < 1e-12);
        assert!((lnc - 80f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_slow_lines() {
        let p = SweepPoint { omega0: 3.0, fast_period: 2.0, slow_period: None };
        assert!(fit_power_law(&[p, p]).is_err());
    }
}
