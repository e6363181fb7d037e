//! Cramér–Rao bounds for the decay rate of a log-frequency record with
//! random-walk process noise and white readout noise.
//!
//! The intercept α is a nuisance parameter and is eliminated through the
//! Schur complement, so the bound is 1/(t⊥ᵀΣ⁻¹t⊥) with t⊥ the part of the
//! time vector that the constant column cannot absorb.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::K_B;
use crate::spindown::StateSpaceModel;

/// Largest record handled by the dense bound; beyond it use the limits.
pub const DEFAULT_MAX_SAMPLES: usize = 10_000;

/// Floor applied to σ_v² relative to QΔ so that Σ stays invertible.
pub const SIGMA_V_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub model: StateSpaceModel,
    /// Process-noise intensity Q (1/s).
    pub q: f64,
    /// Σ_ij = QΔ·min(i,j) + σ_v²δ_ij.
    pub matrix: DMatrix<f64>,
}

impl CovarianceModel {
    /// Sample times t_k = kΔ.
    pub fn times(&self) -> DVector<f64> {
        DVector::from_vec(self.model.times())
    }
}

fn covariance_matrix(n: usize, q_dt: f64, sigma_v2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| q_dt * i.min(j) as f64 + if i == j { sigma_v2 } else { 0.0 })
}

pub fn build_covariance(model: &StateSpaceModel, q: f64) -> Result<CovarianceModel> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain(format!("process-noise intensity must be non-negative, got {q}")));
    }
    let sigma_v2 = model.sigma_v() * model.sigma_v();
    if sigma_v2 == 0.0 && q * model.dt() == 0.0 {
        return Err(Error::IllConditioned("no noise at all: Σ is identically zero".into()));
    }
    let matrix = covariance_matrix(model.n_samples(), q * model.dt(), sigma_v2);
    Ok(CovarianceModel { model: *model, q, matrix })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbResult {
    /// Lower bound on Var(γ̂) ((1/s)²).
    pub variance: f64,
    /// True when σ_v² was raised to the floor before factorizing.
    pub regularized: bool,
    pub sigma_v2_used: f64,
}

/// Projection of t off the constant column in the Σ⁻¹ metric, with the
/// factorization that produced it.
struct Normalized {
    chol: Cholesky<f64, Dyn>,
    t_perp: DVector<f64>,
    regularized: bool,
    sigma_v2: f64,
}

fn normalized(cov: &CovarianceModel) -> Result<Normalized> {
    let n = cov.model.n_samples();
    let q_dt = cov.q * cov.model.dt();
    let raw = cov.model.sigma_v() * cov.model.sigma_v();
    let sigma_v2 = raw.max(SIGMA_V_FLOOR * q_dt);
    let regularized = sigma_v2 > raw;
    let matrix = if regularized { covariance_matrix(n, q_dt, sigma_v2) } else { cov.matrix.clone() };
    let diag_max = matrix.diagonal().max();
    let diag_min = matrix.diagonal().min();
    let chol = Cholesky::new(matrix).ok_or_else(|| {
        Error::IllConditioned(format!(
            "Cholesky factorization failed; diagonal spread {:.3e} suggests condition number at least that large",
            diag_max / diag_min.max(f64::MIN_POSITIVE)
        ))
    })?;
    // Centering t leaves t⊥ unchanged and avoids cancellation in the quadratic forms.
    let mid = 0.5 * (n - 1) as f64 * cov.model.dt();
    let t = DVector::from_fn(n, |k, _| k as f64 * cov.model.dt() - mid);
    let ones = DVector::from_element(n, 1.0);
    let sinv_t = chol.solve(&t);
    let sinv_1 = chol.solve(&ones);
    let coef = ones.dot(&sinv_t) / ones.dot(&sinv_1);
    let t_perp = t - ones * coef;
    Ok(Normalized { chol, t_perp, regularized, sigma_v2 })
}

fn check_size(cov: &CovarianceModel, max_samples: usize) -> Result<()> {
    let n = cov.model.n_samples();
    if n > max_samples {
        return Err(Error::Domain(format!(
            "{n} samples exceed the dense-bound limit of {max_samples}; use the readout/process limits"
        )));
    }
    Ok(())
}

/// Exact bound [t⊥ᵀΣ⁻¹t⊥]⁻¹, by Cholesky solves only.
pub fn exact_crlb_gamma(cov: &CovarianceModel) -> Result<CrlbResult> {
    exact_crlb_gamma_capped(cov, DEFAULT_MAX_SAMPLES)
}

pub fn exact_crlb_gamma_capped(cov: &CovarianceModel, max_samples: usize) -> Result<CrlbResult> {
    check_size(cov, max_samples)?;
    let nz = normalized(cov)?;
    let info = nz.t_perp.dot(&nz.chol.solve(&nz.t_perp));
    if !(info > 0.0 && info.is_finite()) {
        return Err(Error::IllConditioned(format!("Fisher information for γ is {info}")));
    }
    Ok(CrlbResult { variance: 1.0 / info, regularized: nz.regularized, sigma_v2_used: nz.sigma_v2 })
}

/// Weights w with γ̂ = −wᵀz the efficient (generalized least squares) slope.
///
/// wᵀ1 = 0 and wᵀt = 1, so the intercept drops out and the estimator is
/// unbiased; its variance wᵀΣw equals the exact bound.
pub fn gls_weights(cov: &CovarianceModel) -> Result<DVector<f64>> {
    check_size(cov, DEFAULT_MAX_SAMPLES)?;
    let nz = normalized(cov)?;
    let w = nz.chol.solve(&nz.t_perp);
    let norm = nz.t_perp.dot(&w);
    Ok(w / norm)
}

/// Slope bound for independent readings with per-sample variances σ_k²:
/// [Σ_k (t_k − t̄)²/σ_k²]⁻¹ with t̄ the 1/σ_k²-weighted mean time.
pub fn white_noise_bound(times: &[f64], variances: &[f64]) -> Result<f64> {
    if times.len() != variances.len() || times.len() < 2 {
        return Err(Error::Data("need at least two times with one variance each".into()));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("variances must be positive, got {v}")));
    }
    let w: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let tm = times.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let info: f64 = times.iter().zip(&w).map(|(t, w)| w * (t - tm).powi(2)).sum();
    if !(info > 0.0) {
        return Err(Error::Degenerate("all samples share one time".into()));
    }
    Ok(1.0 / info)
}

/// 12σ_v²/(r t_m³).
pub fn readout_limited_bound(model: &StateSpaceModel) -> f64 {
    12.0 * model.sigma_v().powi(2) / (model.rate() * model.duration().powi(3))
}

/// Q/t_m.
pub fn process_limited_bound(q: f64, t_m: f64) -> Result<f64> {
    if !(t_m > 0.0) {
        return Err(Error::Domain(format!("record duration must be positive, got {t_m}")));
    }
    Ok(q / t_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Readout,
    Process,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSensitivity {
    /// σ_P over the record (Pa).
    pub sigma_p: f64,
    /// σ_P·√t_m (Pa/√Hz).
    pub sigma_p_per_rthz: f64,
    /// Readout-limited σ_P (Pa).
    pub readout_floor: f64,
    /// Process-limited σ_P (Pa).
    pub process_floor: f64,
    /// max(readout, process) floor (Pa).
    pub limit_floor: f64,
    pub regime: Regime,
}

/// Maps a γ variance onto the pressure axis through γ = γ_P·P.
pub fn pressure_sensitivity(
    gamma_p: f64,
    gamma_variance: f64,
    model: &StateSpaceModel,
    q: f64,
) -> Result<PressureSensitivity> {
    if !(gamma_p > 0.0 && gamma_p.is_finite()) {
        return Err(Error::Domain(format!("damping per pressure must be positive, got {gamma_p}")));
    }
    if !(gamma_variance >= 0.0) {
        return Err(Error::Domain(format!("variance must be non-negative, got {gamma_variance}")));
    }
    let t_m = model.duration();
    let readout = readout_limited_bound(model);
    let process = process_limited_bound(q, t_m)?;
    let sigma_p = gamma_variance.sqrt() / gamma_p;
    let readout_floor = readout.sqrt() / gamma_p;
    let process_floor = process.sqrt() / gamma_p;
    Ok(PressureSensitivity {
        sigma_p,
        sigma_p_per_rthz: sigma_p * t_m.sqrt(),
        readout_floor,
        process_floor,
        limit_floor: readout_floor.max(process_floor),
        regime: if process > readout { Regime::Process } else { Regime::Readout },
    })
}

/// Process-limited σ_P/P = √(2k_BT/(Iω₀²γ_P P t_m)).
pub fn relative_pressure_uncertainty(
    temperature: f64,
    inertia: f64,
    omega0: f64,
    gamma_p: f64,
    pressure: f64,
    t_m: f64,
) -> Result<f64> {
    if !(gamma_p > 0.0 && pressure > 0.0 && t_m > 0.0) {
        return Err(Error::Domain("γ_P, pressure and duration must be positive".into()));
    }
    Ok((2.0 * K_B * temperature / (inertia * omega0 * omega0 * gamma_p * pressure * t_m)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(dt: f64, n: usize, sv: f64) -> StateSpaceModel {
        StateSpaceModel::new(dt, n, sv).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let c = build_covariance(&model(1.0, 3, 0.0), 1.0).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        assert_eq!(c.matrix, expected);
        let c = build_covariance(&model(0.1, 4, 0.3), 0.0).unwrap();
        assert_eq!(c.matrix, DMatrix::identity(4, 4) * 0.09);
        assert!(matches!(build_covariance(&model(1.0, 3, 0.0), 0.0), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn two_point_bound() {
        let (dt, sv) = (0.25, 1e-3);
        let b = exact_crlb_gamma(&build_covariance(&model(dt, 2, sv), 0.0).unwrap()).unwrap();
        let closed = 2.0 * sv * sv / (dt * dt);
        assert!(((b.variance - closed) / closed).abs() < 1e-12);
        assert!(!b.regularized);
    }

    #[test]
    fn readout_limit() {
        let m = model(0.01, 1000, 1e-4);
        let b = exact_crlb_gamma(&build_covariance(&m, 0.0).unwrap()).unwrap().variance;
        let lim = readout_limited_bound(&m);
        assert!((b / lim - 1.0).abs() < 0.01);
        let longer = model(0.01, 2000, 1e-4);
        assert!((readout_limited_bound(&longer) * 8.0 / lim - 1.0).abs() < 1e-12);
        assert_eq!(readout_limited_bound(&model(0.01, 10, 0.0)), 0.0);
    }

    #[test]
    fn process_limit() {
        let (dt, n, q): (f64, usize, f64) = (0.1, 1000, 1e-8);
        let sv = (1e-6 * q * dt).sqrt();
        let m = model(dt, n, sv);
        let b = exact_crlb_gamma(&build_covariance(&m, q).unwrap()).unwrap().variance;
        let lim = process_limited_bound(q, m.duration()).unwrap();
        assert!((b / lim - 1.0).abs() < 0.01, "{b} vs {lim}");
        assert_eq!(process_limited_bound(0.0, 3.0).unwrap(), 0.0);
        assert!(process_limited_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_readout_is_regularized() {
        let m = model(0.1, 50, 0.0);
        let b = exact_crlb_gamma(&build_covariance(&m, 1e-6).unwrap()).unwrap();
        assert!(b.regularized);
        let lim = 1e-6 / (49.0 * 0.1);
        assert!((b.variance / lim - 1.0).abs() < 1e-6);
    }

    #[test]
    fn white_noise_bound_matches_dense_form() {
        let m = model(0.2, 30, 2e-3);
        let dense = exact_crlb_gamma(&build_covariance(&m, 0.0).unwrap()).unwrap().variance;
        let wn = white_noise_bound(&m.times(), &vec![4e-6; 30]).unwrap();
        assert!((wn / dense - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cap_and_weights() {
        let m = model(0.1, 20, 1e-3);
        let cov = build_covariance(&m, 1e-5).unwrap();
        assert!(exact_crlb_gamma_capped(&cov, 10).is_err());
        let w = gls_weights(&cov).unwrap();
        let t = cov.times();
        assert!(w.sum().abs() < 1e-9 * w.amax() * 20.0);
        assert!((w.dot(&t) - 1.0).abs() < 1e-10);
        let var = (w.transpose() * &cov.matrix * &w)[0];
        let b = exact_crlb_gamma(&cov).unwrap().variance;
        assert!((var / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pressure_mapping() {
        let m = model(1.0, 100, 1e-6);
        let s = pressure_sensitivity(0.1, 4e-12, &m, 0.0).unwrap();
        assert!((s.sigma_p - 2e-5).abs() < 1e-18);
        assert!((s.sigma_p_per_rthz - 2e-4).abs() < 1e-16);
        assert_eq!(s.regime, Regime::Readout);
        let busy = pressure_sensitivity(0.1, 4e-12, &model(1.0, 100, 0.0), 1e-9).unwrap();
        assert_eq!(busy.regime, Regime::Process);
        // σ_P/P = σ_γ/γ because γ ∝ P.
        let (gp, p) = (0.1167, 1e-5);
        let gamma = gp * p;
        let sigma_gamma = 3e-9;
        let s = pressure_sensitivity(gp, sigma_gamma * sigma_gamma, &m, 0.0).unwrap();
        assert!((s.sigma_p / p - sigma_gamma / gamma).abs() < 1e-12 * s.sigma_p / p);
        let r1 = relative_pressure_uncertainty(4.0, 1.2e-19, 1.2e7, gp, p, 10.0).unwrap();
        let r4 = relative_pressure_uncertainty(4.0, 1.2e-19, 1.2e7, gp, 4.0 * p, 10.0).unwrap();
        assert!((r4 / r1 - 0.5).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bound_is_homogeneous(sv in 1e-5..1e-2f64, q in 1e-10..1e-4f64, c in 0.1..10.0f64, n in 2usize..60) {
            let dt = 0.5;
            let a = exact_crlb_gamma(&build_covariance(&model(dt, n, sv), q).unwrap()).unwrap().variance;
            let b = exact_crlb_gamma(&build_covariance(&model(dt, n, sv * c.sqrt()), q * c).unwrap()).unwrap().variance;
            prop_assert!((b / (c * a) - 1.0).abs() < 1e-8);
        }

        #[test]
        fn more_samples_never_hurt(sv in 1e-5..1e-2f64, q in 0.0..1e-4f64, n in 2usize..40) {
            let t_m = 10.0;
            let at = |k: usize| exact_crlb_gamma(&build_covariance(&model(t_m / k as f64, k, sv), q).unwrap()).unwrap().variance;
            prop_assert!(at(2 * n) <= at(n) * (1.0 + 1e-9));
            let dt = 0.1;
            let by_len = |k: usize| exact_crlb_gamma(&build_covariance(&model(dt, k, sv), q).unwrap()).unwrap().variance;
            prop_assert!(by_len(n + 1) <= by_len(n) * (1.0 + 1e-9));
        }

        #[test]
        fn limits_dominate_when_noise_dominates(n in 200usize..600, sv in 1e-5..1e-3f64) {
            let dt = 0.05;
            let m = model(dt, n, sv);
            let t_m = m.duration();
            let quiet_q = 1e-3 * readout_limited_bound(&m) * t_m;
            let exact = exact_crlb_gamma(&build_covariance(&m, quiet_q).unwrap()).unwrap().variance;
            prop_assert!((exact / readout_limited_bound(&m) - 1.0).abs() < 0.01);

            let q = 1e-6;
            let quiet_sv = (1e-3 * q / t_m * dt * t_m.powi(3) / 12.0).sqrt();
            let pm = model(dt, n, quiet_sv);
            let exact = exact_crlb_gamma(&build_covariance(&pm, q).unwrap()).unwrap().variance;
            prop_assert!((exact / process_limited_bound(q, t_m).unwrap() - 1.0).abs() < 0.01);
        }
    }
}
