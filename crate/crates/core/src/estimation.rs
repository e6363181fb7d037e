//! Measurement pipeline: spectral frequency tracking, log-domain decay fits,
//! the γ-versus-gauge-pressure regression, and pressure inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, GasSpec, GaugeSpec, MagnetSpec};
use crate::spectral::{SpectralPeak, SpectrumAnalyzer, Window};
use crate::spindown::{SpinDownTrace, SquidTrace};

pub const MIN_SEGMENT: usize = 16;
pub const DEFAULT_DETECTION_RATIO: f64 = 5.0;
pub const DEFAULT_PAD_FACTOR: usize = 8;
pub const DEFAULT_WINDOW_LEN: usize = 1 << 20;
/// Samples below this frequency are treated as libration, not spin (Hz).
pub const DEFAULT_MIN_FREQ: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub window: Window,
    pub pad_factor: usize,
    /// Required ratio of the peak magnitude to the median magnitude.
    pub detection_ratio: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { window: Window::Rectangular, pad_factor: DEFAULT_PAD_FACTOR, detection_ratio: DEFAULT_DETECTION_RATIO }
    }
}

fn peak_with(analyzer: &SpectrumAnalyzer, segment: &[f64], sample_rate: f64, ratio: f64) -> Result<SpectralPeak> {
    let spec = analyzer.periodogram(segment, sample_rate)?;
    let n = spec.magnitudes.len();
    let k = spec.argmax_in(1, n).ok_or(Error::NoDetection { ratio: 0.0, threshold: ratio })?;
    let peak = spec.magnitudes[k];
    let median = spec.median_in(1, n);
    let observed = if median > 0.0 { peak / median } else if peak > 0.0 { f64::INFINITY } else { 0.0 };
    if !(observed >= ratio) {
        return Err(Error::NoDetection { ratio: observed, threshold: ratio });
    }
    Ok(spec.interpolate(k))
}

/// Interpolated maximum of the zero-padded periodogram of `segment`.
pub fn periodogram_peak(segment: &[f64], sample_rate: f64, options: &PeakOptions) -> Result<SpectralPeak> {
    if segment.len() < MIN_SEGMENT {
        return Err(Error::Data(format!("segment has {} samples, need at least {MIN_SEGMENT}", segment.len())));
    }
    let analyzer = SpectrumAnalyzer::new(segment.len(), options.window, options.pad_factor)?;
    peak_with(&analyzer, segment, sample_rate, options.detection_ratio)
}

/// Cramér–Rao bound (Hz²) on the frequency of a real tone A sin(2πft + φ)
/// observed over `n` samples in white noise of deviation `noise_sigma`:
/// (f_s/2π)²·24σ²/(A²n(n² − 1)).
pub fn tone_frequency_crlb(amplitude: f64, noise_sigma: f64, n: usize, sample_rate: f64) -> f64 {
    let n = n as f64;
    let per_sample = 24.0 * noise_sigma * noise_sigma / (amplitude * amplitude * n * (n * n - 1.0));
    (sample_rate / (2.0 * std::f64::consts::PI)).powi(2) * per_sample
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    /// Samples per window; shortened to fit the record and by the drift guard.
    pub window_len: usize,
    /// Samples between window starts; defaults to the window length.
    pub hop: Option<usize>,
    pub peak: PeakOptions,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { window_len: DEFAULT_WINDOW_LEN, hop: None, peak: PeakOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub trace: SpinDownTrace,
    /// Window-center times where no peak cleared the detection threshold.
    pub gaps: Vec<f64>,
    /// Window length actually used.
    pub window_len: usize,
    pub hop: usize,
}

fn track_pass(squid: &SquidTrace, len: usize, hop: usize, peak: &PeakOptions) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let analyzer = SpectrumAnalyzer::new(len, peak.window, peak.pad_factor)?;
    let fs = squid.sample_rate;
    let (mut times, mut freqs, mut gaps) = (Vec::new(), Vec::new(), Vec::new());
    let mut start = 0;
    while start + len <= squid.values.len() {
        let center = (start as f64 + 0.5 * (len - 1) as f64) / fs;
        match peak_with(&analyzer, &squid.values[start..start + len], fs, peak.detection_ratio) {
            Ok(p) => {
                times.push(center);
                freqs.push(p.frequency);
            }
            Err(Error::NoDetection { .. }) => gaps.push(center),
            Err(e) => return Err(e),
        }
        start += hop;
    }
    Ok((times, freqs, gaps))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        0.0
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Frequency track from successive windowed periodogram maxima.
///
/// The window is halved until the frequency moves by less than one
/// interpolated bin across a window. Windows without a detectable line are
/// reported in `gaps`; a record without any detection is an error.
pub fn track_spindown(squid: &SquidTrace, options: &TrackOptions) -> Result<TrackResult> {
    let n = squid.values.len();
    if n < MIN_SEGMENT {
        return Err(Error::Data(format!("record has {n} samples, need at least {MIN_SEGMENT}")));
    }
    let fs = squid.sample_rate;
    let pad = options.peak.pad_factor.max(1) as f64;
    let mut len = options.window_len.clamp(MIN_SEGMENT, n);
    loop {
        let hop = options.hop.unwrap_or(len).clamp(1, len);
        let (times, freqs, gaps) = track_pass(squid, len, hop, &options.peak)?;
        if freqs.is_empty() {
            return Err(Error::NoDetection { ratio: 0.0, threshold: options.peak.detection_ratio });
        }
        let rates: Vec<f64> = freqs
            .windows(2)
            .zip(times.windows(2))
            .map(|(f, t)| ((f[1] - f[0]) / (t[1] - t[0])).abs())
            .collect();
        if rates.len() < 2 && len / 2 >= MIN_SEGMENT {
            // Too few windows to judge the drift.
            len /= 2;
            continue;
        }
        let window_time = len as f64 / fs;
        // Drift over one window, in units of the interpolated bin fs/(len·pad).
        let drift_bins = median(rates) * window_time * window_time * pad;
        if drift_bins < 1.0 || len / 2 < MIN_SEGMENT {
            let trace = SpinDownTrace::new(times, freqs)?;
            return Ok(TrackResult { trace, gaps, window_len: len, hop });
        }
        len /= 2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    /// Samples below this frequency are left out of the fit (Hz).
    pub min_freq: f64,
    /// Per-sample weights aligned with the trace; uniform when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_start: None, t_end: None, min_freq: DEFAULT_MIN_FREQ, weights: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted frequency at t = 0 (Hz).
    pub f0: f64,
    pub f0_stderr: f64,
    /// Decay rate (1/s).
    pub gamma: f64,
    pub gamma_stderr: f64,
    /// RMS of the ln f residuals.
    pub residual_rms: f64,
    pub n_used: usize,
    /// Samples inside the window dropped by the frequency floor.
    pub n_below_floor: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Weighted least squares of ln f_k against t_k; γ = −slope.
pub fn fit_exponential_decay(trace: &SpinDownTrace, options: &FitOptions) -> Result<DecayFit> {
    if let Some(w) = &options.weights {
        if w.len() != trace.len() {
            return Err(Error::Data(format!("{} weights for {} samples", w.len(), trace.len())));
        }
    }
    let lo = options.t_start.unwrap_or(f64::NEG_INFINITY);
    let hi = options.t_end.unwrap_or(f64::INFINITY);
    let mut rows = Vec::new();
    let mut below = 0;
    for (k, (&t, &f)) in trace.times.iter().zip(&trace.freqs).enumerate() {
        if t < lo || t > hi {
            continue;
        }
        if !(f > 0.0) {
            return Err(Error::Data(format!("non-positive frequency {f} at t = {t}")));
        }
        if f < options.min_freq {
            below += 1;
            continue;
        }
        let w = options.weights.as_ref().map_or(1.0, |w| w[k]);
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Data(format!("invalid weight {w} at t = {t}")));
        }
        rows.push((t, f.ln(), w));
    }
    if rows.len() < 3 {
        return Err(Error::Degenerate(format!("{} usable samples in the fit window, need at least 3", rows.len())));
    }
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    if !(sw > 0.0) {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    let tm = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let ym = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - tm).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - tm) * (r.1 - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("fit window holds a single distinct time".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = rows.iter().map(|r| r.2 * (r.1 - intercept - slope * r.0).powi(2)).sum();
    let dof = (rows.len() - 2) as f64;
    let s2 = rss / dof;
    // Weights are relative; the scale comes from the residuals.
    let slope_var = s2 / sxx;
    let intercept_var = s2 * (1.0 / sw + tm * tm / sxx);
    let f0 = intercept.exp();
    Ok(DecayFit {
        f0,
        f0_stderr: f0 * intercept_var.sqrt(),
        gamma: -slope,
        gamma_stderr: slope_var.sqrt(),
        residual_rms: (rss / sw).sqrt(),
        n_used: rows.len(),
        n_below_floor: below,
        t_start: rows[0].0,
        t_end: rows[rows.len() - 1].0,
    })
}

/// Generalized least squares of ln f_k under the random-walk-plus-readout
/// covariance; efficient when process noise matters.
///
/// The trace must be uniformly sampled. `q` is the diffusion of ln f (1/s)
/// and `sigma_v` the per-sample readout deviation on ln f. The reported
/// γ standard error is the exact bound for that noise model.
pub fn fit_decay_gls(trace: &SpinDownTrace, q: f64, sigma_v: f64) -> Result<DecayFit> {
    let n = trace.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} samples, need at least 3")));
    }
    let dt = (trace.times[n - 1] - trace.times[0]) / (n - 1) as f64;
    let uniform = trace
        .times
        .iter()
        .enumerate()
        .all(|(k, t)| (t - trace.times[0] - k as f64 * dt).abs() <= 1e-9 * dt * n as f64);
    if !uniform {
        return Err(Error::Data("generalized least squares needs uniformly spaced samples".into()));
    }
    let model = crate::spindown::StateSpaceModel::new(dt, n, sigma_v)?;
    let cov = crate::crlb::build_covariance(&model, q)?;
    let weights = crate::crlb::gls_weights(&cov)?;
    let bound = crate::crlb::exact_crlb_gamma(&cov)?.variance;
    let z = trace.log_freqs();
    let slope: f64 = weights.iter().zip(&z).map(|(w, z)| w * z).sum();
    // Intercept through the sample means.
    let mean_t = trace.times.iter().sum::<f64>() / n as f64;
    let mean_z = z.iter().sum::<f64>() / n as f64;
    let intercept = mean_z - slope * mean_t;
    let rss: f64 = trace.times.iter().zip(&z).map(|(t, z)| (z - intercept - slope * t).powi(2)).sum();
    Ok(DecayFit {
        f0: intercept.exp(),
        f0_stderr: f64::NAN,
        gamma: -slope,
        gamma_stderr: bound.sqrt(),
        residual_rms: (rss / n as f64).sqrt(),
        n_used: n,
        n_below_floor: 0,
        t_start: trace.times[0],
        t_end: trace.times[n - 1],
    })
}

/// Straight line γ = A·P_g + B, in SI (A in 1/(s·Pa), B in 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureFit {
    pub slope: f64,
    pub intercept: f64,
    /// −B/A (Pa).
    pub residual_pressure: f64,
    /// None when there are no residual degrees of freedom.
    pub slope_stderr: Option<f64>,
    pub intercept_stderr: Option<f64>,
}

impl PressureFit {
    /// A in (s·mbar)⁻¹.
    pub fn slope_per_mbar(&self) -> f64 {
        self.slope * model::PA_PER_MBAR
    }

    /// γ/P referred to the cold pressure: A times the gauge factor.
    pub fn damping_per_pressure(&self, gauge_factor: f64) -> f64 {
        self.slope * gauge_factor
    }
}

/// Ordinary least squares over (P_g in Pa, γ in 1/s) points.
pub fn fit_gamma_vs_pressure(points: &[(f64, f64)]) -> Result<PressureFit> {
    if let Some(p) = points.iter().find(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::Data(format!("non-finite point {p:?}")));
    }
    let n = points.len();
    let n_f = n as f64;
    let pm = points.iter().map(|p| p.0).sum::<f64>() / n_f;
    let gm = points.iter().map(|p| p.1).sum::<f64>() / n_f;
    let sxx: f64 = points.iter().map(|p| (p.0 - pm).powi(2)).sum();
    if n < 2 || !(sxx > 0.0) {
        return Err(Error::Degenerate("need at least two distinct pressures".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - pm) * (p.1 - gm)).sum();
    let slope = sxy / sxx;
    let intercept = gm - slope * pm;
    if slope == 0.0 {
        return Err(Error::Degenerate("zero slope leaves the residual pressure undefined".into()));
    }
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let s2 = rss / (n_f - 2.0);
        (Some((s2 / sxx).sqrt()), Some((s2 * (1.0 / n_f + pm * pm / sxx)).sqrt()))
    } else {
        (None, None)
    };
    Ok(PressureFit { slope, intercept, residual_pressure: -intercept / slope, slope_stderr, intercept_stderr })
}

/// Where γ/P comes from when turning a decay rate into a pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingCalibration {
    /// Free-molecular drag of the given magnet in the given gas.
    Theoretical,
    /// A measured γ/P in 1/(s·Pa), e.g. from a pressure sweep.
    Measured(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    /// Pa.
    pub pressure: f64,
    pub pressure_stderr: f64,
    /// Equivalent room-temperature gauge reading (Pa).
    pub gauge_pressure: f64,
    pub gauge_stderr: f64,
    pub gauge_linear: bool,
    /// γ/P used (1/(s·Pa)).
    pub damping_per_pressure: f64,
}

/// Cold pressure and gauge-equivalent reading implied by a decay fit.
pub fn infer_pressure(
    fit: &DecayFit,
    magnet: &MagnetSpec,
    gas: &GasSpec,
    gauge: &GaugeSpec,
    calibration: DampingCalibration,
) -> Result<PressureEstimate> {
    let gamma_p = match calibration {
        DampingCalibration::Theoretical => model::damping_per_pressure(magnet, gas)?,
        DampingCalibration::Measured(g) if g.is_finite() && g > 0.0 => g,
        DampingCalibration::Measured(g) => {
            return Err(Error::Domain(format!("damping per pressure must be positive, got {g}")))
        }
    };
    if !(fit.gamma >= 0.0) {
        return Err(Error::Domain(format!("decay rate must be non-negative, got {}", fit.gamma)));
    }
    let pressure = fit.gamma / gamma_p;
    let pressure_stderr = fit.gamma_stderr / gamma_p;
    let reading = model::gauge_pressure(gauge, gas, pressure);
    let factor = gauge.factor(gas);
    Ok(PressureEstimate {
        pressure,
        pressure_stderr,
        gauge_pressure: reading.pressure,
        gauge_stderr: factor * pressure_stderr,
        gauge_linear: reading.linear_regime,
        damping_per_pressure: gamma_p,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::model::mbar_to_pa;
    use crate::spindown::{mean_decay, synth_squid_signal, SquidSpec};
    use proptest::prelude::*;

    fn tone(n: usize, fs: f64, f: f64) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect()
    }

    #[test]
    fn bin_centre_and_mid_bin_tones() {
        // The image line of a real tone leaks into the main lobe; a Hann window
        // keeps that below the interpolation error away from DC and Nyquist.
        let (n, fs) = (256, 1000.0);
        let opts = PeakOptions { window: Window::Hann, ..Default::default() };
        let bin = fs / (n * opts.pad_factor) as f64;
        for k in [40.0, 64.0, 100.0] {
            let centred = k * fs / n as f64;
            let p = periodogram_peak(&tone(n, fs, centred), fs, &opts).unwrap();
            assert!((p.frequency - centred).abs() < 1e-4 * bin, "{} vs {centred}", p.frequency);
            let mid = centred + 0.5 * bin;
            let p = periodogram_peak(&tone(n, fs, mid), fs, &opts).unwrap();
            assert!((p.frequency - mid).abs() < 1e-3 * bin, "{} vs {mid}", p.frequency);
        }
    }

    #[test]
    fn rectangular_window_stays_within_a_bin() {
        let (n, fs) = (256, 1000.0);
        let opts = PeakOptions::default();
        let bin = fs / (n * opts.pad_factor) as f64;
        for k in [10.0, 40.3, 100.7] {
            let f = k * fs / n as f64;
            let p = periodogram_peak(&tone(n, fs, f), fs, &opts).unwrap();
            assert!((p.frequency - f).abs() < 0.2 * bin);
        }
    }

    #[test]
    fn short_or_silent_segments() {
        let opts = PeakOptions::default();
        assert!(matches!(periodogram_peak(&[0.0; 8], 1.0, &opts), Err(Error::Data(_))));
        assert!(matches!(periodogram_peak(&[0.0; 64], 1.0, &opts), Err(Error::NoDetection { .. })));
    }

    fn decay_trace(gamma: f64, f0: f64, n: usize, dt: f64) -> SpinDownTrace {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let freqs = times.iter().map(|&t| mean_decay(f0, gamma, t)).collect();
        SpinDownTrace::new(times, freqs).unwrap()
    }

    #[test]
    fn noiseless_and_flat_fits() {
        let fit = fit_exponential_decay(&decay_trace(9.3e-3, 570e3, 200, 0.5), &FitOptions::default()).unwrap();
        assert!(((fit.gamma - 9.3e-3) / 9.3e-3).abs() < 1e-8);
        assert!(((fit.f0 - 570e3) / 570e3).abs() < 1e-10);
        let flat = fit_exponential_decay(&decay_trace(0.0, 1e3, 50, 1.0), &FitOptions::default()).unwrap();
        assert_eq!(flat.gamma, 0.0);
    }

    #[test]
    fn fit_window_and_floor() {
        let trace = decay_trace(0.1, 1000.0, 100, 0.5);
        let opts = FitOptions { t_start: Some(5.0), t_end: Some(20.0), ..Default::default() };
        let fit = fit_exponential_decay(&trace, &FitOptions { min_freq: 0.0, ..opts }).unwrap();
        assert_eq!((fit.t_start, fit.t_end), (5.0, 20.0));
        assert!((fit.gamma - 0.1).abs() < 1e-10);
        // f < 200 Hz from t ≈ 16.1 s onwards.
        let fit = fit_exponential_decay(&trace, &FitOptions::default()).unwrap();
        assert!(fit.t_end < 16.2 && fit.n_below_floor > 0);
        let tiny = FitOptions { t_start: Some(0.0), t_end: Some(0.6), ..Default::default() };
        assert!(matches!(fit_exponential_decay(&trace, &tiny), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pressure_line_examples() {
        let a = 8.2 / 100.0;
        let b = -1.5e-4;
        let pts: Vec<(f64, f64)> = [2e-5, 5e-5, 1e-4, 4e-4, 1e-3]
            .iter()
            .map(|&pg_mbar| (mbar_to_pa(pg_mbar), a * mbar_to_pa(pg_mbar) + b))
            .collect();
        let fit = fit_gamma_vs_pressure(&pts).unwrap();
        assert!(((fit.slope_per_mbar() - 8.2) / 8.2).abs() < 1e-8);
        assert!(((fit.intercept - b) / b).abs() < 1e-8);
        let pres_mbar = fit.residual_pressure / 100.0;
        assert!((pres_mbar - 1.8e-5).abs() < 0.05e-5);
        assert!((fit.residual_pressure + fit.intercept / fit.slope).abs() <= 1e-12 * fit.residual_pressure.abs());
        let per_mbar = fit.damping_per_pressure(1.42) * 100.0;
        assert!((per_mbar - 11.6).abs() < 0.05, "{per_mbar}");
        let zero_b: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, a * p.0)).collect();
        assert!(fit_gamma_vs_pressure(&zero_b).unwrap().residual_pressure.abs() < 1e-15);
        assert!(fit_gamma_vs_pressure(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    fn fit_with(gamma: f64) -> DecayFit {
        DecayFit {
            f0: 1.0,
            f0_stderr: 0.0,
            gamma,
            gamma_stderr: 0.0,
            residual_rms: 0.0,
            n_used: 3,
            n_below_floor: 0,
            t_start: 0.0,
            t_end: 1.0,
        }
    }

    #[test]
    fn inference_examples() {
        let magnet = MagnetSpec::new(24e-6, 7430.0).unwrap();
        let gas = GasSpec::helium(4.2).unwrap();
        let gauge = GaugeSpec::default();
        let theory = infer_pressure(&fit_with(4.75e-7), &magnet, &gas, &gauge, DampingCalibration::Theoretical).unwrap();
        assert!((theory.pressure / 100.0 - 4e-8).abs() < 0.05e-8, "{}", theory.pressure);
        let measured = DampingCalibration::Measured(11.6 / 100.0);
        let busy = infer_pressure(&fit_with(9.15e-3), &magnet, &gas, &gauge, measured).unwrap();
        assert!((busy.pressure / 100.0 - 7.9e-4).abs() < 0.05e-4);
        assert!((busy.gauge_pressure / 100.0 - 1.12e-3).abs() < 0.005e-3);
        assert!(!busy.gauge_linear);
        let zero = infer_pressure(&fit_with(0.0), &magnet, &gas, &gauge, measured).unwrap();
        assert_eq!(zero.pressure, 0.0);
    }

    #[test]
    fn tracker_round_trip_and_silence() {
        let spec = SquidSpec {
            f0: 500.0,
            gamma: 9.3e-3,
            amplitude: 1.0,
            phase0: 0.0,
            noise_sigma: 0.0,
            sample_rate: 2000.0,
            duration: 20.0,
            process_noise: 0.0,
        };
        let squid = synth_squid_signal(&spec, 0).unwrap();
        let opts = TrackOptions { window_len: 256, ..Default::default() };
        let res = track_spindown(&squid, &opts).unwrap();
        let bin = spec.sample_rate / (res.window_len * DEFAULT_PAD_FACTOR) as f64;
        for (t, f) in res.trace.times.iter().zip(&res.trace.freqs) {
            assert!((f - mean_decay(500.0, 9.3e-3, *t)).abs() < bin);
        }
        let silent = synth_squid_signal(&SquidSpec { amplitude: 0.0, ..spec }, 0).unwrap();
        assert!(matches!(track_spindown(&silent, &opts), Err(Error::NoDetection { .. })));
    }

    #[test]
    fn drift_guard_shortens_window() {
        let spec = SquidSpec {
            f0: 500.0,
            gamma: 9.3e-3,
            amplitude: 1.0,
            phase0: 0.0,
            noise_sigma: 0.0,
            sample_rate: 2000.0,
            duration: 30.0,
            process_noise: 0.0,
        };
        let squid = synth_squid_signal(&spec, 0).unwrap();
        let res = track_spindown(&squid, &TrackOptions::default()).unwrap();
        let wt = res.window_len as f64 / spec.sample_rate;
        assert!(500.0 * 9.3e-3 * wt * wt * (DEFAULT_PAD_FACTOR as f64) < 1.0, "window {}", res.window_len);
    }

    proptest! {
        #[test]
        fn exact_recovery_over_decades(log_g in -7.0..-1.0f64, f0 in 300.0..1e6f64) {
            let gamma = 10f64.powf(log_g);
            // Keep the record inside the spin regime and the log change resolvable.
            let span = (1.0 / gamma).min(1e4);
            let trace = decay_trace(gamma, f0.max(1e3), 101, span / 100.0);
            let fit = fit_exponential_decay(&trace, &FitOptions::default()).unwrap();
            prop_assert!(((fit.gamma - gamma) / gamma).abs() < 1e-8);
        }

        #[test]
        fn scale_changes_only_intercept(gamma in 1e-4..1e-1f64, c in 0.1..10.0f64) {
            let trace = decay_trace(gamma, 5e3, 60, 1.0);
            let scaled = SpinDownTrace::new(trace.times.clone(), trace.freqs.iter().map(|f| f * c).collect()).unwrap();
            let opts = FitOptions { min_freq: 0.0, ..Default::default() };
            let a = fit_exponential_decay(&trace, &opts).unwrap();
            let b = fit_exponential_decay(&scaled, &opts).unwrap();
            prop_assert!((a.gamma - b.gamma).abs() < 1e-12 * gamma.max(1e-3));
            prop_assert!(((b.f0 / a.f0) / c - 1.0).abs() < 1e-10);
        }

        #[test]
        fn shifting_gamma_shifts_intercept(shift in -1e-2..1e-2f64) {
            let pts: Vec<(f64, f64)> = (1..8).map(|k| (k as f64 * 1e-3, 0.08 * k as f64 * 1e-3 + 1e-4 * (k % 3) as f64)).collect();
            let moved: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1 + shift)).collect();
            let a = fit_gamma_vs_pressure(&pts).unwrap();
            let b = fit_gamma_vs_pressure(&moved).unwrap();
            prop_assert!((b.intercept - a.intercept - shift).abs() < 1e-14);
            prop_assert!((b.slope - a.slope).abs() < 1e-10 * a.slope.abs());
        }
    }
}
