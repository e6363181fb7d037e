use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::spectral::{SpectrumAnalyzer, Window};

const PAD: usize = 8;
const DETECTION_RATIO: f64 = 5.0;
/// Minimum number of slow periods that must fit in the record.
pub const MIN_SLOW_PERIODS: f64 = 5.0;

/// Fast (spin) and slow (precession) lines of a trajectory, in cycles per
/// unit of dimensionless time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpectrum {
    pub fast_freq: f64,
    pub fast_amplitude: f64,
    pub slow_freq: Option<f64>,
    pub slow_amplitude: Option<f64>,
}

impl ModeSpectrum {
    pub fn fast_period(&self) -> f64 {
        1.0 / self.fast_freq
    }

    pub fn slow_period(&self) -> Option<f64> {
        self.slow_freq.map(|f| 1.0 / f)
    }
}

fn centered(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - mean).collect()
}

/// Locates the spin line in e_x(t) and the precession line in Ω_x(t), Ω_y(t).
///
/// Spectra use a Hann window, ×8 zero padding, and log-parabolic peak
/// interpolation. The slow line is searched below half the spin frequency
/// and must stand out of the median background by a factor of 5.
pub fn mode_spectrum(traj: &Trajectory) -> Result<ModeSpectrum> {
    let n = traj.states.len();
    if n < 16 {
        return Err(Error::Resolution(format!("trajectory has {n} samples, need at least 16")));
    }
    let rate = 1.0 / traj.dt();
    let duration = n as f64 * traj.dt();
    let analyzer = SpectrumAnalyzer::new(n, Window::Hann, PAD)?;
    let lo = 2 * PAD;

    let ex = centered(traj.states.iter().map(|s| s.e.x));
    let spin = analyzer.periodogram(&ex, rate)?;
    let k_fast = spin
        .argmax_in(lo, spin.magnitudes.len() - 1)
        .ok_or_else(|| Error::Resolution("spectrum too short".into()))?;
    if spin.magnitudes[k_fast] <= 0.0 {
        return Err(Error::NoDetection { ratio: 0.0, threshold: DETECTION_RATIO });
    }
    let fast = spin.interpolate(k_fast);

    let wx = analyzer.periodogram(&centered(traj.states.iter().map(|s| s.omega.x)), rate)?;
    let wy = analyzer.periodogram(&centered(traj.states.iter().map(|s| s.omega.y)), rate)?;
    let mut slow_spec = wx.clone();
    for (m, y) in slow_spec.magnitudes.iter_mut().zip(&wy.magnitudes) {
        *m = m.hypot(*y);
    }
    let hi = ((0.5 * fast.frequency) / slow_spec.bin_width).floor() as usize;
    let scale = traj.initial.omega.norm().max(1.0);

    let mut out = ModeSpectrum { fast_freq: fast.frequency, fast_amplitude: fast.amplitude, slow_freq: None, slow_amplitude: None };
    if hi <= lo + 2 {
        return Err(Error::Resolution(format!(
            "record of duration {duration} cannot separate a slow line below {}",
            0.5 * fast.frequency
        )));
    }
    let Some(k_slow) = slow_spec.argmax_in(lo, hi) else {
        return Ok(out);
    };
    let peak = slow_spec.magnitudes[k_slow];
    let median = slow_spec.median_in(lo, hi);
    let slow = slow_spec.interpolate(k_slow);
    let detected = peak > 0.0 && slow.amplitude > 1e-12 * scale && (median == 0.0 || peak / median >= DETECTION_RATIO);
    if !detected {
        return Ok(out);
    }
    if slow.frequency * duration < MIN_SLOW_PERIODS {
        return Err(Error::Resolution(format!(
            "slow line near {:.4e} needs a record of at least {:.4e} time units, got {duration:.4e}",
            slow.frequency,
            MIN_SLOW_PERIODS / slow.frequency
        )));
    }
    out.slow_freq = Some(slow.frequency);
    out.slow_amplitude = Some(slow.amplitude);
    Ok(out)
}

fn demodulate(values: impl Iterator<Item = (f64, f64)>, freq: f64, window: &[f64]) -> Complex64 {
    values
        .zip(window)
        .map(|((t, x), w)| Complex64::from_polar(x * w, -2.0 * PI * freq * t))
        .sum()
}

/// Phase of the slow line in Ω_y relative to Ω_x, wrapped to (−π, π].
///
/// A precessing spin plane shows up as a quarter-cycle shift (±π/2).
pub fn slow_mode_phase_shift(traj: &Trajectory, slow_freq: f64) -> f64 {
    let window = Window::Hann.coefficients(traj.states.len());
    let ox = centered(traj.states.iter().map(|s| s.omega.x));
    let oy = centered(traj.states.iter().map(|s| s.omega.y));
    let t = traj.states.iter().map(|s| s.t);
    let zx = demodulate(t.clone().zip(ox), slow_freq, &window);
    let zy = demodulate(t.zip(oy), slow_freq, &window);
    let d = zy.arg() - zx.arg();
    let wrapped = (d + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

/// Nutation period read off the dominant line of e_z(t).
pub fn nutation_spectral_period(traj: &Trajectory) -> Result<f64> {
    let n = traj.states.len();
    if n < 16 {
        return Err(Error::Resolution(format!("trajectory has {n} samples, need at least 16")));
    }
    let analyzer = SpectrumAnalyzer::new(n, Window::Hann, PAD)?;
    let ez = centered(traj.states.iter().map(|s| s.e.z));
    let spec = analyzer.periodogram(&ez, 1.0 / traj.dt())?;
    let k = spec
        .argmax_in(2 * PAD, spec.magnitudes.len() - 1)
        .ok_or_else(|| Error::Resolution("spectrum too short".into()))?;
    let median = spec.median_in(2 * PAD, spec.magnitudes.len());
    let peak = spec.magnitudes[k];
    if !(peak > 0.0) || (median > 0.0 && peak / median < DETECTION_RATIO) {
        let ratio = if median > 0.0 { peak / median } else { 0.0 };
        return Err(Error::NoDetection { ratio, threshold: DETECTION_RATIO });
    }
    Ok(1.0 / spec.interpolate(k).frequency)
}
