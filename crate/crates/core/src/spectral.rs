//! Zero-padded periodograms and sub-bin peak interpolation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Unweighted segment; the periodogram maximum is then the single-tone ML estimate.
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    /// Interpolated frequency, in the units of the sample rate.
    pub frequency: f64,
    /// Sinusoid amplitude estimate (window-gain corrected).
    pub amplitude: f64,
    /// Fractional bin index on the padded grid.
    pub bin: f64,
}

/// One-sided magnitude spectrum of a real segment.
#[derive(Debug, Clone)]
pub struct Periodogram {
    pub magnitudes: Vec<f64>,
    /// Padded-grid spacing (sample-rate units).
    pub bin_width: f64,
    pub coherent_gain: f64,
}

impl Periodogram {
    pub fn frequency_of(&self, bin: f64) -> f64 {
        bin * self.bin_width
    }

    /// Index of the largest magnitude inside `lo..hi` (clamped to the spectrum).
    pub fn argmax_in(&self, lo: usize, hi: usize) -> Option<usize> {
        let hi = hi.min(self.magnitudes.len());
        (lo..hi).max_by(|&a, &b| self.magnitudes[a].total_cmp(&self.magnitudes[b]))
    }

    pub fn median_in(&self, lo: usize, hi: usize) -> f64 {
        let hi = hi.min(self.magnitudes.len());
        if lo >= hi {
            return 0.0;
        }
        let mut v: Vec<f64> = self.magnitudes[lo..hi].to_vec();
        let m = v.len();
        let (below, &mut upper, _) = v.select_nth_unstable_by(m / 2, f64::total_cmp);
        if m % 2 == 1 {
            upper
        } else {
            let lower = below.iter().copied().max_by(f64::total_cmp).unwrap();
            0.5 * (lower + upper)
        }
    }

    /// Three-point parabola through the log-magnitudes around `k`.
    pub fn interpolate(&self, k: usize) -> SpectralPeak {
        let mags = &self.magnitudes;
        let amp = |m: f64| 2.0 * m / self.coherent_gain;
        if k == 0 || k + 1 >= mags.len() || mags[k - 1] <= 0.0 || mags[k + 1] <= 0.0 || mags[k] <= 0.0 {
            return SpectralPeak { frequency: self.frequency_of(k as f64), amplitude: amp(mags[k]), bin: k as f64 };
        }
        let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let log_peak = b - 0.25 * (a - c) * delta;
        let bin = k as f64 + delta;
        SpectralPeak { frequency: self.frequency_of(bin), amplitude: amp(log_peak.exp()), bin }
    }
}

/// Reusable FFT plan and window for segments of a fixed length.
pub struct SpectrumAnalyzer {
    len: usize,
    padded: usize,
    window: Vec<f64>,
    coherent_gain: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(len: usize, window: Window, pad_factor: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::Data(format!("segment of {len} samples is too short for a spectrum")));
        }
        let padded = len * pad_factor.max(1);
        let coeffs = window.coefficients(len);
        let coherent_gain = coeffs.iter().sum();
        let fft = FftPlanner::new().plan_fft_forward(padded);
        Ok(Self { len, padded, window: coeffs, coherent_gain, fft })
    }

    pub fn segment_len(&self) -> usize {
        self.len
    }

    pub fn padded_len(&self) -> usize {
        self.padded
    }

    pub fn periodogram(&self, segment: &[f64], sample_rate: f64) -> Result<Periodogram> {
        if segment.len() != self.len {
            return Err(Error::Data(format!("expected {} samples, got {}", self.len, segment.len())));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded];
        for (b, (&x, &w)) in buf.iter_mut().zip(segment.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        let magnitudes = buf[..=self.padded / 2].iter().map(|z| z.norm()).collect();
        Ok(Periodogram {
            magnitudes,
            bin_width: sample_rate / self.padded as f64,
            coherent_gain: self.coherent_gain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pg(m: &[f64]) -> Periodogram {
        Periodogram { magnitudes: m.to_vec(), bin_width: 1.0, coherent_gain: 1.0 }
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(pg(&[9.0, 3.0, 1.0, 2.0]).median_in(0, 3), 3.0);
        assert_eq!(pg(&[9.0, 3.0, 1.0, 2.0]).median_in(0, 4), 2.5);
        assert_eq!(pg(&[1.0]).median_in(1, 1), 0.0);
    }

    #[test]
    fn padded_tone_amplitude_and_frequency() {
        let (n, fs) = (128, 1000.0);
        let f = 1000.0 * 20.0 / 128.0;
        let x: Vec<f64> = (0..n).map(|k| 0.7 * (2.0 * std::f64::consts::PI * f * k as f64 / fs).cos()).collect();
        for w in [Window::Rectangular, Window::Hann] {
            let a = SpectrumAnalyzer::new(n, w, 4).unwrap();
            assert_eq!(a.padded_len(), 512);
            let p = a.periodogram(&x, fs).unwrap();
            assert_eq!(p.magnitudes.len(), 257);
            let k = p.argmax_in(1, p.magnitudes.len()).unwrap();
            assert_eq!(k, 80);
            let peak = p.interpolate(k);
            // The negative-frequency image pulls the rectangular estimate by a few hundredths of a bin.
            let tol = if w == Window::Hann { 1e-3 } else { 0.05 };
            assert!(((peak.frequency - f) / p.bin_width).abs() < tol, "{w:?}");
            assert!((peak.amplitude - 0.7).abs() < 1e-3, "{w:?}: {}", peak.amplitude);
        }
    }

    #[test]
    fn hann_coefficients_are_symmetric() {
        // Periodic form: symmetric about n/2.
        let c = Window::Hann.coefficients(8);
        assert_eq!(c[0], 0.0);
        for i in 1..8 {
            assert!((c[i] - c[8 - i]).abs() < 1e-15);
        }
        assert!(Window::Rectangular.coefficients(5).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn wrong_length_rejected() {
        let a = SpectrumAnalyzer::new(16, Window::Hann, 2).unwrap();
        assert!(a.periodogram(&[0.0; 8], 1.0).is_err());
        assert!(SpectrumAnalyzer::new(1, Window::Hann, 2).is_err());
    }
}
