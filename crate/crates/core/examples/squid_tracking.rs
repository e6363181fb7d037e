//! Synthesize a decaying pickup signal, track its frequency window by
//! window, and fit the decay.
//!
//! ```bash
//! cargo run --release --example squid_tracking
//! ```

use rotor::estimation::*;
use rotor::spindown::*;

fn main() -> rotor::Result<()> {
    let spec = SquidSpec {
        f0: 500.0,
        gamma: 9.3e-3,
        amplitude: 1.0,
        phase0: 0.0,
        noise_sigma: 0.5,
        sample_rate: 2000.0,
        duration: 60.0,
        process_noise: 0.0,
    };
    let squid = synth_squid_signal(&spec, 1)?;
    let opts = TrackOptions { window_len: 256, hop: Some(256), peak: PeakOptions::default() };
    let track = track_spindown(&squid, &opts)?;
    println!("{} windows of {} samples, {} gaps", track.trace.len(), track.window_len, track.gaps.len());

    let sd = tone_frequency_crlb(spec.amplitude, spec.noise_sigma, track.window_len, spec.sample_rate).sqrt();
    println!("per-window frequency bound {sd:.3} Hz");

    let w: Vec<f64> = track.trace.freqs.iter().map(|f| f * f).collect();
    let fit = fit_exponential_decay(&track.trace, &FitOptions { min_freq: 0.0, weights: Some(w), ..Default::default() })?;
    println!("f0 = {:.3} Hz, gamma = {:.5e} +- {:.1e} 1/s", fit.f0, fit.gamma, fit.gamma_stderr);
    Ok(())
}
