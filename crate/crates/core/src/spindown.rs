//! Spin-down of the free rotor: mean exponential decay, thermal torque noise
//! in the log-frequency state-space form, and a synthetic SQUID readout.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::K_B;

/// Fractional frequency excursion beyond which ln f is no longer a faithful
/// linearization about the nominal spin.
pub const LINEARIZATION_LIMIT: f64 = 0.1;

/// Ω₀ e^(−γt).
pub fn mean_decay(omega0: f64, gamma: f64, t: f64) -> f64 {
    omega0 * (-gamma * t).exp()
}

/// θ₀ + Ω₀τ(1 − e^(−t/τ)); τ = ∞ gives uniform rotation.
pub fn phase_trajectory(theta0: f64, omega0: f64, tau: f64, t: f64) -> f64 {
    if tau.is_infinite() {
        return theta0 + omega0 * t;
    }
    theta0 - omega0 * tau * (-t / tau).exp_m1()
}

/// Deterministic seeded generator used by every simulation in the crate.
///
/// `stream` separates independent trials drawn from one seed, so ensembles
/// give the same numbers however they are scheduled.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Thermal torque noise acting on a rotor in a gas bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    inertia: f64,
    gamma: f64,
    temperature: f64,
    omega0: f64,
}

impl OUParams {
    pub fn new(inertia: f64, gamma: f64, temperature: f64, omega0: f64) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("moment of inertia", inertia)?;
        positive("temperature", temperature)?;
        positive("nominal spin", omega0)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Domain(format!("damping rate must be non-negative, got {gamma}")));
        }
        Ok(Self { inertia, gamma, temperature, omega0 })
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Nominal spin (rad/s).
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Q = 2γk_BT/(Iω₀²), the diffusion of ln ω (1/s).
    pub fn process_noise_intensity(&self) -> f64 {
        2.0 * self.gamma * K_B * self.temperature / (self.inertia * self.omega0 * self.omega0)
    }

    /// One-sided torque PSD S_N = 4k_BT·I·γ (N²m²/Hz).
    pub fn torque_psd(&self) -> f64 {
        4.0 * K_B * self.temperature * self.inertia * self.gamma
    }

    /// Amplitude √(2Iγk_BT) of the white torque in I dω/dt = −Iγω + N(t).
    pub fn langevin_diffusion(&self) -> f64 {
        (2.0 * self.inertia * self.gamma * K_B * self.temperature).sqrt()
    }
}

/// Uniform sampling of the log-frequency observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    dt: f64,
    n_samples: usize,
    sigma_v: f64,
}

impl StateSpaceModel {
    pub fn new(dt: f64, n_samples: usize, sigma_v: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("sample step must be positive, got {dt}")));
        }
        if n_samples < 2 {
            return Err(Error::Domain(format!("need at least 2 samples, got {n_samples}")));
        }
        if !(sigma_v.is_finite() && sigma_v >= 0.0) {
            return Err(Error::Domain(format!("measurement deviation must be non-negative, got {sigma_v}")));
        }
        Ok(Self { dt, n_samples, sigma_v })
    }

    /// Takes the measurement deviation from an Allan deviation σ_y(Δ) at gate Δ.
    ///
    /// A fractional frequency error δf/f is an additive error on ln f, so
    /// σ_v = σ_y(Δ).
    pub fn from_allan_deviation(dt: f64, n_samples: usize, sigma_y: f64) -> Result<Self> {
        Self::new(dt, n_samples, sigma_y)
    }

    /// Δ (s).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sigma_v(&self) -> f64 {
        self.sigma_v
    }

    /// r = 1/Δ (Hz).
    pub fn rate(&self) -> f64 {
        1.0 / self.dt
    }

    /// t_m = N_sΔ (s).
    pub fn duration(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|k| k as f64 * self.dt).collect()
    }
}

/// Provenance written next to a spin-down trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub gamma: f64,
    pub omega0: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub sigma_v: f64,
    pub dt: f64,
    pub n_samples: usize,
}

/// Sampled spin frequency f_k at times t_k.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinDownTrace {
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    pub meta: Option<TraceMeta>,
    /// Validity notes raised while producing the trace.
    pub warnings: Vec<String>,
}

impl SpinDownTrace {
    /// Checks the trace invariants: equal lengths, strictly increasing t, f > 0.
    pub fn new(times: Vec<f64>, freqs: Vec<f64>) -> Result<Self> {
        if times.len() != freqs.len() {
            return Err(Error::Data(format!("{} times but {} frequencies", times.len(), freqs.len())));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!("times must increase strictly (row {})", k + 1)));
        }
        if let Some(k) = freqs.iter().position(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Data(format!("frequency at row {k} is not positive: {}", freqs[k])));
        }
        Ok(Self { times, freqs, meta: None, warnings: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn log_freqs(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| f.ln()).collect()
    }
}

/// One realization of z_k = x_k + v_k with x_{k+1} = x_k − γΔ + w_k.
///
/// w_k ~ N(0, QΔ) and v_k ~ N(0, σ_v²). The update is the exact
/// discretization of the linearized log-frequency dynamics.
pub fn sample_log_path<R: Rng + ?Sized>(x0: f64, gamma: f64, q: f64, model: &StateSpaceModel, rng: &mut R) -> Vec<f64> {
    let drift = gamma * model.dt;
    let step_sd = (q * model.dt).sqrt();
    let mut x = x0;
    let mut z = Vec::with_capacity(model.n_samples);
    for k in 0..model.n_samples {
        if k > 0 {
            let w: f64 = rng.sample(StandardNormal);
            x += -drift + step_sd * w;
        }
        let v: f64 = rng.sample(StandardNormal);
        z.push(x + model.sigma_v * v);
    }
    z
}

/// Simulates tracked frequencies f_k = e^(z_k) (Hz) starting from ω₀/2π.
pub fn simulate_ou_spindown(params: &OUParams, model: &StateSpaceModel, seed: u64) -> Result<SpinDownTrace> {
    simulate_log_spindown(params.omega0, params.gamma, params.process_noise_intensity(), model, seed)
}

/// As [`simulate_ou_spindown`] with the diffusion Q given directly.
pub fn simulate_log_spindown(
    omega0: f64,
    gamma: f64,
    q: f64,
    model: &StateSpaceModel,
    seed: u64,
) -> Result<SpinDownTrace> {
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(Error::Domain(format!("initial angular frequency must be positive, got {omega0}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Domain(format!("decay rate must be non-negative, got {gamma}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain(format!("process noise must be non-negative, got {q}")));
    }
    let mut rng = rng_for(seed, 0);
    let x0 = (omega0 / (2.0 * PI)).ln();
    let z = sample_log_path(x0, gamma, q, model, &mut rng);
    let mut warnings = Vec::new();
    let excursion = (q * model.duration()).sqrt().max(model.sigma_v);
    if excursion > LINEARIZATION_LIMIT {
        warnings.push(format!(
            "expected fractional frequency excursion {excursion:.3} exceeds {LINEARIZATION_LIMIT}; the log-linear model may not hold"
        ));
    }
    Ok(SpinDownTrace {
        times: model.times(),
        freqs: z.into_iter().map(f64::exp).collect(),
        meta: Some(TraceMeta {
            seed: Some(seed),
            gamma,
            omega0,
            q,
            sigma_v: model.sigma_v,
            dt: model.dt,
            n_samples: model.n_samples,
        }),
        warnings,
    })
}

/// Parameters of a synthetic pickup signal y(t) = A sin θ(t) + n(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquidSpec {
    /// Initial spin frequency (Hz).
    pub f0: f64,
    /// Decay rate (1/s).
    pub gamma: f64,
    pub amplitude: f64,
    /// θ₀ (rad).
    pub phase0: f64,
    /// Standard deviation of the additive white noise.
    pub noise_sigma: f64,
    /// Hz.
    pub sample_rate: f64,
    /// s.
    pub duration: f64,
    /// Diffusion Q of ln f (1/s); zero gives the deterministic decay.
    #[serde(default)]
    pub process_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquidTrace {
    pub sample_rate: f64,
    pub values: Vec<f64>,
    pub spec: SquidSpec,
    pub seed: u64,
}

impl SquidTrace {
    pub fn from_samples(sample_rate: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Data(format!("sample rate must be positive, got {sample_rate}")));
        }
        let spec = SquidSpec {
            f0: f64::NAN,
            gamma: f64::NAN,
            amplitude: f64::NAN,
            phase0: f64::NAN,
            noise_sigma: f64::NAN,
            process_noise: f64::NAN,
            sample_rate,
            duration: values.len() as f64 / sample_rate,
        };
        Ok(Self { sample_rate, values, spec, seed: 0 })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.sample_rate
    }
}

/// Samples y(t_k) at t_k = k/f_s for 0 ≤ t_k < duration.
///
/// Without process noise the phase is the closed-form integral of the mean
/// decay. With it, ln f follows the random walk of the state-space model at
/// the sample rate and the phase accumulates sample by sample.
pub fn synth_squid_signal(spec: &SquidSpec, seed: u64) -> Result<SquidTrace> {
    if !(spec.f0.is_finite() && spec.f0 >= 0.0) {
        return Err(Error::Domain(format!("initial frequency must be non-negative, got {}", spec.f0)));
    }
    if !(spec.gamma.is_finite() && spec.gamma >= 0.0) {
        return Err(Error::Domain(format!("decay rate must be non-negative, got {}", spec.gamma)));
    }
    if !(spec.duration.is_finite() && spec.duration >= 0.0) {
        return Err(Error::Domain(format!("duration must be non-negative, got {}", spec.duration)));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(Error::Domain(format!("noise level must be non-negative, got {}", spec.noise_sigma)));
    }
    if !(spec.process_noise.is_finite() && spec.process_noise >= 0.0) {
        return Err(Error::Domain(format!("process noise must be non-negative, got {}", spec.process_noise)));
    }
    // A falling frequency makes the start of the record the worst case.
    let required = 2.0 * spec.f0;
    if !(spec.sample_rate > required) {
        return Err(Error::Aliasing { sample_rate: spec.sample_rate, required });
    }
    let fs = spec.sample_rate;
    let n = (0..).take_while(|&k| (k as f64) / fs < spec.duration).count();
    let omega0 = 2.0 * PI * spec.f0;
    let tau = if spec.gamma > 0.0 { 1.0 / spec.gamma } else { f64::INFINITY };
    let mut readout = rng_for(seed, 0);
    let mut process = rng_for(seed, 1);
    let walk_sd = (spec.process_noise / fs).sqrt();
    let mut log_f = spec.f0.ln();
    let mut theta = spec.phase0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / fs;
        let phase = if spec.process_noise > 0.0 {
            if k > 0 {
                // Phase advance over the previous interval at the frequency it started with.
                theta += 2.0 * PI * log_f.exp() / fs;
                let w: f64 = process.sample(StandardNormal);
                log_f += -spec.gamma / fs + walk_sd * w;
                if log_f.exp() * 2.0 >= fs {
                    return Err(Error::Aliasing { sample_rate: fs, required: 2.0 * log_f.exp() });
                }
            }
            theta
        } else {
            phase_trajectory(spec.phase0, omega0, tau, t)
        };
        let noise: f64 = if spec.noise_sigma > 0.0 { readout.sample(StandardNormal) } else { 0.0 };
        values.push(spec.amplitude * phase.sin() + spec.noise_sigma * noise);
    }
    Ok(SquidTrace { sample_rate: fs, values, spec: *spec, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MagnetSpec;
    use proptest::prelude::*;

    #[test]
    fn decay_examples() {
        let g = 9.3e-3;
        let half = 2f64.ln() / g;
        assert!((half - 74.5).abs() < 0.1);
        assert!((mean_decay(10.0, g, half) - 5.0).abs() < 1e-12);
        assert_eq!(mean_decay(3.0, g, 0.0), 3.0);
        let days: f64 = 1.0 / 4.75e-7 / 86400.0;
        assert!((days - 24.4).abs() < 0.05);
    }

    #[test]
    fn phase_limits_and_slope() {
        let (th0, w0, tau) = (0.3, 100.0, 50.0);
        assert_eq!(phase_trajectory(th0, w0, tau, 0.0), th0);
        assert!((phase_trajectory(th0, w0, tau, 1e5) - (th0 + w0 * tau)).abs() < 1e-9);
        for t in [0.5, 10.0, 80.0] {
            let h = 1e-4;
            let fd = (phase_trajectory(th0, w0, tau, t + h) - phase_trajectory(th0, w0, tau, t - h)) / (2.0 * h);
            let exact = mean_decay(w0, 1.0 / tau, t);
            assert!(((fd - exact) / exact).abs() < 1e-8, "{fd} vs {exact}");
        }
        assert_eq!(phase_trajectory(1.0, 2.0, f64::INFINITY, 3.0), 7.0);
    }

    fn cold_rotor(gamma: f64) -> OUParams {
        let m = MagnetSpec::new(25e-6, 7500.0).unwrap();
        OUParams::new(m.moment_of_inertia(), gamma, 4.0, 2.0 * PI * 2e6).unwrap()
    }

    #[test]
    fn process_noise_examples() {
        assert_eq!(cold_rotor(0.0).process_noise_intensity(), 0.0);
        let p = cold_rotor(1e-6);
        assert!((p.inertia() - 1.227e-19).abs() < 1e-22);
        let independent = 2.0 * 1e-6 * 1.380649e-23 * 4.0 / (p.inertia() * (4e6 * PI).powi(2));
        assert!(((p.process_noise_intensity() - independent) / independent).abs() < 1e-14);
        let doubled = OUParams::new(p.inertia(), 1e-6, 4.0, 2.0 * p.omega0()).unwrap();
        assert!((doubled.process_noise_intensity() * 4.0 / p.process_noise_intensity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noiseless_path_is_exact_exponential() {
        let model = StateSpaceModel::new(0.5, 20, 0.0).unwrap();
        let z = sample_log_path(3.0, 0.01, 0.0, &model, &mut rng_for(1, 0));
        for (k, zk) in z.iter().enumerate() {
            assert!((zk - (3.0 - 0.01 * k as f64 * 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let p = cold_rotor(1e-3);
        let model = StateSpaceModel::new(1.0, 100, 1e-6).unwrap();
        let a = simulate_ou_spindown(&p, &model, 7).unwrap();
        let b = simulate_ou_spindown(&p, &model, 7).unwrap();
        let c = simulate_ou_spindown(&p, &model, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.freqs, c.freqs);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn linearization_warning() {
        let p = cold_rotor(1e-3);
        let model = StateSpaceModel::new(1.0, 10, 0.2).unwrap();
        let trace = simulate_ou_spindown(&p, &model, 1).unwrap();
        assert_eq!(trace.warnings.len(), 1);
    }

    #[test]
    fn squid_guards_and_pure_tone() {
        let spec = SquidSpec {
            f0: 50.0,
            gamma: 0.0,
            amplitude: 1.0,
            phase0: 0.0,
            noise_sigma: 0.0,
            sample_rate: 1000.0,
            duration: 1.0,
            process_noise: 0.0,
        };
        let tr = synth_squid_signal(&spec, 0).unwrap();
        assert_eq!(tr.values.len(), 1000);
        for (k, y) in tr.values.iter().enumerate() {
            assert!((y - (2.0 * PI * 50.0 * k as f64 / 1000.0).sin()).abs() < 1e-9);
        }
        let slow = SquidSpec { sample_rate: 100.0, ..spec };
        assert!(matches!(synth_squid_signal(&slow, 0), Err(Error::Aliasing { .. })));
        let empty = SquidSpec { duration: 0.0, ..spec };
        assert!(synth_squid_signal(&empty, 0).unwrap().values.is_empty());
    }

    #[test]
    fn trace_validation() {
        assert!(SpinDownTrace::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_ok());
        assert!(SpinDownTrace::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SpinDownTrace::new(vec![0.0, 1.0], vec![1.0, -2.0]).is_err());
        assert!(SpinDownTrace::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn noise_descriptions_agree(gamma in 1e-9..1e-1f64, t in 0.1..300.0f64, r in 5e-6..5e-4f64, f0 in 1e2..3e6f64) {
            let m = MagnetSpec::new(r, 7500.0).unwrap();
            let p = OUParams::new(m.moment_of_inertia(), gamma, t, 2.0 * PI * f0).unwrap();
            let q = p.process_noise_intensity();
            let i = p.inertia();
            let w = p.omega0();
            let from_psd = p.torque_psd() / (2.0 * i * i * w * w);
            let from_langevin = (p.langevin_diffusion() / (i * w)).powi(2);
            prop_assert!(((from_psd - q) / q).abs() < 1e-12);
            prop_assert!(((from_langevin - q) / q).abs() < 1e-12);
        }
    }
}
