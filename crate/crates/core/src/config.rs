//! The JSON experiment description shared by every command.
//!
//! All fields carry their unit in the name. Unknown keys are rejected, and
//! values are validated by the constructors of the domain types they feed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{PeakOptions, TrackOptions, DEFAULT_DETECTION_RATIO, DEFAULT_PAD_FACTOR};
use crate::model::{BreakingSpec, GasSpec, GaugeSpec, MagnetSpec, TrapField, HELIUM_MASS};
use crate::precession::{GyroParams, GyroState, IntegratorOptions, Vec3};
use crate::spectral::Window;
use crate::spindown::{StateSpaceModel, SquidSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub magnet: Option<MagnetConfig>,
    #[serde(default)]
    pub gas: Option<GasConfig>,
    #[serde(default)]
    pub gauge: Option<GaugeConfig>,
    #[serde(default)]
    pub trap: Option<TrapConfig>,
    #[serde(default)]
    pub breaking: Option<BreakingConfig>,
    #[serde(default)]
    pub rotor: Option<RotorConfig>,
    #[serde(default)]
    pub precession: Option<PrecessionConfig>,
    #[serde(default)]
    pub spindown: Option<SpinDownConfig>,
    #[serde(default)]
    pub squid: Option<SquidConfig>,
    #[serde(default)]
    pub tracking: Option<TrackingConfig>,
    #[serde(default)]
    pub crlb: Option<CrlbConfig>,
    #[serde(default)]
    pub outputs: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetConfig {
    pub radius_m: f64,
    pub density_kg_m3: f64,
    #[serde(default)]
    pub magnetic_moment_a_m2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub temperature_k: f64,
    /// Defaults to helium-4.
    #[serde(default)]
    pub molecular_mass_kg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    #[serde(default = "default_room_temperature")]
    pub room_temperature_k: f64,
    #[serde(default = "default_sensitivity")]
    pub sensitivity_factor: f64,
}

fn default_room_temperature() -> f64 {
    GaugeSpec::default().room_temperature()
}

fn default_sensitivity() -> f64 {
    GaugeSpec::HELIUM_PENNING_FACTOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub field_t: f64,
    #[serde(default)]
    pub angle_rad: f64,
    pub libration_freq_hz: f64,
}

/// Either σ_max directly or an anchor sphere that broke at a known frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakingConfig {
    #[serde(default = "default_geometric_factor")]
    pub geometric_factor: f64,
    #[serde(default)]
    pub breaking_stress_pa: Option<f64>,
    #[serde(default)]
    pub anchor: Option<AnchorConfig>,
}

fn default_geometric_factor() -> f64 {
    BreakingSpec::SPHERE_FACTOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub radius_m: f64,
    /// Defaults to the magnet's density.
    #[serde(default)]
    pub density_kg_m3: Option<f64>,
    pub freq_hz: f64,
}

/// Operating point used by `physics`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorConfig {
    #[serde(default)]
    pub freq_hz: Option<f64>,
    #[serde(default)]
    pub gamma_per_s: Option<f64>,
    #[serde(default)]
    pub pressure_mbar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecessionConfig {
    pub epsilon: f64,
    pub omega: [f64; 3],
    /// Moment direction; alternatively give `theta_rad` and `phi_rad`.
    #[serde(default)]
    pub e: Option<[f64; 3]>,
    #[serde(default)]
    pub theta_rad: Option<f64>,
    #[serde(default)]
    pub phi_rad: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_precession_dt")]
    pub dt: f64,
    #[serde(default = "default_precession_tol")]
    pub tol: f64,
    #[serde(default)]
    pub drag: f64,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_precession_dt() -> f64 {
    0.01
}

fn default_precession_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub omega0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_sweep_dt")]
    pub dt: f64,
}

fn default_sweep_dt() -> f64 {
    0.05
}

/// Discrete log-frequency record. Q defaults to the thermal value of the
/// configured magnet and gas; `q_per_s` overrides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinDownConfig {
    pub f0_hz: f64,
    pub gamma_per_s: f64,
    pub dt_s: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub sigma_v: Option<f64>,
    /// σ_y(Δ) at gate Δ = dt_s, used as σ_v when `sigma_v` is absent.
    #[serde(default)]
    pub allan_deviation: Option<f64>,
    #[serde(default)]
    pub q_per_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidConfig {
    pub f0_hz: f64,
    pub gamma_per_s: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase0_rad: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub process_noise_per_s: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    #[serde(default)]
    pub window_len: Option<usize>,
    #[serde(default)]
    pub hop: Option<usize>,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
    #[serde(default = "default_ratio")]
    pub detection_ratio: f64,
}

fn default_pad() -> usize {
    DEFAULT_PAD_FACTOR
}

fn default_ratio() -> f64 {
    DEFAULT_DETECTION_RATIO
}

/// Bound computation. Missing sampling fields fall back to `spindown`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrlbConfig {
    #[serde(default)]
    pub dt_s: Option<f64>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub sigma_v: Option<f64>,
    #[serde(default)]
    pub q_per_s: Option<f64>,
    /// Operating pressure; sets γ and hence the thermal Q when `q_per_s` is absent.
    #[serde(default)]
    pub pressure_mbar: Option<f64>,
    #[serde(default)]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
}

fn need<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("`{what}` is required for this command")))
}

impl ExperimentConfig {
    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let cfg: Self = crate::io::read_json(r)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "at `version`: unsupported version {}, expected {CONFIG_VERSION}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn magnet_spec(&self) -> Result<Option<MagnetSpec>> {
        self.magnet
            .map(|m| {
                let spec = MagnetSpec::new(m.radius_m, m.density_kg_m3)?;
                match m.magnetic_moment_a_m2 {
                    Some(mu) => spec.with_magnetic_moment(mu),
                    None => Ok(spec),
                }
            })
            .transpose()
    }

    pub fn require_magnet(&self) -> Result<MagnetSpec> {
        self.magnet_spec()?.ok_or_else(|| Error::Config("`magnet` is required for this command".into()))
    }

    pub fn gas_spec(&self) -> Result<Option<GasSpec>> {
        self.gas
            .map(|g| GasSpec::new(g.molecular_mass_kg.unwrap_or(HELIUM_MASS), g.temperature_k))
            .transpose()
    }

    pub fn require_gas(&self) -> Result<GasSpec> {
        self.gas_spec()?.ok_or_else(|| Error::Config("`gas` is required for this command".into()))
    }

    pub fn gauge_spec(&self) -> Result<GaugeSpec> {
        match self.gauge {
            Some(g) => GaugeSpec::new(g.room_temperature_k, g.sensitivity_factor),
            None => Ok(GaugeSpec::default()),
        }
    }

    pub fn trap_field(&self) -> Result<Option<TrapField>> {
        self.trap.map(|t| TrapField::new(t.field_t, t.angle_rad, t.libration_freq_hz)).transpose()
    }

    /// Breaking model, if a `breaking` section is present.
    pub fn breaking_spec(&self) -> Result<Option<BreakingSpec>> {
        let Some(b) = self.breaking else { return Ok(None) };
        match (b.breaking_stress_pa, b.anchor) {
            (Some(s), None) => BreakingSpec::new(b.geometric_factor, s).map(Some),
            (None, Some(a)) => {
                let density = match a.density_kg_m3 {
                    Some(d) => d,
                    None => self.require_magnet()?.density(),
                };
                BreakingSpec::calibrated(b.geometric_factor, a.radius_m, density, a.freq_hz).map(Some)
            }
            (Some(_), Some(_)) => {
                Err(Error::Config("at `breaking`: give either `breaking_stress_pa` or `anchor`, not both".into()))
            }
            (None, None) => Err(Error::Config("at `breaking`: `breaking_stress_pa` or `anchor` is required".into())),
        }
    }

    pub fn rotor(&self) -> RotorConfig {
        self.rotor.unwrap_or_default()
    }

    pub fn precession(&self) -> Result<&PrecessionConfig> {
        self.precession.as_ref().ok_or_else(|| Error::Config("`precession` is required for this command".into()))
    }

    pub fn spindown(&self) -> Result<SpinDownConfig> {
        need(self.spindown, "spindown")
    }

    /// Squid spec as consumed by the synthesizer.
    pub fn squid_spec(&self) -> Result<SquidSpec> {
        let s = need(self.squid, "squid")?;
        Ok(SquidSpec {
            f0: s.f0_hz,
            gamma: s.gamma_per_s,
            amplitude: s.amplitude,
            phase0: s.phase0_rad,
            noise_sigma: s.noise_sigma,
            sample_rate: s.sample_rate_hz,
            duration: s.duration_s,
            process_noise: s.process_noise_per_s,
        })
    }

    pub fn track_options(&self) -> TrackOptions {
        let mut opts = TrackOptions::default();
        if let Some(t) = self.tracking {
            if let Some(n) = t.window_len {
                opts.window_len = n;
            }
            opts.hop = t.hop;
            opts.peak = PeakOptions { window: t.window, pad_factor: t.pad_factor, detection_ratio: t.detection_ratio };
        }
        opts
    }

    pub fn crlb(&self) -> CrlbConfig {
        self.crlb.clone().unwrap_or_default()
    }
}

impl PrecessionConfig {
    pub fn params(&self) -> Result<GyroParams> {
        GyroParams::new(self.epsilon)?.with_drag(self.drag)
    }

    pub fn initial_state(&self) -> Result<GyroState> {
        let omega = Vec3::from(self.omega);
        match (self.e, self.theta_rad, self.phi_rad) {
            (Some(e), None, None) => GyroState::new(omega, Vec3::from(e), 0.0),
            (None, Some(th), phi) => Ok(GyroState::from_angles(omega, th, phi.unwrap_or(std::f64::consts::FRAC_PI_2))),
            (None, None, _) => Err(Error::Config("at `precession`: give `e` or `theta_rad`".into())),
            _ => Err(Error::Config("at `precession`: `e` and angles are mutually exclusive".into())),
        }
    }

    pub fn options(&self) -> IntegratorOptions {
        IntegratorOptions { tol: self.tol, dt: self.dt }
    }
}

impl SpinDownConfig {
    pub fn sigma_v(&self) -> Result<f64> {
        match (self.sigma_v, self.allan_deviation) {
            (Some(s), None) => Ok(s),
            (None, Some(a)) => Ok(a),
            (None, None) => Ok(0.0),
            (Some(_), Some(_)) => {
                Err(Error::Config("at `spindown`: give `sigma_v` or `allan_deviation`, not both".into()))
            }
        }
    }

    pub fn model(&self) -> Result<StateSpaceModel> {
        match self.allan_deviation {
            Some(a) if self.sigma_v.is_none() => StateSpaceModel::from_allan_deviation(self.dt_s, self.n_samples, a),
            _ => StateSpaceModel::new(self.dt_s, self.n_samples, self.sigma_v()?),
        }
    }
}
