//! Rotor and gas parameters together with the closed-form free-molecular
//! damping, gauge, and kinematic relations.
//!
//! Everything here works in SI units (Pa, s, kg, m, rad/s). Millibar only
//! appears through [`mbar_to_pa`] / [`pa_to_mbar`] at the edges.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant (J/K), exact since the 2019 SI redefinition.
pub const K_B: f64 = 1.380649e-23;

/// Mass of a helium-4 atom (kg).
pub const HELIUM_MASS: f64 = 6.6465e-27;

/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;

/// Gauge pressure above which the constant renormalization between a
/// room-temperature Penning reading and the cold pressure stops holding (Pa).
pub const GAUGE_LINEAR_LIMIT_PA: f64 = 1e-4 * PA_PER_MBAR;

pub fn mbar_to_pa(p_mbar: f64) -> f64 {
    p_mbar * PA_PER_MBAR
}

pub fn pa_to_mbar(p_pa: f64) -> f64 {
    p_pa / PA_PER_MBAR
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {value}")))
    }
}

fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be non-negative and finite, got {value}")))
    }
}

/// A homogeneous spherical magnet.
///
/// Mass and moment of inertia are derived on demand from radius and density,
/// so they can never disagree with the primary fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetSpec {
    radius: f64,
    density: f64,
    magnetic_moment: Option<f64>,
}

impl MagnetSpec {
    pub fn new(radius: f64, density: f64) -> Result<Self> {
        require_positive("radius", radius)?;
        require_positive("density", density)?;
        Ok(Self { radius, density, magnetic_moment: None })
    }

    pub fn with_magnetic_moment(mut self, moment: f64) -> Result<Self> {
        require_non_negative("magnetic moment", moment)?;
        self.magnetic_moment = Some(moment);
        Ok(self)
    }

    /// Radius (m).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Density (kg/m³).
    pub fn density(&self) -> f64 {
        self.density
    }

    /// Magnetic moment (A·m²), if known.
    pub fn magnetic_moment(&self) -> Option<f64> {
        self.magnetic_moment
    }

    /// m = (4π/3) ρ R³ (kg).
    pub fn mass(&self) -> f64 {
        4.0 * PI / 3.0 * self.density * self.radius.powi(3)
    }

    /// I = (2/5) m R² (kg·m²).
    pub fn moment_of_inertia(&self) -> f64 {
        0.4 * self.mass() * self.radius * self.radius
    }
}

/// Gas species and the temperature at the rotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasSpec {
    molecular_mass: f64,
    temperature: f64,
}

impl GasSpec {
    pub fn new(molecular_mass: f64, temperature: f64) -> Result<Self> {
        require_positive("molecular mass", molecular_mass)?;
        require_positive("temperature", temperature)?;
        Ok(Self { molecular_mass, temperature })
    }

    pub fn helium(temperature: f64) -> Result<Self> {
        Self::new(HELIUM_MASS, temperature)
    }

    /// Molecular mass (kg).
    pub fn molecular_mass(&self) -> f64 {
        self.molecular_mass
    }

    /// Temperature (K).
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// Room-temperature gauge used as the pressure reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    room_temperature: f64,
    sensitivity_factor: f64,
}

impl GaugeSpec {
    /// Helium sensitivity of an air-calibrated Penning gauge.
    pub const HELIUM_PENNING_FACTOR: f64 = 5.9;

    pub fn new(room_temperature: f64, sensitivity_factor: f64) -> Result<Self> {
        require_positive("room temperature", room_temperature)?;
        require_positive("gauge sensitivity factor", sensitivity_factor)?;
        Ok(Self { room_temperature, sensitivity_factor })
    }

    pub fn room_temperature(&self) -> f64 {
        self.room_temperature
    }

    pub fn sensitivity_factor(&self) -> f64 {
        self.sensitivity_factor
    }

    /// Pg / P = (1/s) (T/T_RT)^(-1/2): gas sensitivity times the inverse
    /// thermomolecular ratio.
    pub fn factor(&self, gas: &GasSpec) -> f64 {
        (self.room_temperature / gas.temperature()).sqrt() / self.sensitivity_factor
    }
}

impl Default for GaugeSpec {
    fn default() -> Self {
        Self { room_temperature: 295.0, sensitivity_factor: Self::HELIUM_PENNING_FACTOR }
    }
}

/// Residual horizontal field of the trap and the polar libration frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapField {
    pub field: f64,
    pub angle: f64,
    pub libration_freq: f64,
}

impl TrapField {
    pub fn new(field: f64, angle: f64, libration_freq: f64) -> Result<Self> {
        require_non_negative("residual field", field)?;
        require_non_negative("libration frequency", libration_freq)?;
        if !angle.is_finite() {
            return Err(Error::Domain(format!("field angle must be finite, got {angle}")));
        }
        Ok(Self { field, angle, libration_freq })
    }
}

/// Centrifugal breaking model: σ = K ρ Ω² R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakingSpec {
    geometric_factor: f64,
    breaking_stress: f64,
}

impl BreakingSpec {
    /// Geometric factor estimated for solid spheres.
    pub const SPHERE_FACTOR: f64 = 0.398;

    pub fn new(geometric_factor: f64, breaking_stress: f64) -> Result<Self> {
        require_positive("geometric factor", geometric_factor)?;
        require_positive("breaking stress", breaking_stress)?;
        Ok(Self { geometric_factor, breaking_stress })
    }

    /// Infers σ_max from a sphere of `anchor_radius` and `anchor_density` that
    /// disintegrated at `anchor_freq_hz`.
    pub fn calibrated(
        geometric_factor: f64,
        anchor_radius: f64,
        anchor_density: f64,
        anchor_freq_hz: f64,
    ) -> Result<Self> {
        require_positive("anchor radius", anchor_radius)?;
        require_positive("anchor density", anchor_density)?;
        require_positive("anchor frequency", anchor_freq_hz)?;
        let omega = 2.0 * PI * anchor_freq_hz;
        let stress = geometric_factor * anchor_density * omega * omega * anchor_radius * anchor_radius;
        Self::new(geometric_factor, stress)
    }

    pub fn geometric_factor(&self) -> f64 {
        self.geometric_factor
    }

    /// σ_max (Pa).
    pub fn breaking_stress(&self) -> f64 {
        self.breaking_stress
    }

    /// Central stress of `magnet` spinning at angular frequency `omega` (Pa).
    pub fn stress_at(&self, magnet: &MagnetSpec, omega: f64) -> f64 {
        self.geometric_factor * magnet.density() * omega * omega * magnet.radius() * magnet.radius()
    }
}

/// Maxwell–Boltzmann mean speed √(8 k_B T / (π M_g)) (m/s).
pub fn mean_velocity(gas: &GasSpec) -> Result<f64> {
    require_positive("temperature", gas.temperature())?;
    require_positive("molecular mass", gas.molecular_mass())?;
    Ok((8.0 * K_B * gas.temperature() / (PI * gas.molecular_mass())).sqrt())
}

/// Free-molecular drag coefficient Γ = 16 R⁴ P / (3 v̄) (N·m·s).
pub fn gas_damping_coefficient(magnet: &MagnetSpec, gas: &GasSpec, pressure: f64) -> Result<f64> {
    require_non_negative("pressure", pressure)?;
    let v = mean_velocity(gas)?;
    Ok(16.0 * magnet.radius().powi(4) * pressure / (3.0 * v))
}

/// Decay rate per unit pressure, (10/π) / (ρ v̄ R) (1/(s·Pa)).
pub fn damping_per_pressure(magnet: &MagnetSpec, gas: &GasSpec) -> Result<f64> {
    let v = mean_velocity(gas)?;
    let denom = magnet.density() * v * magnet.radius();
    if !(denom.is_finite() && denom > 0.0) {
        return Err(Error::Domain("degenerate magnet specification".into()));
    }
    Ok(10.0 / PI / denom)
}

/// Exponential spin-down rate γ = Γ/I in the molecular-flow regime (1/s).
pub fn decay_rate(magnet: &MagnetSpec, gas: &GasSpec, pressure: f64) -> Result<f64> {
    require_non_negative("pressure", pressure)?;
    Ok(damping_per_pressure(magnet, gas)? * pressure)
}

/// Inverse of [`decay_rate`] (Pa).
pub fn pressure_from_decay(magnet: &MagnetSpec, gas: &GasSpec, gamma: f64) -> Result<f64> {
    require_non_negative("decay rate", gamma)?;
    Ok(gamma / damping_per_pressure(magnet, gas)?)
}

/// Room-temperature gauge reading paired with a validity marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeReading {
    /// Gauge-equivalent pressure (Pa).
    pub pressure: f64,
    /// False once the reading exceeds [`GAUGE_LINEAR_LIMIT_PA`]; the linear
    /// mapping is only trustworthy below it.
    pub linear_regime: bool,
}

/// Pg = (1/s)(T/T_RT)^(-1/2) P for a cold pressure `pressure` (Pa).
///
/// Valid only in molecular flow; readings above ~10⁻⁴ mbar are flagged.
pub fn gauge_pressure(gauge: &GaugeSpec, gas: &GasSpec, pressure: f64) -> GaugeReading {
    let pg = gauge.factor(gas) * pressure;
    GaugeReading { pressure: pg, linear_regime: pg <= GAUGE_LINEAR_LIMIT_PA }
}

/// Inverse of [`gauge_pressure`]: the cold pressure implied by a gauge reading (Pa).
pub fn cold_pressure_from_gauge(gauge: &GaugeSpec, gas: &GasSpec, gauge_pressure: f64) -> f64 {
    gauge_pressure / gauge.factor(gas)
}

/// Rotor quality factor Q = π f / γ.
pub fn quality_factor(freq_hz: f64, gamma: f64) -> Result<f64> {
    require_positive("frequency", freq_hz)?;
    if gamma == 0.0 {
        return Err(Error::Domain("zero decay rate gives an infinite quality factor".into()));
    }
    require_positive("decay rate", gamma)?;
    Ok(PI * freq_hz / gamma)
}

/// Ω_max = (1/R) √(σ_max / (K ρ)) (rad/s).
pub fn breaking_limit(magnet: &MagnetSpec, spec: &BreakingSpec) -> f64 {
    (spec.breaking_stress() / (spec.geometric_factor() * magnet.density())).sqrt() / magnet.radius()
}

/// Equatorial speed 2πfR (m/s) and centripetal acceleration (2πf)²R (m/s²).
pub fn tangential_kinematics(magnet: &MagnetSpec, freq_hz: f64) -> Result<(f64, f64)> {
    require_non_negative("frequency", freq_hz)?;
    let omega = 2.0 * PI * freq_hz;
    Ok((omega * magnet.radius(), omega * omega * magnet.radius()))
}

/// Barrier μB₀ that the azimuthal energy must exceed for free rotation (J).
pub fn spinning_threshold(magnet: &MagnetSpec, trap: &TrapField) -> Result<f64> {
    let mu = magnet
        .magnetic_moment()
        .ok_or_else(|| Error::Config("magnetic moment is required for the spinning threshold".into()))?;
    Ok(mu * trap.field)
}
