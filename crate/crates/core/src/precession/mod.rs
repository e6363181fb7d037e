//! Gyromagnetic rigid-body dynamics of a dipole spinning above a
//! superconducting plane.
//!
//! The model is dimensionless: time is measured in units of 1/ω_β, where
//! ω_β is the polar libration frequency of the non-spinning magnet, and the
//! only physical parameter left is ε = ω_E/ω_β, the ratio of the
//! Einstein–de Haas frequency to ω_β. The state is the angular velocity Ω and
//! the unit vector e along the magnetic moment, evolving as
//!
//! ```text
//! de/dt = Ω × e
//! dΩ/dt = ε (Ω × e) + (e·ẑ)(ẑ × e) − α Ω
//! ```
//!
//! where α is an optional isotropic drag (zero by default). Both Ω·e and
//! E = ½|Ω|² + ½(e·ẑ)² are integrals of motion when α = 0.

mod integrator;
mod spectrum;
mod sweep;

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use integrator::{Dopri5, StepStats};
pub use sweep::{fit_power_law, precession_sweep, SweepPoint};
pub use spectrum::{mode_spectrum, nutation_spectral_period, slow_mode_phase_shift, ModeSpectrum};

pub type Vec3 = Vector3<f64>;

/// Physical parameters of the dimensionless model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroParams {
    epsilon: f64,
    einstein_de_haas: Option<f64>,
    scaling_freq: Option<f64>,
    drag: f64,
}

impl GyroParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Domain(format!("epsilon must be non-negative, got {epsilon}")));
        }
        Ok(Self { epsilon, einstein_de_haas: None, scaling_freq: None, drag: 0.0 })
    }

    /// Builds ε from ω_E = μ/(|γ₀| I) and the scaling frequency Ω_p = ω_β (both rad/s).
    pub fn from_dimensional(einstein_de_haas: f64, scaling_freq: f64) -> Result<Self> {
        if !(scaling_freq > 0.0) {
            return Err(Error::Domain(format!("scaling frequency must be positive, got {scaling_freq}")));
        }
        let mut p = Self::new(einstein_de_haas / scaling_freq)?;
        p.einstein_de_haas = Some(einstein_de_haas);
        p.scaling_freq = Some(scaling_freq);
        Ok(p)
    }

    /// Adds isotropic viscous drag −α Ω (α in units of ω_β).
    pub fn with_drag(mut self, drag: f64) -> Result<Self> {
        if !(drag.is_finite() && drag >= 0.0) {
            return Err(Error::Domain(format!("drag must be non-negative, got {drag}")));
        }
        self.drag = drag;
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn drag(&self) -> f64 {
        self.drag
    }

    /// Ω_p (rad/s), when the dimensional scale is known.
    pub fn scaling_freq(&self) -> Option<f64> {
        self.scaling_freq
    }

    pub fn einstein_de_haas(&self) -> Option<f64> {
        self.einstein_de_haas
    }

    /// Converts a dimensionless frequency (cycles per unit time) to Hz.
    pub fn to_hz(&self, dimensionless: f64) -> Option<f64> {
        self.scaling_freq.map(|w| dimensionless * w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroState {
    pub omega: Vec3,
    pub e: Vec3,
    pub t: f64,
}

impl GyroState {
    /// Normalizes `e`; fails for a zero vector.
    pub fn new(omega: Vec3, e: Vec3, t: f64) -> Result<Self> {
        let n = e.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Domain("moment direction must be a non-zero vector".into()));
        }
        Ok(Self { omega, e: e / n, t })
    }

    /// Moment direction from the polar and azimuthal angles,
    /// e = (sinϑ sinφ, −sinϑ cosφ, cosϑ).
    pub fn from_angles(omega: Vec3, theta: f64, phi: f64) -> Self {
        let e = Vec3::new(theta.sin() * phi.sin(), -theta.sin() * phi.cos(), theta.cos());
        Self { omega, e, t: 0.0 }
    }

    /// Polar angle from the vertical.
    pub fn theta(&self) -> f64 {
        self.e.z.clamp(-1.0, 1.0).acos()
    }

    /// Azimuth of e in the convention of [`GyroState::from_angles`].
    pub fn phi(&self) -> f64 {
        self.e.x.atan2(-self.e.y)
    }

    fn to_array(self) -> [f64; 6] {
        [self.omega.x, self.omega.y, self.omega.z, self.e.x, self.e.y, self.e.z]
    }

    fn from_array(y: &[f64; 6], t: f64) -> Self {
        Self { omega: Vec3::new(y[0], y[1], y[2]), e: Vec3::new(y[3], y[4], y[5]), t }
    }
}

/// Time derivative of the state: (dΩ/dt, de/dt).
pub fn derivatives(state: &GyroState, params: &GyroParams) -> (Vec3, Vec3) {
    let e = state.e;
    let omega = state.omega;
    let de = omega.cross(&e);
    let tilt = e.z;
    let torque = Vec3::new(-tilt * e.y, tilt * e.x, 0.0);
    let domega = params.epsilon * de + torque - params.drag * omega;
    (domega, de)
}

fn rhs(params: GyroParams) -> impl Fn(&[f64; 6]) -> [f64; 6] {
    move |y| {
        let s = GyroState::from_array(y, 0.0);
        let (dw, de) = derivatives(&s, &params);
        [dw.x, dw.y, dw.z, de.x, de.y, de.z]
    }
}

/// Restores |e| = 1 after a step.
///
/// The truncation error of e' = Ω×e is mostly a loss of amplitude across Ω,
/// so only the part of e perpendicular to Ω is rescaled. Ω·e is left as the
/// step produced it. Falls back to radial scaling when Ω is negligible.
fn renormalize(y: &mut [f64; 6]) {
    let w = Vector3::new(y[0], y[1], y[2]);
    let e = Vector3::new(y[3], y[4], y[5]);
    let wn = w.norm();
    let fixed = if wn > 1e-12 {
        let axis = w / wn;
        let par = axis * axis.dot(&e);
        let perp = e - par;
        let room = 1.0 - par.norm_squared();
        let pn = perp.norm();
        if room > 0.0 && pn > 1e-6 {
            Some(par + perp * (room.sqrt() / pn))
        } else {
            None
        }
    } else {
        None
    };
    let e = fixed.unwrap_or_else(|| e / e.norm());
    y[3] = e.x;
    y[4] = e.y;
    y[5] = e.z;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Relative and absolute local error tolerance.
    pub tol: f64,
    /// Output sample spacing (dimensionless time).
    pub dt: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { tol: 1e-9, dt: 0.01 }
    }
}

/// Uniformly sampled solution of the equations of motion.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: GyroParams,
    pub initial: GyroState,
    pub options: IntegratorOptions,
    pub states: Vec<GyroState>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.options.dt
    }

    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t) - self.initial.t
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }
}

/// Integrates from `initial` to `t_end`, recording a sample every `options.dt`.
///
/// Samples sit at `t0 + k·dt`; the integrator lands on each one exactly. A
/// zero-length span yields only the initial sample.
pub fn integrate(
    initial: &GyroState,
    params: &GyroParams,
    t_end: f64,
    options: IntegratorOptions,
) -> Result<Trajectory> {
    if !(options.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", options.tol)));
    }
    if !(options.dt > 0.0) {
        return Err(Error::Domain(format!("output spacing must be positive, got {}", options.dt)));
    }
    if t_end < initial.t {
        return Err(Error::Domain("trajectories run forward in time; use `propagate` to go back".into()));
    }
    let f = rhs(*params);
    let mut stepper = Dopri5::<6>::new(options.tol);
    let n_out = ((t_end - initial.t) / options.dt + 1e-9).floor() as usize;
    let mut states = Vec::with_capacity(n_out + 1);
    let mut y = initial.to_array();
    renormalize(&mut y);
    let mut t = initial.t;
    states.push(GyroState::from_array(&y, t));
    for k in 1..=n_out {
        let next = initial.t + k as f64 * options.dt;
        stepper.advance(&f, &renormalize, t, &mut y, next)?;
        t = next;
        states.push(GyroState::from_array(&y, t));
    }
    Ok(Trajectory { params: *params, initial: *initial, options, states, stats: stepper.stats })
}

/// Final state at `t_target`, which may lie before or after `state.t`.
pub fn propagate(state: &GyroState, params: &GyroParams, t_target: f64, tol: f64) -> Result<GyroState> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let f = rhs(*params);
    let mut stepper = Dopri5::<6>::new(tol);
    let mut y = state.to_array();
    renormalize(&mut y);
    stepper.advance(&f, &renormalize, state.t, &mut y, t_target)?;
    Ok(GyroState::from_array(&y, t_target))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conserved {
    /// Spin about the moment axis, Ω·e.
    pub spin_projection: f64,
    /// E = ½|Ω|² + ½(e·ẑ)².
    pub energy: f64,
}

pub fn conserved_quantities(state: &GyroState) -> Conserved {
    Conserved {
        spin_projection: state.omega.dot(&state.e),
        energy: 0.5 * state.omega.norm_squared() + 0.5 * state.e.z * state.e.z,
    }
}

/// Constants entering the one-dimensional nutation problem, valid for
/// states with Ω·e = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutationConstants {
    /// Ω₀ = sin²ϑ φ̇ − ε cosϑ, equal to Ω_z − ε e_z.
    pub omega0: f64,
    /// E_n1 = E_n + ε²/2.
    pub energy: f64,
}

pub fn nutation_constants(state: &GyroState, params: &GyroParams) -> NutationConstants {
    let eps = params.epsilon();
    NutationConstants {
        omega0: state.omega.z - eps * state.e.z,
        energy: conserved_quantities(state).energy + 0.5 * eps * eps,
    }
}

fn potential_parts(theta: f64, omega0: f64, eps: f64) -> (f64, f64, f64, f64) {
    let a = eps * eps + omega0 * omega0;
    let b = 2.0 * eps * omega0;
    (a, b, theta.cos(), theta.sin())
}

/// Effective potential of the polar angle,
/// U = ½(ε² + Ω₀² + 2εΩ₀ cosϑ)/sin²ϑ + ½cos²ϑ.
pub fn effective_potential(theta: f64, omega0: f64, eps: f64) -> Result<f64> {
    let (a, b, c, s) = potential_parts(theta, omega0, eps);
    if !(theta > 0.0 && theta < PI) || s == 0.0 {
        return Err(Error::Domain(format!("potential is singular at theta = {theta}")));
    }
    Ok(0.5 * (a + b * c) / (s * s) + 0.5 * c * c)
}

fn potential_slope(theta: f64, omega0: f64, eps: f64) -> f64 {
    let (a, b, c, s) = potential_parts(theta, omega0, eps);
    -b / (2.0 * s) - (a + b * c) * c / s.powi(3) - c * s
}

fn potential_curvature(theta: f64, omega0: f64, eps: f64) -> f64 {
    let (a, b, c, s) = potential_parts(theta, omega0, eps);
    1.5 * b * c / (s * s) + (a + b * c) * (s * s + 3.0 * c * c) / s.powi(4) + s * s - c * c
}

/// Location and value of the minimum of the effective potential.
///
/// Golden-section search brackets it; Newton iterations on the analytic
/// slope then polish it to machine precision.
pub fn potential_minimum(omega0: f64, eps: f64) -> Result<(f64, f64)> {
    let u = |t: f64| effective_potential(t, omega0, eps);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-6, PI - 1e-6);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (u(x1)?, u(x2)?);
    while hi - lo > 1e-9 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = u(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = u(x2)?;
        }
    }
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..20 {
        let curv = potential_curvature(theta, omega0, eps);
        if curv <= 0.0 {
            break;
        }
        let step = potential_slope(theta, omega0, eps) / curv;
        let next = (theta - step).clamp(lo.min(theta) - 1e-6, hi.max(theta) + 1e-6);
        if (next - theta).abs() <= 1e-16 * theta.abs() {
            theta = next;
            break;
        }
        theta = next;
    }
    Ok((theta, u(theta)?))
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut inside: f64, mut outside: f64) -> f64 {
    // g(inside) < 0 <= g(outside)
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if g(mid) < 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// The nutation interval [ϑ₁, ϑ₂] where U(ϑ) = `energy`.
///
/// `energy` equal to the potential minimum (within rounding) returns the
/// degenerate interval; anything below it has no real motion.
pub fn turning_points(energy: f64, omega0: f64, eps: f64) -> Result<(f64, f64)> {
    let (theta_min, u_min) = potential_minimum(omega0, eps)?;
    let slack = 4.0 * f64::EPSILON * u_min.abs().max(1.0);
    if energy < u_min - slack {
        return Err(Error::NoOscillation { energy, minimum: u_min });
    }
    if energy <= u_min + slack {
        return Ok((theta_min, theta_min));
    }
    let g = |t: f64| effective_potential(t, omega0, eps).map_or(f64::INFINITY, |u| u - energy);
    let bracket = |dir: f64| -> Result<f64> {
        let mut step = 1e-3;
        loop {
            let t = theta_min + dir * step;
            if t <= 0.0 || t >= PI {
                let edge = if dir < 0.0 { f64::MIN_POSITIVE } else { PI - 1e-15 };
                return Ok(edge);
            }
            if g(t) >= 0.0 {
                return Ok(t);
            }
            step *= 2.0;
        }
    };
    let lo = bisect(g, theta_min, bracket(-1.0)?);
    let hi = bisect(g, theta_min, bracket(1.0)?);
    Ok((lo, hi))
}

/// Nutation period T = ∫ dϑ √(2/(E − U(ϑ))) between the turning points.
///
/// The substitution ϑ = m − h cos u removes both inverse-square-root
/// endpoint singularities and leaves a smooth periodic integrand, so the
/// midpoint rule converges spectrally. Node counts double until successive
/// estimates agree to 1e-10, up to 2¹⁴ nodes.
pub fn nutation_period(energy: f64, omega0: f64, eps: f64) -> Result<f64> {
    let (t1, t2) = turning_points(energy, omega0, eps)?;
    if t1 == t2 {
        let curv = potential_curvature(t1, omega0, eps);
        return Ok(2.0 * PI / curv.sqrt());
    }
    let mid = 0.5 * (t1 + t2);
    let half = 0.5 * (t2 - t1);
    let estimate = |n: usize| -> Result<f64> {
        let du = PI / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let u = (k as f64 + 0.5) * du;
            let theta = mid - half * u.cos();
            let gap = energy - effective_potential(theta, omega0, eps)?;
            if gap > 0.0 {
                sum += half * u.sin() * (2.0 / gap).sqrt();
            }
        }
        Ok(sum * du)
    };
    // The integrand is smooth and periodic in u, so the midpoint rule converges
    // fast; beyond a few hundred nodes the samples next to the turning points
    // only add cancellation noise. Keep the estimate that changed least.
    let mut n = 32;
    let mut prev = estimate(n)?;
    let mut best = (f64::INFINITY, prev);
    while n < 2048 {
        n *= 2;
        let next = estimate(n)?;
        let change = ((next - prev) / next).abs();
        if change < best.0 {
            best = (change, next);
        }
        if change < 1e-12 {
            break;
        }
        prev = next;
    }
    Ok(best.1)
}

/// Precession frequency f_l = 0.5 f_β² / f_s predicted by the image-field torque.
pub fn precession_prediction(spin_freq: f64, libration_freq: f64) -> Result<f64> {
    if !(spin_freq > 0.0) {
        return Err(Error::Domain(format!("spin frequency must be positive, got {spin_freq}")));
    }
    Ok(0.5 * libration_freq * libration_freq / spin_freq)
}

/// √(0.5) f_β: the constant f_x in f_l = f_x²/f_s.
pub fn precession_constant(libration_freq: f64) -> f64 {
    libration_freq * 0.5f64.sqrt()
}
