//! Nutation of a horizontally polarized magnet: integrals of motion and
//! the period from quadrature and from the spectrum of e_z(t).
//!
//! ```bash
//! cargo run --release --example precession_nutation
//! ```

use std::f64::consts::FRAC_PI_2;

use rotor::precession::*;

fn main() -> rotor::Result<()> {
    let params = GyroParams::new(1e-3)?;
    let state = GyroState::from_angles(Vec3::new(0.0, 0.4, 5.0), FRAC_PI_2, FRAC_PI_2);
    let c0 = conserved_quantities(&state);
    println!("E_n = {}, Omega.e = {:.1e}", c0.energy, c0.spin_projection);

    let k = nutation_constants(&state, &params);
    let (lo, hi) = turning_points(k.energy, k.omega0, params.epsilon())?;
    let t_quad = nutation_period(k.energy, k.omega0, params.epsilon())?;
    println!("turning points {lo:.6} .. {hi:.6} rad, quadrature period {t_quad:.6}");

    let traj = integrate(&state, &params, 200.0, IntegratorOptions { tol: 1e-10, dt: 0.01 })?;
    let drift = traj
        .states
        .iter()
        .map(|s| (conserved_quantities(s).energy - c0.energy).abs() / c0.energy)
        .fold(0.0, f64::max);
    println!("spectral period   {:.6}", nutation_spectral_period(&traj)?);
    println!("max energy drift  {drift:.2e} over {} samples ({} steps)", traj.states.len(), traj.stats.accepted);
    Ok(())
}
