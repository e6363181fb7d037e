//! Centrifugal breaking limit scaled from a sphere that broke at a known rate.
//!
//! ```bash
//! cargo run --example breaking_limit
//! ```

use std::f64::consts::PI;

use rotor::model::*;

fn main() -> rotor::Result<()> {
    let spec = BreakingSpec::calibrated(BreakingSpec::SPHERE_FACTOR, 250e-6, 7430.0, 660e3)?;
    println!("sigma_max = {:.3e} Pa", spec.breaking_stress());
    for r_um in [10.0, 24.0, 30.0, 100.0, 250.0] {
        let m = MagnetSpec::new(r_um * 1e-6, 7430.0)?;
        let omega = breaking_limit(&m, &spec);
        let (v, a) = tangential_kinematics(&m, omega / (2.0 * PI))?;
        println!("R = {r_um:>5} um  f_max = {:>7.3} MHz  v = {v:.0} m/s  a = {a:.2e} m/s^2", omega / (2.0 * PI) / 1e6);
    }
    Ok(())
}
