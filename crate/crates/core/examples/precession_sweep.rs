//! Spin and precession lines across spin rates, and the power law that
//! links their periods.
//!
//! ```bash
//! cargo run --release --example precession_sweep
//! ```

use std::f64::consts::PI;

use rotor::precession::*;

fn main() -> rotor::Result<()> {
    let params = GyroParams::new(1e-3)?;
    let points = precession_sweep(&[2.0, 3.0, 5.0, 8.0], &params, 2000.0, IntegratorOptions { tol: 1e-10, dt: 0.05 })?;
    let f_beta = 1.0 / (2.0 * PI);
    println!("omega0   T_s      T_l      f_l f_s / f_beta^2");
    for p in &points {
        let tl = p.slow_period.unwrap_or(f64::NAN);
        println!("{:<8} {:<8.4} {:<8.3} {:.4}", p.omega0, p.fast_period, tl, 1.0 / (tl * p.fast_period) / f_beta.powi(2));
    }
    let (ln_c, alpha) = fit_power_law(&points)?;
    println!("ln T_l = {ln_c:.4} - {alpha:.4} ln T_s");

    let f_x = precession_constant(392.0);
    println!("f_x for f_beta = 392 Hz: {f_x:.1} Hz; at f_s = 1 kHz, f_l = {:.1} Hz", precession_prediction(1e3, 392.0)?);
    Ok(())
}
