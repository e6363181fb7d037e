//! Thermal spin-down of a cold rotor in the log-frequency state-space model.
//!
//! ```bash
//! cargo run --example ou_spindown
//! ```

use std::f64::consts::PI;

use rotor::estimation::{fit_decay_gls, fit_exponential_decay, FitOptions};
use rotor::model::*;
use rotor::spindown::*;

fn main() -> rotor::Result<()> {
    let magnet = MagnetSpec::new(25e-6, 7500.0)?;
    let gas = GasSpec::helium(4.0)?;
    let gamma = decay_rate(&magnet, &gas, mbar_to_pa(1e-7))?;
    let ou = OUParams::new(magnet.moment_of_inertia(), gamma, 4.0, 2.0 * PI * 2e6)?;
    println!("gamma = {gamma:.3e} 1/s, Q = {:.3e} 1/s, S_N = {:.3e} N^2 m^2/Hz", ou.process_noise_intensity(), ou.torque_psd());

    let model = StateSpaceModel::new(10.0, 2000, 1e-12)?;
    let trace = simulate_ou_spindown(&ou, &model, 42)?;
    let ols = fit_exponential_decay(&trace, &FitOptions::default())?;
    let gls = fit_decay_gls(&trace, ou.process_noise_intensity(), model.sigma_v())?;
    // The residual-based error of the log-linear fit ignores the correlation of the random walk.
    println!("log-linear fit  gamma = {:.4e} +- {:.1e}", ols.gamma, ols.gamma_stderr);
    println!("GLS fit         gamma = {:.4e} +- {:.1e}", gls.gamma, gls.gamma_stderr);
    Ok(())
}
