//! Exact decay-rate bound against its readout and process limits, and the
//! pressure floor that follows.
//!
//! ```bash
//! cargo run --release --example crlb_bounds
//! ```

use std::f64::consts::PI;

use rotor::crlb::*;
use rotor::model::*;
use rotor::spindown::*;

fn main() -> rotor::Result<()> {
    let q = 1e-12;
    println!("sigma_v    exact       readout     process     regime");
    for sv in [1e-3, 1e-4, 1e-5, 1e-6, 0.0] {
        let model = StateSpaceModel::new(1.0, 1000, sv)?;
        let b = exact_crlb_gamma(&build_covariance(&model, q)?)?;
        let r = readout_limited_bound(&model);
        let p = process_limited_bound(q, model.duration())?;
        let regime = if p > r { "process" } else { "readout" };
        println!("{sv:<10.0e} {:<11.3e} {r:<11.3e} {p:<11.3e} {regime}{}", b.variance, if b.regularized { " (regularized)" } else { "" });
    }

    let magnet = MagnetSpec::new(25e-6, 7500.0)?;
    let gas = GasSpec::helium(4.0)?;
    let gp = damping_per_pressure(&magnet, &gas)?;
    let ou = OUParams::new(magnet.moment_of_inertia(), gp * mbar_to_pa(1e-7), 4.0, 2.0 * PI * 2e6)?;
    let model = StateSpaceModel::new(1.0, 1000, 0.0)?;
    let q = ou.process_noise_intensity();
    let s = pressure_sensitivity(gp, process_limited_bound(q, model.duration())?, &model, q)?;
    println!("process floor {:.2e} Pa/sqrt(Hz)", s.process_floor * model.duration().sqrt());
    Ok(())
}
