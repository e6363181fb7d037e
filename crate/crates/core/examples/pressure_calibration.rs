//! Decay rate against gauge pressure, and pressure inference from a fit.
//!
//! ```bash
//! cargo run --example pressure_calibration
//! ```

use rotor::estimation::*;
use rotor::model::*;

fn main() -> rotor::Result<()> {
    let (a, b) = (8.2 / PA_PER_MBAR, -1.5e-4);
    let sweep: Vec<(f64, f64)> = [3e-5, 1e-4, 3e-4, 6e-4].iter().map(|&pg| (pg, a * pg + b)).collect();
    let fit = fit_gamma_vs_pressure(&sweep)?;
    let gas = GasSpec::helium(4.2)?;
    let gauge = GaugeSpec::default();
    println!("A = {:.3} 1/(s mbar), B = {:.2e} 1/s", fit.slope_per_mbar(), fit.intercept);
    println!("residual pressure {:.2e} mbar", pa_to_mbar(fit.residual_pressure));
    let measured = fit.damping_per_pressure(gauge.factor(&gas));
    println!("gamma/P referred to the cold rotor {:.2} 1/(s mbar)", measured * PA_PER_MBAR);

    let magnet = MagnetSpec::new(24e-6, 7430.0)?;
    let decay = DecayFit {
        f0: 2.01e6,
        f0_stderr: 0.0,
        gamma: 4.75e-7,
        gamma_stderr: 1e-8,
        residual_rms: 0.0,
        n_used: 0,
        n_below_floor: 0,
        t_start: 0.0,
        t_end: 0.0,
    };
    for (label, cal) in [("theoretical", DampingCalibration::Theoretical), ("measured", DampingCalibration::Measured(measured))] {
        let p = infer_pressure(&decay, &magnet, &gas, &gauge, cal)?;
        println!("{label:<12} P = {:.3e} +- {:.1e} mbar", pa_to_mbar(p.pressure), pa_to_mbar(p.pressure_stderr));
    }
    Ok(())
}
