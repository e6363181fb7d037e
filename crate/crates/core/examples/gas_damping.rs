//! Free-molecular damping of a levitated sphere and the gauge mapping.
//!
//! ```bash
//! cargo run --example gas_damping
//! ```

use rotor::model::*;

fn main() -> rotor::Result<()> {
    let magnet = MagnetSpec::new(24e-6, 7430.0)?;
    let gas = GasSpec::helium(4.2)?;
    let gauge = GaugeSpec::default();

    println!("mean speed          {:.2} m/s", mean_velocity(&gas)?);
    println!("gamma/P             {:.3} 1/(s mbar)", damping_per_pressure(&magnet, &gas)? * PA_PER_MBAR);
    println!("gauge factor Pg/P   {:.4}", gauge.factor(&gas));

    for p_mbar in [1e-8, 1e-7, 1e-6, 1e-5] {
        let p = mbar_to_pa(p_mbar);
        let gamma = decay_rate(&magnet, &gas, p)?;
        let reading = gauge_pressure(&gauge, &gas, p);
        println!(
            "P = {p_mbar:.0e} mbar  gamma = {gamma:.3e} 1/s  tau = {:.1} days  gauge = {:.3e} mbar",
            1.0 / gamma / 86400.0,
            pa_to_mbar(reading.pressure)
        );
    }
    Ok(())
}
