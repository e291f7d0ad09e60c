//! Bisects for the noise strength at which the output concurrence vanishes.
//! Uses the density-matrix oracle so it finishes in seconds.

use std::f64::consts::PI;

use geophase::experiments::{find_threshold, GateKind, Mode, RunSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = RunSettings::for_mode(Mode::Oracle);
    let noise = "isotropic:both".parse()?;
    let cases = [
        (
            GateKind::ConditionalAdiabatic {
                delta_gamma: PI / 8.0,
            },
            (0.002, 0.008),
        ),
        (GateKind::Dynamic, (0.5, 4.0)),
        (GateKind::FastGeometric, (0.25, 2.0)),
    ];
    for (gate, bracket) in cases {
        let t = find_threshold(gate, noise, bracket, &settings)?;
        println!(
            "{gate}: Γ_thres = {:.5} ± {:.1e}, τ = {:.4}, Γτ = {:.4} ({} evaluations)",
            t.gamma_thres, t.bracket_width, t.tau, t.product, t.evaluations
        );
    }
    println!("4π/75 = {:.4}", 4.0 * PI / 75.0);
    Ok(())
}
