//! Conditional adiabatic gate with Δγ = π/8: entanglement of formation and
//! concurrence versus isotropic noise on both qubits, from the oracle.

use geophase::experiments::{run_scenario, Mode, RunSettings, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::named("fig2a")?;
    sc.grid = vec![0.0, 0.001, 0.002, 0.003, 0.004, 0.005];
    let result = run_scenario(&sc, &RunSettings::for_mode(Mode::Oracle), None)?;
    for r in &result.series[0].rows {
        println!(
            "Γ = {:.3}: 1-f = {:.4}, S = {:.4}, C = {:.4}, EOF = {:.4}",
            r.gamma,
            r.loss,
            r.entropy,
            r.concurrence.unwrap_or(f64::NAN),
            r.eof.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
