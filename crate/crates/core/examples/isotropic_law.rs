//! Fidelity loss of the γ_B = π gate under isotropic noise, compared with
//! ½(1 − e^{−4Γτ}). Pass a trajectory count as the first argument.

use geophase::experiments::{fit_exponential_loss, run_scenario, Mode, RunSettings, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut settings = RunSettings::for_mode(Mode::Fast);
    if let Some(n) = std::env::args().nth(1) {
        settings.trajectories = n.parse()?;
    }
    let mut sc = Scenario::named("fig1b")?;
    sc.grid = vec![0.0, 0.002, 0.005, 0.01];
    let result = run_scenario(&sc, &settings, None)?;
    let rows = &result.series[0].rows;
    println!("{:>8} {:>9} {:>9} {:>9}", "Γ", "1-f", "±", "law");
    for r in rows {
        let law = 0.5 * (1.0 - (-4.0 * r.gamma * r.tau).exp());
        println!(
            "{:>8} {:>9.5} {:>9.5} {:>9.5}",
            r.gamma, r.loss, r.se_loss, law
        );
    }
    let fit = fit_exponential_loss(rows, rows[0].tau)?;
    println!("fitted c/(4τ) = {:.3}", fit.c_over_4tau);
    Ok(())
}
