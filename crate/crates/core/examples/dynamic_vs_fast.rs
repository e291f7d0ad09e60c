//! Dynamic and fast geometric gates side by side with stochastic
//! trajectories.

use geophase::experiments::{run_scenario, Mode, RunSettings, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = RunSettings::for_mode(Mode::Fast);
    for name in ["fig3a", "fig3b"] {
        let mut sc = Scenario::named(name)?;
        sc.grid = vec![0.0, 0.5, 1.0, 2.0];
        let result = run_scenario(&sc, &settings, None)?;
        let s = &result.series[0];
        println!("{} ({}), τ = {:.4}", s.label, s.gate, s.rows[0].tau);
        for r in &s.rows {
            println!(
                "  Γ = {:.1}: C = {:.3} ± {:.3}",
                r.gamma,
                r.concurrence.unwrap_or(f64::NAN),
                r.se_concurrence.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
