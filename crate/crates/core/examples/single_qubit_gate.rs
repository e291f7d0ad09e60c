//! Runs the adiabatic single-qubit gate without noise and prints the
//! fidelity in terms of measured spin expectations for two Berry phases.

use std::f64::consts::PI;

use geophase::experiments::GateKind;
use geophase::metrics::gate_fidelity;
use geophase::qcore::StateVector;
use geophase::qsd::{run_ensemble, IntegratorConfig, NoiseModel};
use geophase::schedule::{theta_for_gamma_b, FrameParams, GateTimings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = IntegratorConfig {
        trajectories: 1,
        ..IntegratorConfig::default()
    };
    for gamma_b in [PI, PI / 8.0] {
        let gate = GateKind::SingleAdiabatic { gamma_b };
        let schedule = gate.build(FrameParams::default(), GateTimings::default())?;
        let ens = run_ensemble(&schedule, &StateVector::plus(), &NoiseModel::none(), &cfg)?;
        let theta = theta_for_gamma_b(gamma_b)?;
        let [x, y, z] = ens.mean.bloch();
        println!(
            "{gate}: τ = {:.4}, θ = {theta:.4}, bloch = ({x:.5}, {y:.5}, {z:.5}), f = {:.7}",
            schedule.duration(),
            gate_fidelity(ens.mean.bloch(), theta, gamma_b)
        );
    }
    Ok(())
}
