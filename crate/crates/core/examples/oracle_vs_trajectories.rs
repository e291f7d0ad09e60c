//! Averages stochastic trajectories and compares the ensemble density
//! matrix with direct integration of the master equation.

use std::f64::consts::PI;

use geophase::experiments::GateKind;
use geophase::oracle::{integrate_lindblad, OracleConfig};
use geophase::qcore::{DensityMatrix, StateVector};
use geophase::qsd::{run_ensemble, IntegratorConfig, NoiseModel};
use geophase::schedule::{FrameParams, GateTimings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = GateKind::SingleAdiabatic { gamma_b: PI }
        .build(FrameParams::default(), GateTimings::default())?;
    let noise = NoiseModel::isotropic_single(0.005);
    let input = StateVector::plus();
    let exact = integrate_lindblad(
        &schedule,
        &DensityMatrix::from_pure(&input),
        &noise,
        &OracleConfig::default(),
    )?;
    for n in [50, 200, 800] {
        let cfg = IntegratorConfig {
            trajectories: n,
            ..IntegratorConfig::default()
        };
        let ens = run_ensemble(&schedule, &input, &noise, &cfg)?;
        println!(
            "N = {n:>4}: trace distance {:.4}",
            ens.rho.trace_distance(&exact.final_rho)?
        );
    }
    Ok(())
}
