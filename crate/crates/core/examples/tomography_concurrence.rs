//! Reconstructs two-qubit states from Pauli expectations and evaluates
//! their entanglement.

use std::f64::consts::PI;

use geophase::experiments::conditional_target;
use geophase::metrics::{
    concurrence, entropy, eof, expectations_from_rho, tomography, werner_state,
};
use geophase::qcore::DensityMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ideal = DensityMatrix::from_pure(&conditional_target(PI / 8.0));
    let rebuilt = tomography(&expectations_from_rho(&ideal))?;
    println!(
        "round trip error {:.1e}",
        rebuilt.as_operator().max_abs_diff(ideal.as_operator())
    );
    println!(
        "ideal output: C = {:.6}, EOF = {:.6}",
        concurrence(&rebuilt)?,
        eof(&rebuilt)?
    );
    for p in [0.2, 1.0 / 3.0, 0.6, 1.0] {
        let w = werner_state(p);
        println!(
            "werner p = {p:.3}: C = {:.4}, EOF = {:.4}, S = {:.4}",
            concurrence(&w)?,
            eof(&w)?,
            entropy(&w, 2.0)
        );
    }
    Ok(())
}
