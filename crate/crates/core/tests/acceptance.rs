//! Acceptance run: evaluates every acceptance criterion and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use geophase::cli::emit_result;
use geophase::experiments::{
    compare_anisotropy, conditional_target, fig1_grid, find_threshold, run_scenario, GateKind,
    Mode, NoiseSpec, PreparedGate, RunSettings, Scenario, SweepRow,
};
use geophase::metrics::{
    concurrence, eof, eof_from_concurrence, werner_concurrence, werner_state, ThresholdResult,
};
use geophase::oracle::{integrate_lindblad, OracleConfig};
use geophase::qcore::{Axis, DensityMatrix, StateVector, C64};
use geophase::qsd::{run_ensemble, IntegratorConfig, NoiseModel};
use geophase::schedule::{FrameParams, GateTimings, PulseSchedule, Segment};

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn full() -> RunSettings {
    RunSettings::for_mode(Mode::Full)
}

fn oracle() -> RunSettings {
    RunSettings::for_mode(Mode::Oracle)
}

fn noise(s: &str) -> NoiseSpec {
    s.parse().expect("valid noise spec")
}

fn single_row(gate: GateKind, settings: &RunSettings) -> Result<SweepRow, String> {
    let p = PreparedGate::new(
        gate,
        FrameParams::default(),
        GateTimings::default(),
        settings,
    )
    .map_err(err)?;
    p.evaluate(noise("isotropic:a"), 0.0, settings, 0)
        .map_err(err)
}

fn law(gamma: f64, tau: f64) -> f64 {
    0.5 * (1.0 - (-4.0 * gamma * tau).exp())
}

fn ac1() -> Outcome {
    let mut s = full();
    s.trajectories = 1;
    let f_pi = 1.0 - single_row(GateKind::SingleAdiabatic { gamma_b: PI }, &s)?.loss;
    let f_pi8 = 1.0 - single_row(GateKind::SingleAdiabatic { gamma_b: PI / 8.0 }, &s)?.loss;
    Ok((
        f_pi >= 0.9998 && f_pi8 >= 0.9999,
        format!("f(π) = {f_pi:.7}, f(π/8) = {f_pi8:.7}"),
    ))
}

fn ac2() -> Outcome {
    let mut s = full();
    s.trajectories = 1;
    let gate = GateKind::ConditionalAdiabatic {
        delta_gamma: PI / 8.0,
    };
    let p =
        PreparedGate::new(gate, FrameParams::default(), GateTimings::default(), &s).map_err(err)?;
    let row = p
        .evaluate(noise("isotropic:both"), 0.0, &s, 0)
        .map_err(err)?;
    let f = 1.0 - row.loss;
    let c = row.concurrence.unwrap_or(0.0);
    Ok((
        f >= 0.999 && c >= 0.999,
        format!("fidelity {f:.6}, concurrence {c:.6}"),
    ))
}

/// Rows of the γ_B = π isotropic sweep shared by criteria 3 and 12.
struct Fig1b {
    qsd: Vec<SweepRow>,
    oracle: Vec<SweepRow>,
}

fn fig1b_runs() -> Result<Fig1b, String> {
    let mut grid: Vec<f64> = fig1_grid()[..3].to_vec();
    grid.extend([0.002, 0.005, 0.01]);
    let mut sc = Scenario::named("fig1b").map_err(err)?;
    sc.grid = grid;
    let qsd = run_scenario(&sc, &full(), None).map_err(err)?;
    let orc = run_scenario(&sc, &oracle(), None).map_err(err)?;
    Ok(Fig1b {
        qsd: qsd.series[0].rows.clone(),
        oracle: orc.series[0].rows.clone(),
    })
}

fn ac3(f: &Fig1b) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, o) in f.qsd[3..].iter().zip(&f.oracle[3..]) {
        let l = law(q.gamma, q.tau);
        let dq = (q.loss - l).abs();
        let dor = (o.loss - l).abs();
        ok &= dq <= 0.02 && dor <= 5e-3;
        parts.push(format!("Γ={}: |Δ|qsd={dq:.4}, |Δ|oracle={dor:.5}", q.gamma));
    }
    Ok((ok, parts.join("; ")))
}

fn ac4() -> Outcome {
    let r = run_scenario(&Scenario::named("fig1a").map_err(err)?, &full(), None).map_err(err)?;
    let rows = |l: &str| {
        r.series(l)
            .map(|s| s.rows.clone())
            .ok_or(format!("missing series {l}"))
    };
    let small = compare_anisotropy(&rows("pi8_x")?, &rows("pi8_z")?).map_err(err)?;
    let large = compare_anisotropy(&rows("pi_x")?, &rows("pi_z")?).map_err(err)?;
    let n = rows("pi8_x")?.iter().filter(|r| r.gamma > 0.0).count();
    let min_sig = small
        .significance
        .iter()
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);
    let ordered = small.significance.len() == n && min_sig >= 2.0;
    let closer = small.ratios.len() == large.ratios.len()
        && small
            .ratios
            .iter()
            .zip(&large.ratios)
            .all(|(a, b)| a.0 == b.0 && b.1.ln().abs() < a.1.ln().abs());
    let range = |v: &[(f64, f64)]| {
        let lo = v.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = v.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.3}, {hi:.3}]")
    };
    Ok((
        ordered && closer,
        format!(
            "z/x loss ratio γ_B=π/8 {}, γ_B=π {}; min z−x significance {min_sig:.1} SE",
            range(&small.ratios),
            range(&large.ratios)
        ),
    ))
}

fn threshold(gate: GateKind, bracket: (f64, f64)) -> Result<ThresholdResult, String> {
    find_threshold(gate, noise("isotropic:both"), bracket, &full()).map_err(err)
}

fn ac5(adiabatic: &ThresholdResult) -> Outcome {
    let g = adiabatic.gamma_thres;
    Ok((
        (0.0035..=0.0055).contains(&g),
        format!(
            "Γ_thres = {g:.5} (±{:.1e}), τ = {:.4}",
            adiabatic.bracket_width, adiabatic.tau
        ),
    ))
}

fn ac6(adiabatic: &ThresholdResult, dynamic: &ThresholdResult) -> Outcome {
    let target = 4.0 * PI / 75.0;
    let rel = |t: &ThresholdResult| (t.product / target - 1.0).abs();
    Ok((
        rel(adiabatic) <= 0.15 && rel(dynamic) <= 0.15,
        format!(
            "Γτ adiabatic {:.4}, dynamic {:.4}, 4π/75 = {target:.4}",
            adiabatic.product, dynamic.product
        ),
    ))
}

fn ac7(dynamic: &ThresholdResult, fast: &ThresholdResult) -> Outcome {
    let ratio_exact = (fast.tau - 2.0 * dynamic.tau).abs() <= 1e-12;
    Ok((
        (dynamic.gamma_thres - 2.0).abs() <= 0.3
            && (fast.gamma_thres - 0.945).abs() <= 0.15
            && ratio_exact,
        format!(
            "Γ_thres dynamic {:.3}, fast {:.3}; τ_fast/τ_dyn = {:.12}",
            dynamic.gamma_thres,
            fast.gamma_thres,
            fast.tau / dynamic.tau
        ),
    ))
}

fn dephasing_schedule(duration: f64) -> PulseSchedule {
    PulseSchedule {
        qubits: 1,
        frame: FrameParams {
            delta_omega: 0.0,
            ..FrameParams::default()
        },
        segments: vec![Segment::FreeEvolution { duration }],
    }
}

fn ac8() -> Outcome {
    let cfg = IntegratorConfig::default();
    let cases: Vec<(&str, PulseSchedule, StateVector, NoiseModel)> = vec![
        (
            "dephasing",
            dephasing_schedule(1.0),
            StateVector::plus(),
            NoiseModel::z_noise(0.5),
        ),
        (
            "isotropic 1q gate",
            GateKind::SingleAdiabatic { gamma_b: PI }
                .build(FrameParams::default(), GateTimings::default())
                .map_err(err)?,
            StateVector::plus(),
            NoiseModel::isotropic_single(0.005),
        ),
        (
            "conditional gate",
            GateKind::ConditionalAdiabatic {
                delta_gamma: PI / 8.0,
            }
            .build(FrameParams::default(), GateTimings::default())
            .map_err(err)?,
            GateKind::Dynamic.input_state(),
            NoiseModel::isotropic_both(0.002),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, s, input, model) in cases {
        let ens = run_ensemble(&s, &input, &model, &cfg).map_err(err)?;
        let orc = integrate_lindblad(
            &s,
            &DensityMatrix::from_pure(&input),
            &model,
            &OracleConfig::default(),
        )
        .map_err(err)?;
        let d = ens.rho.trace_distance(&orc.final_rho).map_err(err)?;
        ok &= d <= 0.03;
        parts.push(format!("{name} {d:.4}"));
    }
    Ok((ok, format!("trace distances: {}", parts.join(", "))))
}

fn ac9() -> Outcome {
    let gamma = 0.5;
    let duration = 2.0;
    let cfg = IntegratorConfig {
        dt: 1e-3,
        sample_stride: 200,
        ..IntegratorConfig::default()
    };
    let ens = run_ensemble(
        &dephasing_schedule(duration),
        &StateVector::plus(),
        &NoiseModel::z_noise(gamma),
        &cfg,
    )
    .map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for s in ens.samples.iter().skip(1) {
        let expected = (-2.0 * gamma * s.time).exp();
        let got = s.mean.single(Axis::X);
        let se = s.std_err.single(Axis::X);
        worst = worst.max((got - expected).abs() / se);
        count += 1;
    }
    Ok((
        count == 10 && worst <= 3.0,
        format!("{count} sampled times, worst deviation {worst:.2} SE"),
    ))
}

fn ac10() -> Outcome {
    let mut worst: f64 = 0.0;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let bells = [
        [C64::new(h, 0.0), z, z, C64::new(h, 0.0)],
        [C64::new(h, 0.0), z, z, C64::new(-h, 0.0)],
        [z, C64::new(h, 0.0), C64::new(h, 0.0), z],
        [z, C64::new(h, 0.0), C64::new(-h, 0.0), z],
    ];
    for b in bells {
        let rho = DensityMatrix::from_pure(&StateVector::new(&b).map_err(err)?);
        worst = worst.max((concurrence(&rho).map_err(err)? - 1.0).abs());
        worst = worst.max((eof(&rho).map_err(err)? - 1.0).abs());
    }
    let a = StateVector::new(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).map_err(err)?;
    let b = StateVector::new(&[C64::new(0.28, 0.96), C64::new(0.0, 0.0)]).map_err(err)?;
    let prod = DensityMatrix::from_pure(&StateVector::product(&a, &b).map_err(err)?);
    worst = worst
        .max(concurrence(&prod).map_err(err)?)
        .max(eof(&prod).map_err(err)?);
    for dg in [PI / 8.0, PI / 16.0, 0.3] {
        // C = |sin 4Δγ| for the ideal conditional output
        let rho = DensityMatrix::from_pure(&conditional_target(dg));
        let c = concurrence(&rho).map_err(err)?;
        worst = worst.max((c - (4.0 * dg).sin().abs()).abs());
        worst = worst
            .max((eof(&rho).map_err(err)? - eof_from_concurrence((4.0 * dg).sin().abs())).abs());
    }
    for p in [0.0, 0.25, 1.0 / 3.0, 0.5, 0.75, 0.9, 1.0] {
        let rho = werner_state(p);
        worst = worst.max((concurrence(&rho).map_err(err)? - werner_concurrence(p)).abs());
        worst = worst
            .max((eof(&rho).map_err(err)? - eof_from_concurrence(werner_concurrence(p))).abs());
    }
    Ok((worst <= 1e-8, format!("max deviation {worst:.2e}")))
}

fn ac11() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut sc = Scenario::named("fig3a").map_err(err)?;
    sc.grid = vec![0.0, 0.5, 1.5, 2.5];
    let mut files = Vec::new();
    for workers in [1, 2, 8] {
        let mut s = RunSettings::for_mode(Mode::Fast);
        s.workers = Some(workers);
        let r = run_scenario(&sc, &s, None).map_err(err)?;
        let out = dir.path().join(format!("w{workers}.csv"));
        emit_result(&r, &out).map_err(err)?;
        files.push(std::fs::read(&out).map_err(err)?);
    }
    let same = files.windows(2).all(|w| w[0] == w[1]);
    Ok((
        same,
        format!("{} bytes per file, identical: {same}", files[0].len()),
    ))
}

fn ac12(f: &Fig1b) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &f.qsd[..3] {
        let se = (r.se_entropy.powi(2) + r.se_loss.powi(2)).sqrt();
        let z = (r.entropy - r.loss) / se;
        ok &= r.entropy > r.loss && z >= 2.0;
        parts.push(format!(
            "Γ={:.2e}: S={:.4}, 1−f={:.5} ({z:.1} SE)",
            r.gamma, r.entropy, r.loss
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failures = 0;
    let mut report = |n: usize, title: &str, outcome: Outcome| {
        let (pass, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "AC{n:02} {}: {title}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };

    report(1, "zero-noise single-qubit gate", ac1());
    report(2, "zero-noise conditional gate", ac2());
    let fig1b = fig1b_runs();
    match &fig1b {
        Ok(f) => report(3, "isotropic law", ac3(f)),
        Err(e) => report(3, "isotropic law", Err(e.clone())),
    }
    report(4, "anisotropy ordering", ac4());
    let adiabatic = threshold(
        GateKind::ConditionalAdiabatic {
            delta_gamma: PI / 8.0,
        },
        (0.002, 0.008),
    );
    let dynamic = threshold(GateKind::Dynamic, (0.5, 4.0));
    let fast = threshold(GateKind::FastGeometric, (0.25, 2.0));
    match &adiabatic {
        Ok(a) => report(5, "entanglement threshold", ac5(a)),
        Err(e) => report(5, "entanglement threshold", Err(e.clone())),
    }
    match (&adiabatic, &dynamic) {
        (Ok(a), Ok(d)) => report(6, "time-decoherence product", ac6(a, d)),
        (Err(e), _) | (_, Err(e)) => report(6, "time-decoherence product", Err(e.clone())),
    }
    match (&dynamic, &fast) {
        (Ok(d), Ok(f)) => report(7, "dynamic and fast gates", ac7(d, f)),
        (Err(e), _) | (_, Err(e)) => report(7, "dynamic and fast gates", Err(e.clone())),
    }
    report(8, "oracle equivalence", ac8());
    report(9, "analytic dephasing", ac9());
    report(10, "entanglement metric oracles", ac10());
    report(11, "determinism across worker counts", ac11());
    match &fig1b {
        Ok(f) => report(12, "entropy rises faster than loss", ac12(f)),
        Err(e) => report(12, "entropy rises faster than loss", Err(e.clone())),
    }

    println!("{} of 12 criteria passed", 12 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
