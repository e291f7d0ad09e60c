//! Named noise sweeps over the gate family: each scenario runs one or more
//! series (gate × noise channel) across a grid of decoherence rates Γ and
//! tabulates fidelity loss, entropy and entanglement of formation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    concurrence, entropy, eof_from_concurrence, fidelity_state, find_gamma_threshold,
    gate_fidelity, EntanglementSample, MetricsError, ThresholdResult,
};
use crate::oracle::{integrate_lindblad, OracleConfig, OracleError};
use crate::qcore::{Axis, DensityMatrix, StateVector, C64};
use crate::qsd::{
    run_ensemble_with_plan, EnsembleResult, IntegratorConfig, NoiseModel, QsdError, Scheme,
    StepPlan,
};
use crate::schedule::{
    build_conditional_adiabatic, build_dynamic, build_fast_geometric, build_single_adiabatic,
    FrameParams, GateSpec, GateTimings, PulseSchedule, Qubit, ScheduleError,
};

/// Jackknife blocks for nonlinear ensemble metrics.
pub const JACKKNIFE_BLOCKS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("unknown scenario `{name}`; available: {available}")]
    UnknownScenario { name: String, available: String },
    #[error("could not parse `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("Γ grids differ between the compared series")]
    GridMismatch,
    #[error(transparent)]
    Qsd(#[from] QsdError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn parse_err(input: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Parse {
        input: input.to_string(),
        reason: reason.into(),
    }
}

/// Parses an angle written as a number or as a multiple/fraction of π
/// (`pi`, `pi/8`, `3pi/4`, `0.25pi`).
pub fn parse_angle(s: &str) -> Result<f64, ExperimentError> {
    let t = s.trim().to_ascii_lowercase();
    if let Some(idx) = t.find("pi") {
        let (coef, rest) = t.split_at(idx);
        let rest = &rest[2..];
        let coef = match coef.trim_end_matches('*') {
            "" => 1.0,
            "-" => -1.0,
            c => c
                .parse::<f64>()
                .map_err(|_| parse_err(s, "bad coefficient"))?,
        };
        let div = match rest {
            "" => 1.0,
            r => r
                .strip_prefix('/')
                .ok_or_else(|| parse_err(s, "expected `/` after pi"))?
                .parse::<f64>()
                .map_err(|_| parse_err(s, "bad divisor"))?,
        };
        Ok(coef * PI / div)
    } else {
        t.parse::<f64>().map_err(|_| parse_err(s, "not a number"))
    }
}

/// Gate under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GateKind {
    /// Adiabatic single-qubit Berry phase gate with phase γ_B.
    SingleAdiabatic { gamma_b: f64 },
    /// Adiabatic conditional phase gate with phase Δγ.
    ConditionalAdiabatic { delta_gamma: f64 },
    /// Free Ising evolution for π/J.
    Dynamic,
    /// Non-adiabatic geometric gate.
    FastGeometric,
}

impl GateKind {
    pub fn qubits(&self) -> usize {
        match self {
            GateKind::SingleAdiabatic { .. } => 1,
            _ => 2,
        }
    }

    pub fn build(
        &self,
        frame: FrameParams,
        timings: GateTimings,
    ) -> Result<PulseSchedule, ScheduleError> {
        match *self {
            GateKind::SingleAdiabatic { gamma_b } => {
                build_single_adiabatic(&GateSpec::for_berry_phase(gamma_b)?, frame, timings)
            }
            GateKind::ConditionalAdiabatic { delta_gamma } => {
                build_conditional_adiabatic(delta_gamma, frame, timings)
            }
            GateKind::Dynamic => build_dynamic(frame.coupling, PI / frame.coupling),
            GateKind::FastGeometric => build_fast_geometric(frame),
        }
    }

    /// |+⟩ or |+⟩|+⟩.
    pub fn input_state(&self) -> StateVector {
        let plus = StateVector::plus();
        match self.qubits() {
            1 => plus,
            _ => StateVector::product(&plus, &plus).expect("2x2 factors"),
        }
    }

    /// Ideal two-qubit output; `None` for the single-qubit gate.
    pub fn target_state(&self) -> Option<StateVector> {
        match *self {
            GateKind::SingleAdiabatic { .. } => None,
            GateKind::ConditionalAdiabatic { delta_gamma } => Some(conditional_target(delta_gamma)),
            GateKind::Dynamic | GateKind::FastGeometric => Some(conditional_target(PI / 8.0)),
        }
    }
}

/// ½(e^{−2iΔγ}, e^{2iΔγ}, e^{2iΔγ}, e^{−2iΔγ}).
pub fn conditional_target(delta_gamma: f64) -> StateVector {
    let a = C64::from_polar(0.5, -2.0 * delta_gamma);
    let b = C64::from_polar(0.5, 2.0 * delta_gamma);
    StateVector::new(&[a, b, b, a]).expect("unit norm")
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateKind::SingleAdiabatic { gamma_b } => write!(f, "single:{gamma_b:?}"),
            GateKind::ConditionalAdiabatic { delta_gamma } => {
                write!(f, "conditional:{delta_gamma:?}")
            }
            GateKind::Dynamic => write!(f, "dynamic"),
            GateKind::FastGeometric => write!(f, "fast"),
        }
    }
}

impl FromStr for GateKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let phase = || -> Result<f64, ExperimentError> {
            parse_angle(arg.ok_or_else(|| parse_err(s, "missing phase after `:`"))?)
        };
        match kind.trim() {
            "single" => Ok(GateKind::SingleAdiabatic { gamma_b: phase()? }),
            "conditional" => Ok(GateKind::ConditionalAdiabatic {
                delta_gamma: phase()?,
            }),
            "dynamic" if arg.is_none() => Ok(GateKind::Dynamic),
            "fast" if arg.is_none() => Ok(GateKind::FastGeometric),
            _ => Err(parse_err(
                s,
                "expected single:<γ_B>, conditional:<Δγ>, dynamic or fast",
            )),
        }
    }
}

impl TryFrom<String> for GateKind {
    type Error = ExperimentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GateKind> for String {
    fn from(g: GateKind) -> Self {
        g.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseAxis {
    X,
    Y,
    Z,
    Isotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseTargets {
    A,
    B,
    Both,
}

impl NoiseTargets {
    fn qubits(self) -> &'static [Qubit] {
        match self {
            NoiseTargets::A => &[Qubit::A],
            NoiseTargets::B => &[Qubit::B],
            NoiseTargets::Both => &[Qubit::A, Qubit::B],
        }
    }
}

/// Noise channel family, e.g. `z:a` or `isotropic:both`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NoiseSpec {
    pub axis: NoiseAxis,
    pub targets: NoiseTargets,
}

impl NoiseSpec {
    pub const fn new(axis: NoiseAxis, targets: NoiseTargets) -> Self {
        Self { axis, targets }
    }

    pub fn model(&self, gamma: f64) -> NoiseModel {
        let q = self.targets.qubits();
        match self.axis {
            NoiseAxis::X => NoiseModel::axis(Axis::X, q, gamma),
            NoiseAxis::Y => NoiseModel::axis(Axis::Y, q, gamma),
            NoiseAxis::Z => NoiseModel::axis(Axis::Z, q, gamma),
            NoiseAxis::Isotropic => NoiseModel::isotropic(q, gamma),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = match self.axis {
            NoiseAxis::X => "x",
            NoiseAxis::Y => "y",
            NoiseAxis::Z => "z",
            NoiseAxis::Isotropic => "isotropic",
        };
        let targets = match self.targets {
            NoiseTargets::A => "a",
            NoiseTargets::B => "b",
            NoiseTargets::Both => "both",
        };
        write!(f, "{axis}:{targets}")
    }
}

impl FromStr for NoiseSpec {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (axis, targets) = s.split_once(':').unwrap_or((s, "a"));
        let axis = match axis.trim() {
            "x" => NoiseAxis::X,
            "y" => NoiseAxis::Y,
            "z" => NoiseAxis::Z,
            "isotropic" => NoiseAxis::Isotropic,
            _ => return Err(parse_err(s, "noise axis must be x, y, z or isotropic")),
        };
        let targets = match targets.trim() {
            "a" => NoiseTargets::A,
            "b" => NoiseTargets::B,
            "both" => NoiseTargets::Both,
            _ => return Err(parse_err(s, "noise target must be a, b or both")),
        };
        Ok(Self { axis, targets })
    }
}

impl TryFrom<String> for NoiseSpec {
    type Error = ExperimentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NoiseSpec> for String {
    fn from(n: NoiseSpec) -> Self {
        n.to_string()
    }
}

/// One curve of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub gate: GateKind,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// N = 1000 trajectories at the default step.
    Full,
    /// N = 200 trajectories on a coarser grid.
    Fast,
    /// Direct master-equation integration.
    Oracle,
}

impl Mode {
    pub fn default_trajectories(self) -> usize {
        match self {
            Mode::Full => 1000,
            Mode::Fast => 200,
            Mode::Oracle => 0,
        }
    }

    pub fn default_dt(self) -> f64 {
        match self {
            Mode::Fast => 6.5e-4,
            Mode::Full | Mode::Oracle => crate::qsd::DEFAULT_DT,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Fast => "fast",
            Mode::Oracle => "oracle",
        })
    }
}

impl FromStr for Mode {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "fast" => Ok(Mode::Fast),
            "oracle" => Ok(Mode::Oracle),
            _ => Err(parse_err(s, "mode must be full, fast or oracle")),
        }
    }
}

/// Execution settings shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub mode: Mode,
    pub trajectories: usize,
    pub dt: f64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl RunSettings {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            mode,
            trajectories: mode.default_trajectories(),
            dt: mode.default_dt(),
            seed: 42,
            workers: None,
        }
    }

    fn integrator(&self, point: u64) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            scheme: Scheme::SplitStep,
            seed: self.seed,
            trajectories: self.trajectories,
            sample_stride: 0,
            stream: point << 32,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub series: Vec<Series>,
    pub grid: Vec<f64>,
    pub frame: FrameParams,
    pub timings: GateTimings,
}

/// `n` points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linear_grid(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Γ range over which ½(1 − e^{−4Γτ}) runs from 1e−3 to 0.45 at τ = 6.02π.
pub fn fig1_grid() -> Vec<f64> {
    log_grid(2.6e-5, 0.03, 13)
}

pub const SCENARIO_NAMES: [&str; 6] = ["fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b"];

fn series(label: &str, gate: GateKind, noise: &str) -> Series {
    Series {
        label: label.to_string(),
        gate,
        noise: noise.parse().expect("built-in noise spec"),
    }
}

impl Scenario {
    pub fn named(name: &str) -> Result<Self, ExperimentError> {
        let single = |gamma_b| GateKind::SingleAdiabatic { gamma_b };
        let cond = GateKind::ConditionalAdiabatic {
            delta_gamma: PI / 8.0,
        };
        let (description, series, grid) = match name {
            "fig1a" => (
                "single-qubit gate under x and z noise, γ_B = π/8 and π",
                vec![
                    series("pi8_z", single(PI / 8.0), "z:a"),
                    series("pi8_x", single(PI / 8.0), "x:a"),
                    series("pi_z", single(PI), "z:a"),
                    series("pi_x", single(PI), "x:a"),
                ],
                fig1_grid(),
            ),
            "fig1b" => (
                "single-qubit gate, γ_B = π, isotropic noise",
                vec![series("isotropic", single(PI), "isotropic:a")],
                fig1_grid(),
            ),
            "fig2a" => (
                "conditional gate, Δγ = π/8, isotropic noise on both qubits",
                vec![series("isotropic", cond, "isotropic:both")],
                linear_grid(0.0, 0.01, 11),
            ),
            "fig2b" => (
                "conditional gate, Δγ = π/8, x, z and isotropic noise on both qubits",
                vec![
                    series("x", cond, "x:both"),
                    series("z", cond, "z:both"),
                    series("isotropic", cond, "isotropic:both"),
                ],
                linear_grid(0.0, 0.01, 11),
            ),
            "fig3a" => (
                "dynamic gate, isotropic noise on both qubits",
                vec![series("isotropic", GateKind::Dynamic, "isotropic:both")],
                linear_grid(0.0, 3.0, 13),
            ),
            "fig3b" => (
                "fast geometric gate, isotropic noise on both qubits",
                vec![series(
                    "isotropic",
                    GateKind::FastGeometric,
                    "isotropic:both",
                )],
                linear_grid(0.0, 1.5, 13),
            ),
            _ => {
                return Err(ExperimentError::UnknownScenario {
                    name: name.to_string(),
                    available: SCENARIO_NAMES.join(", "),
                })
            }
        };
        Ok(Self {
            name: name.to_string(),
            description: description.to_string(),
            series,
            grid,
            frame: FrameParams::default(),
            timings: GateTimings::default(),
        })
    }

    /// Single-series scenario for an arbitrary gate and noise family.
    pub fn custom(gate: GateKind, noise: NoiseSpec, grid: Vec<f64>) -> Self {
        Self {
            name: "custom".to_string(),
            description: format!("{gate} under {noise} noise"),
            series: vec![Series {
                label: "custom".to_string(),
                gate,
                noise,
            }],
            grid,
            frame: FrameParams::default(),
            timings: GateTimings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.series.is_empty() {
            return Err(ExperimentError::Invalid("no series".into()));
        }
        if self.grid.is_empty() {
            return Err(ExperimentError::Invalid("empty Γ grid".into()));
        }
        if let Some(g) = self.grid.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(ExperimentError::Invalid(format!(
                "negative or non-finite Γ {g}"
            )));
        }
        for s in &self.series {
            if s.gate.qubits() == 1 && s.noise.targets != NoiseTargets::A {
                return Err(ExperimentError::Invalid(format!(
                    "series {}: single-qubit gate only admits noise on qubit a",
                    s.label
                )));
            }
        }
        Ok(())
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub loss: f64,
    pub entropy: f64,
    pub eof: Option<f64>,
    pub concurrence: Option<f64>,
    pub se_loss: f64,
    pub se_entropy: f64,
    pub se_eof: Option<f64>,
    pub se_concurrence: Option<f64>,
    pub tau: f64,
    pub n_traj: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub label: String,
    pub gate: GateKind,
    pub noise: NoiseSpec,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub series: Vec<SeriesResult>,
}

impl ScenarioResult {
    pub fn series(&self, label: &str) -> Option<&SeriesResult> {
        self.series.iter().find(|s| s.label == label)
    }
}

/// Prepared gate: schedule, shared step plan and metric targets.
#[derive(Debug, Clone)]
pub struct PreparedGate {
    pub gate: GateKind,
    pub schedule: PulseSchedule,
    pub input: StateVector,
    plan: Option<StepPlan>,
    theta: f64,
}

impl PreparedGate {
    pub fn new(
        gate: GateKind,
        frame: FrameParams,
        timings: GateTimings,
        settings: &RunSettings,
    ) -> Result<Self, ExperimentError> {
        let schedule = gate.build(frame, timings)?;
        let plan = match settings.mode {
            Mode::Oracle => None,
            _ => Some(StepPlan::new(&schedule, settings.dt, Scheme::SplitStep)?),
        };
        let theta = match gate {
            GateKind::SingleAdiabatic { gamma_b } => GateSpec::for_berry_phase(gamma_b)?.theta,
            _ => 0.0,
        };
        Ok(Self {
            gate,
            input: gate.input_state(),
            schedule,
            plan,
            theta,
        })
    }

    pub fn tau(&self) -> f64 {
        self.schedule.duration()
    }

    fn ensemble(
        &self,
        noise: &NoiseModel,
        settings: &RunSettings,
        point: u64,
    ) -> Result<EnsembleResult, ExperimentError> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| ExperimentError::Invalid("gate prepared for oracle mode".into()))?;
        Ok(run_ensemble_with_plan(
            plan,
            &self.input,
            noise,
            &settings.integrator(point),
        )?)
    }

    fn oracle_rho(
        &self,
        noise: &NoiseModel,
        settings: &RunSettings,
    ) -> Result<DensityMatrix, ExperimentError> {
        let run = integrate_lindblad(
            &self.schedule,
            &DensityMatrix::from_pure(&self.input),
            noise,
            &OracleConfig {
                dt: settings.dt,
                sample_stride: 0,
            },
        )?;
        Ok(run.final_rho)
    }

    fn loss_of_rho(&self, rho: &DensityMatrix) -> Result<f64, ExperimentError> {
        let f = match self.gate.target_state() {
            None => {
                let b = crate::metrics::expectations_from_rho(rho).bloch();
                gate_fidelity(b, self.theta, self.gamma_b())
            }
            Some(t) => fidelity_state(rho, &t)?,
        };
        Ok((1.0 - f).clamp(0.0, 1.0))
    }

    fn gamma_b(&self) -> f64 {
        match self.gate {
            GateKind::SingleAdiabatic { gamma_b } => gamma_b,
            _ => 0.0,
        }
    }

    fn entropy_base(&self) -> f64 {
        if self.gate.qubits() == 1 {
            2.0
        } else {
            4.0
        }
    }

    /// Metrics at one noise rate.
    pub fn evaluate(
        &self,
        noise: NoiseSpec,
        gamma: f64,
        settings: &RunSettings,
        point: u64,
    ) -> Result<SweepRow, ExperimentError> {
        let model = noise.model(gamma);
        let two = self.gate.qubits() == 2;
        let base = self.entropy_base();
        let mut row = SweepRow {
            gamma,
            loss: 0.0,
            entropy: 0.0,
            eof: None,
            concurrence: None,
            se_loss: 0.0,
            se_entropy: 0.0,
            se_eof: None,
            se_concurrence: None,
            tau: self.tau(),
            n_traj: 0,
            seed: settings.seed,
        };
        if settings.mode == Mode::Oracle {
            let rho = self.oracle_rho(&model, settings)?;
            row.loss = self.loss_of_rho(&rho)?;
            row.entropy = entropy(&rho, base).min(1.0);
            if two {
                let c = concurrence(&rho)?;
                row.concurrence = Some(c);
                row.eof = Some(eof_from_concurrence(c));
                row.se_concurrence = Some(0.0);
                row.se_eof = Some(0.0);
            }
            return Ok(row);
        }

        let ens = self.ensemble(&model, settings, point)?;
        row.n_traj = ens.trajectories();
        let per_traj = match self.gate.target_state() {
            None => ens.per_trajectory(|psi| {
                let b = crate::metrics::ExpectationTable::from_state(psi).bloch();
                1.0 - gate_fidelity(b, self.theta, self.gamma_b())
            }),
            Some(t) => ens.per_trajectory(|psi| 1.0 - t.overlap(psi).expect("matching dimension")),
        };
        row.loss = per_traj.value.clamp(0.0, 1.0);
        row.se_loss = per_traj.std_err;
        let s = ens.jackknife(JACKKNIFE_BLOCKS, |rho| entropy(rho, base).min(1.0))?;
        row.entropy = s.value;
        row.se_entropy = s.std_err;
        if two {
            let c = ens.jackknife(JACKKNIFE_BLOCKS, |rho| concurrence(rho).unwrap_or(0.0))?;
            let e = ens.jackknife(JACKKNIFE_BLOCKS, |rho| {
                eof_from_concurrence(concurrence(rho).unwrap_or(0.0))
            })?;
            row.concurrence = Some(c.value);
            row.se_concurrence = Some(c.std_err);
            row.eof = Some(e.value);
            row.se_eof = Some(e.std_err);
        }
        Ok(row)
    }
}

fn in_pool<T: Send>(
    workers: Option<usize>,
    work: impl FnOnce() -> T + Send,
) -> Result<T, ExperimentError> {
    match workers {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| QsdError::WorkerPool(e.to_string()))?;
            Ok(pool.install(work))
        }
    }
}

/// Runs every series of `scenario` over its Γ grid. Grid points execute
/// concurrently; point `k` draws its noise from streams `k·2³² + j`, so the
/// table is identical for any worker count. `progress` receives
/// `(completed, total)` after each point.
pub fn run_scenario(
    scenario: &Scenario,
    settings: &RunSettings,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<ScenarioResult, ExperimentError> {
    scenario.validate()?;
    if settings.mode != Mode::Oracle && settings.trajectories == 0 {
        return Err(ExperimentError::Invalid(
            "need at least one trajectory".into(),
        ));
    }
    let total = scenario.series.len() * scenario.grid.len();
    let done = AtomicUsize::new(0);
    in_pool(settings.workers, || {
        let mut out = Vec::with_capacity(scenario.series.len());
        for s in &scenario.series {
            let prepared = PreparedGate::new(s.gate, scenario.frame, scenario.timings, settings)?;
            let rows: Vec<Result<SweepRow, ExperimentError>> = scenario
                .grid
                .par_iter()
                .enumerate()
                .map(|(k, &gamma)| {
                    let r = prepared.evaluate(s.noise, gamma, settings, k as u64);
                    let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                    if let Some(p) = progress {
                        p(n, total);
                    }
                    r
                })
                .collect();
            out.push(SeriesResult {
                label: s.label.clone(),
                gate: s.gate,
                noise: s.noise,
                rows: rows.into_iter().collect::<Result<_, _>>()?,
            });
        }
        Ok(ScenarioResult {
            name: scenario.name.clone(),
            series: out,
        })
    })?
}

/// Per-Γ comparison of z- and x-noise losses.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyReport {
    /// `(Γ, loss_z / loss_x)` for every grid point where both are nonzero.
    pub ratios: Vec<(f64, f64)>,
    /// `(Γ, (loss_z − loss_x) / √(se_z² + se_x²))`.
    pub significance: Vec<(f64, f64)>,
    /// Axis with the larger loss at every compared point, if any.
    pub dominant: Option<Axis>,
}

pub fn compare_anisotropy(
    x: &[SweepRow],
    z: &[SweepRow],
) -> Result<AnisotropyReport, ExperimentError> {
    if x.len() != z.len() || x.iter().zip(z).any(|(a, b)| a.gamma != b.gamma) {
        return Err(ExperimentError::GridMismatch);
    }
    let mut ratios = Vec::new();
    let mut significance = Vec::new();
    for (a, b) in x.iter().zip(z) {
        if a.gamma > 0.0 && a.loss > 0.0 && b.loss > 0.0 {
            ratios.push((a.gamma, b.loss / a.loss));
        }
        let se = (a.se_loss.powi(2) + b.se_loss.powi(2)).sqrt();
        if a.gamma > 0.0 && se > 0.0 {
            significance.push((a.gamma, (b.loss - a.loss) / se));
        }
    }
    let dominant = if ratios.is_empty() {
        None
    } else if ratios.iter().all(|r| r.1 > 1.0) {
        Some(Axis::Z)
    } else if ratios.iter().all(|r| r.1 < 1.0) {
        Some(Axis::X)
    } else {
        None
    };
    Ok(AnisotropyReport {
        ratios,
        significance,
        dominant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    /// Fitted c in ½(1 − e^{−cΓ}).
    pub c: f64,
    /// c/(4τ); one for the isotropic law.
    pub c_over_4tau: f64,
    pub max_residual: f64,
}

/// Least-squares fit of 1 − f = ½(1 − e^{−cΓ}) by Gauss–Newton.
pub fn fit_exponential_loss(
    rows: &[SweepRow],
    tau: f64,
) -> Result<ExponentialFit, ExperimentError> {
    if rows.len() < 4 {
        return Err(ExperimentError::Invalid(format!(
            "need at least 4 points for the fit, got {}",
            rows.len()
        )));
    }
    let g0 = rows[0].gamma;
    if rows.iter().all(|r| r.gamma == g0) || rows.iter().all(|r| r.gamma == 0.0) {
        return Err(ExperimentError::Invalid("degenerate Γ grid".into()));
    }
    let model = |c: f64, g: f64| 0.5 * (1.0 - (-c * g).exp());
    let sgg: f64 = rows.iter().map(|r| r.gamma * r.gamma).sum();
    let sgy: f64 = rows.iter().map(|r| r.gamma * r.loss).sum();
    let mut c = (2.0 * sgy / sgg).max(0.0);
    for _ in 0..100 {
        let (mut jtj, mut jtr) = (0.0, 0.0);
        for r in rows {
            let j = 0.5 * r.gamma * (-c * r.gamma).exp();
            jtj += j * j;
            jtr += j * (r.loss - model(c, r.gamma));
        }
        if jtj == 0.0 {
            break;
        }
        let next = (c + jtr / jtj).max(0.0);
        let done = (next - c).abs() <= 1e-14 * c.max(1.0);
        c = next;
        if done {
            break;
        }
    }
    let max_residual = rows
        .iter()
        .map(|r| (r.loss - model(c, r.gamma)).abs())
        .fold(0.0, f64::max);
    Ok(ExponentialFit {
        c,
        c_over_4tau: c / (4.0 * tau),
        max_residual,
    })
}

/// Entanglement-death threshold of `gate` under `noise`, bracketed by
/// `bracket`. Each bisection step runs a full ensemble (or the oracle).
pub fn find_threshold(
    gate: GateKind,
    noise: NoiseSpec,
    bracket: (f64, f64),
    settings: &RunSettings,
) -> Result<ThresholdResult, ExperimentError> {
    if gate.qubits() != 2 {
        return Err(ExperimentError::Invalid(
            "threshold needs a two-qubit gate".into(),
        ));
    }
    in_pool(settings.workers, || {
        let prepared = PreparedGate::new(
            gate,
            FrameParams::default(),
            GateTimings::default(),
            settings,
        )?;
        find_gamma_threshold(bracket, prepared.tau(), settings.trajectories, |gamma| {
            let row = prepared.evaluate(noise, gamma, settings, 0)?;
            Ok::<_, ExperimentError>(EntanglementSample {
                concurrence: row.concurrence.unwrap_or(0.0),
                concurrence_err: row.se_concurrence.unwrap_or(0.0),
            })
        })
    })?
}
