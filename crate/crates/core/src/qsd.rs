//! Quantum state diffusion: stochastic pure-state trajectories whose
//! ensemble average solves the Lindblad master equation.
//!
//! Each step (Itô, split-step scheme) applies the exact propagator of the
//! midpoint Hamiltonian and then the Euler update
//!
//! ```text
//! |dψ⟩ = Σ_m (⟨L_m†⟩L_m − ½L_m†L_m − ½⟨L_m†⟩⟨L_m⟩)|ψ⟩dt + Σ_m (L_m − ⟨L_m⟩)|ψ⟩dξ_m
//! ```
//!
//! with complex Wiener increments `M(dξ_i dξ_j*) = δ_ij dt`, followed by
//! renormalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{tomography, ExpectationTable};
use crate::qcore::{
    eigh, pauli, Axis, DensityMatrix, LinalgError, Operator, StateVector, C64, MAX_DIM,
};
use crate::schedule::{embed, PulseSchedule, Qubit, ScheduleError};

/// Split-step stability bound on ‖H‖·dt.
pub const MAX_PHASE_PER_STEP: f64 = 0.05;

/// Norm below which a step is declared unstable.
pub const NORM_COLLAPSE: f64 = 1e-6;

pub const DEFAULT_DT: f64 = 5e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdError {
    #[error("trajectory {trajectory} collapsed at t = {time} (norm {norm:e}); reduce dt")]
    NormCollapse {
        trajectory: u64,
        time: f64,
        norm: f64,
    },
    #[error("step too large: max ‖H‖·dt = {phase} exceeds {MAX_PHASE_PER_STEP}")]
    StepTooLarge { phase: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("channel operator has dimension {got}, system needs {expected}")]
    ChannelDimension { expected: usize, got: usize },
    #[error("could not start worker pool: {0}")]
    WorkerPool(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelOperator {
    Pauli(Axis),
    /// Either a 2×2 operator embedded on the channel's target qubit or a
    /// full-register operator.
    Generic(Operator),
}

/// One Lindblad operator L = κ·O acting on `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladChannel {
    pub target: Qubit,
    pub operator: ChannelOperator,
    pub kappa: f64,
}

impl LindbladChannel {
    pub fn pauli(target: Qubit, axis: Axis, kappa: f64) -> Self {
        Self {
            target,
            operator: ChannelOperator::Pauli(axis),
            kappa,
        }
    }

    pub fn generic(target: Qubit, op: Operator, kappa: f64) -> Self {
        Self {
            target,
            operator: ChannelOperator::Generic(op),
            kappa,
        }
    }

    /// Γ = κ².
    pub fn rate(&self) -> f64 {
        self.kappa * self.kappa
    }

    /// Full-register operator L.
    pub fn full_operator(&self, qubits: usize) -> Result<Operator, QsdError> {
        let dim = 1usize << qubits;
        let base = match &self.operator {
            ChannelOperator::Pauli(axis) => embed(&pauli(*axis), self.target, qubits),
            ChannelOperator::Generic(op) if op.dim() == dim => *op,
            ChannelOperator::Generic(op) if op.dim() == 2 => embed(op, self.target, qubits),
            ChannelOperator::Generic(op) => {
                return Err(QsdError::ChannelDimension {
                    expected: dim,
                    got: op.dim(),
                })
            }
        };
        Ok(base.scale_re(self.kappa))
    }
}

/// A set of independent Lindblad channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseModel {
    pub channels: Vec<LindbladChannel>,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    /// L = κσ_axis on each listed qubit, with Γ = κ².
    pub fn axis(axis: Axis, qubits: &[Qubit], gamma: f64) -> Self {
        let kappa = gamma.max(0.0).sqrt();
        Self {
            channels: qubits
                .iter()
                .map(|&q| LindbladChannel::pauli(q, axis, kappa))
                .collect(),
        }
    }

    /// Three independent channels κσx, κσy, κσz on each listed qubit.
    pub fn isotropic(qubits: &[Qubit], gamma: f64) -> Self {
        let kappa = gamma.max(0.0).sqrt();
        let channels = qubits
            .iter()
            .flat_map(|&q| Axis::XYZ.map(|a| LindbladChannel::pauli(q, a, kappa)))
            .collect();
        Self { channels }
    }

    pub fn x_noise(gamma: f64) -> Self {
        Self::axis(Axis::X, &[Qubit::A], gamma)
    }

    pub fn z_noise(gamma: f64) -> Self {
        Self::axis(Axis::Z, &[Qubit::A], gamma)
    }

    pub fn isotropic_single(gamma: f64) -> Self {
        Self::isotropic(&[Qubit::A], gamma)
    }

    pub fn isotropic_both(gamma: f64) -> Self {
        Self::isotropic(&[Qubit::A, Qubit::B], gamma)
    }

    /// Full-register operators of all channels with κ ≠ 0.
    pub fn operators(&self, qubits: usize) -> Result<Vec<Operator>, QsdError> {
        self.channels
            .iter()
            .filter(|c| c.kappa != 0.0)
            .map(|c| c.full_operator(qubits))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact midpoint propagator followed by an Euler noise kick.
    SplitStep,
    /// Plain Euler–Maruyama on the full drift.
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub trajectories: usize,
    /// Record expectations every `sample_stride` integration steps (0: off).
    pub sample_stride: usize,
    /// Offset added to the trajectory index before seed derivation.
    pub stream: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            scheme: Scheme::SplitStep,
            seed: 42,
            trajectories: 1000,
            sample_stride: 0,
            stream: 0,
            workers: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), QsdError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QsdError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.trajectories == 0 {
            return Err(QsdError::InvalidConfig(
                "need at least one trajectory".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(QsdError::InvalidConfig(
                "worker count must be positive".into(),
            ));
        }
        Ok(())
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-trajectory seed: SplitMix64 finalizer over `master ⊕ φ·index`.
///
/// The map index → seed is a bijection for fixed `master`, so distinct
/// indices always get distinct streams.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ GOLDEN_GAMMA.wrapping_mul(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Fills `out` with independent complex Gaussian increments whose real and
/// imaginary parts are N(0, dt/2), using the polar form of Box–Muller.
pub fn wiener_increments<R: Rng + ?Sized>(rng: &mut R, dt: f64, out: &mut [C64]) {
    let scale = (0.5 * dt).sqrt();
    for z in out.iter_mut() {
        loop {
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let v = 2.0 * rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s < 1.0 && s > 0.0 {
                let f = (-2.0 * s.ln() / s).sqrt() * scale;
                *z = C64::new(u * f, v * f);
                break;
            }
        }
    }
}

/// Channel operator prepared for the noise kick.
#[derive(Debug, Clone, Copy)]
enum ChannelOps {
    /// Hermitian L with one nonzero per row and L² = κ²I (scaled Pauli
    /// strings): (Lψ)_r = phase_r ψ_{perm_r}.
    Monomial {
        perm: [usize; MAX_DIM],
        phase: [C64; MAX_DIM],
        kappa_sq: f64,
    },
    General {
        l: Operator,
        ldl: Operator,
    },
}

fn classify(l: &Operator) -> ChannelOps {
    let dim = l.dim();
    let ldl = l.adjoint().matmul_unchecked(l);
    let kappa_sq = ldl[(0, 0)].re;
    let mut perm = [0; MAX_DIM];
    let mut phase = [C64::new(0.0, 0.0); MAX_DIM];
    let mut monomial = l.is_hermitian(0.0);
    for r in 0..dim {
        let nonzero: Vec<usize> = (0..dim)
            .filter(|&c| l[(r, c)] != C64::new(0.0, 0.0))
            .collect();
        if nonzero.len() != 1 {
            monomial = false;
            break;
        }
        perm[r] = nonzero[0];
        phase[r] = l[(r, nonzero[0])];
    }
    let scalar = Operator::identity(dim)
        .map(|id| id.scale_re(kappa_sq).max_abs_diff(&ldl) <= 1e-15 * kappa_sq.max(1.0))
        .unwrap_or(false);
    if monomial && scalar {
        ChannelOps::Monomial {
            perm,
            phase,
            kappa_sq,
        }
    } else {
        ChannelOps::General { l: *l, ldl }
    }
}

fn channel_ops(ops: &[Operator]) -> Vec<ChannelOps> {
    ops.iter().map(classify).collect()
}

/// Adds the Lindblad drift and diffusion terms to `psi` in place. Every
/// channel is evaluated at the incoming state.
#[inline]
fn noise_kick(dim: usize, psi: &mut [C64; MAX_DIM], channels: &[ChannelOps], dt: f64, dxi: &[C64]) {
    let base = *psi;
    for (ch, &xi) in channels.iter().zip(dxi) {
        match ch {
            ChannelOps::Monomial {
                perm,
                phase,
                kappa_sq,
            } => {
                let mut lpsi = [C64::new(0.0, 0.0); MAX_DIM];
                let mut m = 0.0;
                for r in 0..dim {
                    lpsi[r] = phase[r] * base[perm[r]];
                    m += (base[r].conj() * lpsi[r]).re;
                }
                let a = m * dt + xi;
                let b = -0.5 * (kappa_sq + m * m) * dt - m * xi;
                for k in 0..dim {
                    psi[k] += lpsi[k] * a + base[k] * b;
                }
            }
            ChannelOps::General { l, ldl } => {
                let lpsi = l.apply_raw(&base);
                let ldlpsi = ldl.apply_raw(&base);
                let mut mean = C64::new(0.0, 0.0);
                for k in 0..dim {
                    mean += base[k].conj() * lpsi[k];
                }
                let mean_c = mean.conj();
                let scalar = -0.5 * mean_c * mean;
                for k in 0..dim {
                    let drift = mean_c * lpsi[k] - 0.5 * ldlpsi[k] + scalar * base[k];
                    let diffusion = (lpsi[k] - mean * base[k]) * xi;
                    psi[k] += drift * dt + diffusion;
                }
            }
        }
    }
}

fn renormalize(dim: usize, psi: &mut [C64; MAX_DIM]) -> f64 {
    let n = psi[..dim].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        let inv = 1.0 / n;
        for z in psi[..dim].iter_mut() {
            *z *= inv;
        }
    }
    n
}

/// One stochastic step from `psi` under Hamiltonian `h` and Lindblad
/// operators `channels` with the given increments (one per channel).
pub fn qsd_step(
    psi: &StateVector,
    h: &Operator,
    channels: &[Operator],
    dt: f64,
    increments: &[C64],
    scheme: Scheme,
) -> Result<StateVector, QsdError> {
    let dim = psi.dim();
    if h.dim() != dim {
        return Err(LinalgError::DimensionMismatch {
            left: dim,
            right: h.dim(),
        }
        .into());
    }
    if let Some(bad) = channels.iter().find(|l| l.dim() != dim) {
        return Err(QsdError::ChannelDimension {
            expected: dim,
            got: bad.dim(),
        });
    }
    if increments.len() != channels.len() {
        return Err(QsdError::InvalidConfig(format!(
            "{} increments for {} channels",
            increments.len(),
            channels.len()
        )));
    }
    let ops = channel_ops(channels);
    let step = match scheme {
        Scheme::SplitStep => PlanStep::Unitary(crate::qcore::expm_antihermitian(h, dt)?),
        Scheme::EulerMaruyama => PlanStep::Euler(*h),
    };
    let mut raw = *psi.raw();
    let norm = advance(dim, &mut raw, &step, &ops, dt, increments);
    if !(norm >= NORM_COLLAPSE) {
        return Err(QsdError::NormCollapse {
            trajectory: 0,
            time: dt,
            norm,
        });
    }
    Ok(StateVector::from_raw(dim, raw))
}

#[derive(Debug, Clone, Copy)]
enum PlanStep {
    Unitary(Operator),
    Euler(Operator),
}

/// Applies one integration step in place and returns the norm before
/// renormalization.
#[inline]
fn advance(
    dim: usize,
    psi: &mut [C64; MAX_DIM],
    step: &PlanStep,
    channels: &[ChannelOps],
    dt: f64,
    dxi: &[C64],
) -> f64 {
    match step {
        PlanStep::Unitary(u) => {
            *psi = u.apply_raw(psi);
            noise_kick(dim, psi, channels, dt, dxi);
        }
        PlanStep::Euler(h) => {
            let hpsi = h.apply_raw(psi);
            noise_kick(dim, psi, channels, dt, dxi);
            let minus_i_dt = C64::new(0.0, -dt);
            for k in 0..dim {
                psi[k] += minus_i_dt * hpsi[k];
            }
        }
    }
    renormalize(dim, psi)
}

/// Splits `duration` into steps of `dt`, shortening the last one so the
/// segment boundary is hit exactly. Yields `(local start, step length)`.
pub fn substeps(duration: f64, dt: f64) -> impl Iterator<Item = (f64, f64)> {
    let n = if duration > 0.0 {
        ((duration / dt - 1e-9).ceil() as usize).max(1)
    } else {
        0
    };
    (0..n).map(move |k| {
        let start = k as f64 * dt;
        let len = if k + 1 == n { duration - start } else { dt };
        (start, len)
    })
}

#[derive(Debug, Clone)]
enum PlanOp {
    Evolve { step: PlanStep, dt: f64, t_end: f64 },
    Rotate(Operator),
}

/// Precomputed per-step propagators for a schedule on a fixed time grid,
/// shared by every trajectory.
#[derive(Debug, Clone)]
pub struct StepPlan {
    dim: usize,
    qubits: usize,
    ops: Vec<PlanOp>,
    duration: f64,
    scheme: Scheme,
}

impl StepPlan {
    pub fn new(schedule: &PulseSchedule, dt: f64, scheme: Scheme) -> Result<Self, QsdError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let mut ops = Vec::new();
        let mut t = 0.0;
        let mut worst: f64 = 0.0;
        for seg in &schedule.segments {
            if let Some(u) = schedule.rotation_unitary(seg) {
                ops.push(PlanOp::Rotate(u));
                continue;
            }
            for (start, h) in substeps(seg.duration(), dt) {
                let ham = schedule
                    .segment_hamiltonian(seg, start + 0.5 * h)
                    .expect("non-instant segment");
                let e = eigh(&ham)?;
                let radius = e.eigenvalues().iter().map(|x| x.abs()).fold(0.0, f64::max);
                worst = worst.max(radius * h);
                let step = match scheme {
                    Scheme::SplitStep => {
                        PlanStep::Unitary(e.map(|lambda| C64::from_polar(1.0, -lambda * h)))
                    }
                    Scheme::EulerMaruyama => PlanStep::Euler(ham),
                };
                t += h;
                ops.push(PlanOp::Evolve {
                    step,
                    dt: h,
                    t_end: t,
                });
            }
        }
        if worst > MAX_PHASE_PER_STEP * (1.0 + 1e-9) {
            return Err(QsdError::StepTooLarge { phase: worst });
        }
        Ok(Self {
            dim: schedule.dim(),
            qubits: schedule.qubits,
            ops,
            duration: schedule.duration(),
            scheme,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    /// Total duration τ of the underlying schedule.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn step_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, PlanOp::Evolve { .. }))
            .count()
    }

    /// Times at which samples are recorded for the given stride: t = 0 and
    /// after every `stride`-th integration step.
    pub fn sample_times(&self, stride: usize) -> Vec<f64> {
        if stride == 0 {
            return Vec::new();
        }
        let mut times = vec![0.0];
        let mut count = 0;
        for op in &self.ops {
            if let PlanOp::Evolve { t_end, .. } = op {
                count += 1;
                if count % stride == 0 {
                    times.push(*t_end);
                }
            }
        }
        times
    }
}

/// Output of a single trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub final_state: StateVector,
    pub record: ExpectationTable,
    pub samples: Vec<ExpectationTable>,
}

/// Integrates one trajectory. The result depends only on
/// `(cfg.seed, cfg.stream + index)` and the inputs.
pub fn run_trajectory(
    plan: &StepPlan,
    input: &StateVector,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    index: u64,
) -> Result<TrajectoryOutput, QsdError> {
    let ops = channel_ops(&noise.operators(plan.qubits)?);
    trajectory_inner(plan, input, &ops, cfg, index)
}

fn trajectory_inner(
    plan: &StepPlan,
    input: &StateVector,
    channels: &[ChannelOps],
    cfg: &IntegratorConfig,
    index: u64,
) -> Result<TrajectoryOutput, QsdError> {
    let dim = plan.dim;
    if input.dim() != dim {
        return Err(LinalgError::DimensionMismatch {
            left: dim,
            right: input.dim(),
        }
        .into());
    }
    let stream = cfg.stream.wrapping_add(index);
    let mut rng = trajectory_rng(cfg.seed, stream);
    let mut psi = *input.raw();
    let mut dxi = vec![C64::new(0.0, 0.0); channels.len()];
    let mut samples = Vec::new();
    let stride = cfg.sample_stride;
    if stride > 0 {
        samples.push(ExpectationTable::from_state(&StateVector::from_raw(
            dim, psi,
        )));
    }
    let mut steps = 0usize;
    for op in &plan.ops {
        match op {
            PlanOp::Rotate(u) => psi = u.apply_raw(&psi),
            PlanOp::Evolve { step, dt, t_end } => {
                if !channels.is_empty() {
                    wiener_increments(&mut rng, *dt, &mut dxi);
                }
                let norm = advance(dim, &mut psi, step, channels, *dt, &dxi);
                if !(norm >= NORM_COLLAPSE) {
                    return Err(QsdError::NormCollapse {
                        trajectory: stream,
                        time: *t_end,
                        norm,
                    });
                }
                steps += 1;
                if stride > 0 && steps % stride == 0 {
                    samples.push(ExpectationTable::from_state(&StateVector::from_raw(
                        dim, psi,
                    )));
                }
            }
        }
    }
    let final_state = StateVector::from_raw(dim, psi);
    Ok(TrajectoryOutput {
        final_state,
        record: ExpectationTable::from_state(&final_state),
        samples,
    })
}

/// Statistical estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// Ensemble average at one sample time.
#[derive(Debug, Clone)]
pub struct EnsembleSample {
    pub time: f64,
    pub rho: DensityMatrix,
    pub mean: ExpectationTable,
    pub std_err: ExpectationTable,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub rho: DensityMatrix,
    pub final_states: Vec<StateVector>,
    pub records: Vec<ExpectationTable>,
    pub mean: ExpectationTable,
    pub std_err: ExpectationTable,
    pub samples: Vec<EnsembleSample>,
    pub duration: f64,
}

fn mean_and_se(tables: &[ExpectationTable]) -> (ExpectationTable, ExpectationTable) {
    let n = tables.len() as f64;
    let qubits = tables[0].qubits();
    let mut mean = [0.0; 16];
    for t in tables {
        for (m, v) in mean.iter_mut().zip(t.values()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut se = [0.0; 16];
    if tables.len() > 1 {
        for t in tables {
            for (k, v) in t.values().iter().enumerate() {
                se[k] += (v - mean[k]).powi(2);
            }
        }
        for s in se.iter_mut() {
            *s = (*s / (n - 1.0) / n).sqrt();
        }
    }
    (
        ExpectationTable::from_values(qubits, &mean),
        ExpectationTable::from_values(qubits, &se),
    )
}

/// ρ = (1/N) Σ |ψ_k⟩⟨ψ_k|, accumulated in index order.
pub fn average_density(states: &[StateVector]) -> Result<DensityMatrix, QsdError> {
    let dim = states
        .first()
        .ok_or_else(|| QsdError::InvalidConfig("no states to average".into()))?
        .dim();
    let mut acc = Operator::zeros(dim)?;
    for s in states {
        acc = acc.checked_add(&s.projector())?;
    }
    Ok(DensityMatrix::from_operator(
        acc.scale_re(1.0 / states.len() as f64),
    )?)
}

impl EnsembleResult {
    pub fn trajectories(&self) -> usize {
        self.final_states.len()
    }

    /// Mean and standard error of a per-trajectory quantity.
    pub fn per_trajectory(&self, f: impl Fn(&StateVector) -> f64) -> Estimate {
        let vals: Vec<f64> = self.final_states.iter().map(f).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std_err = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate {
            value: mean,
            std_err,
        }
    }

    /// Delete-one-block jackknife of a nonlinear function of ρ. The value is
    /// evaluated on the full ensemble.
    pub fn jackknife(
        &self,
        blocks: usize,
        f: impl Fn(&DensityMatrix) -> f64,
    ) -> Result<Estimate, QsdError> {
        let value = f(&self.rho);
        let n = self.final_states.len();
        let blocks = blocks.min(n);
        if blocks < 2 {
            return Ok(Estimate {
                value,
                std_err: 0.0,
            });
        }
        let dim = self.rho.dim();
        let mut block_sums = Vec::with_capacity(blocks);
        let mut counts = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let lo = b * n / blocks;
            let hi = (b + 1) * n / blocks;
            let mut acc = Operator::zeros(dim)?;
            for s in &self.final_states[lo..hi] {
                acc = acc.checked_add(&s.projector())?;
            }
            block_sums.push(acc);
            counts.push(hi - lo);
        }
        let mut total = Operator::zeros(dim)?;
        for s in &block_sums {
            total = total.checked_add(s)?;
        }
        let mut leave_out = Vec::with_capacity(blocks);
        for (s, &c) in block_sums.iter().zip(&counts) {
            let rest = total.checked_sub(s)?.scale_re(1.0 / (n - c) as f64);
            leave_out.push(f(&DensityMatrix::from_operator(rest)?));
        }
        Ok(Estimate {
            value,
            std_err: crate::metrics::jackknife_error(&leave_out),
        })
    }
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    work: impl FnOnce() -> T + Send,
) -> Result<T, QsdError> {
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

/// Runs `cfg.trajectories` independent trajectories and averages them.
///
/// Trajectories may execute on any number of workers; their outputs are
/// reduced in index order, so the result is bit-identical for any worker
/// count. The first failing trajectory (by index) fails the ensemble.
pub fn run_ensemble_with_plan(
    plan: &StepPlan,
    input: &StateVector,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<EnsembleResult, QsdError> {
    cfg.validate()?;
    let ops = channel_ops(&noise.operators(plan.qubits)?);
    let n = cfg.trajectories as u64;
    let outputs: Vec<Result<TrajectoryOutput, QsdError>> = with_workers(cfg.workers, || {
        (0..n)
            .into_par_iter()
            .map(|k| trajectory_inner(plan, input, &ops, cfg, k))
            .collect()
    })?;
    let outputs: Vec<TrajectoryOutput> = outputs.into_iter().collect::<Result<_, _>>()?;

    let final_states: Vec<StateVector> = outputs.iter().map(|o| o.final_state).collect();
    let records: Vec<ExpectationTable> = outputs.iter().map(|o| o.record).collect();
    let rho = average_density(&final_states)?;
    let (mean, std_err) = mean_and_se(&records);

    let times = plan.sample_times(cfg.sample_stride);
    let mut samples = Vec::with_capacity(times.len());
    for (k, &time) in times.iter().enumerate() {
        let tables: Vec<ExpectationTable> = outputs.iter().map(|o| o.samples[k]).collect();
        let (m, se) = mean_and_se(&tables);
        let rho_t = tomography(&m).map_err(|e| QsdError::InvalidConfig(e.to_string()))?;
        samples.push(EnsembleSample {
            time,
            rho: rho_t,
            mean: m,
            std_err: se,
        });
    }

    Ok(EnsembleResult {
        rho,
        final_states,
        records,
        mean,
        std_err,
        samples,
        duration: plan.duration(),
    })
}

/// Convenience wrapper that builds the step plan first.
pub fn run_ensemble(
    schedule: &PulseSchedule,
    input: &StateVector,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<EnsembleResult, QsdError> {
    cfg.validate()?;
    let plan = StepPlan::new(schedule, cfg.dt, cfg.scheme)?;
    run_ensemble_with_plan(&plan, input, noise, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::expect;
    use crate::schedule::{build_dynamic, FrameParams, Segment};
    use std::f64::consts::PI;

    fn free_schedule(qubits: usize, delta_omega: f64, duration: f64) -> PulseSchedule {
        PulseSchedule {
            qubits,
            frame: FrameParams {
                delta_omega,
                coupling: 0.0,
                free_omega_b: 0.0,
                ..FrameParams::default()
            },
            segments: vec![Segment::FreeEvolution { duration }],
        }
    }

    #[test]
    fn derive_seed_is_pure_and_distinct() {
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
        let mut seen: Vec<u64> = (0..1_000_000u64).map(|i| derive_seed(42, i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1_000_000);
    }

    #[test]
    fn derive_seed_avalanche() {
        let mut total = 0u32;
        let mut cases = 0u32;
        for master in [0u64, 42, 0xDEAD_BEEF, u64::MAX / 3] {
            for index in [0u64, 1, 1000, 1 << 32] {
                let base = derive_seed(master, index);
                for bit in 0..64 {
                    total += (base ^ derive_seed(master ^ (1 << bit), index)).count_ones();
                    cases += 1;
                }
            }
        }
        let mean = total as f64 / cases as f64;
        assert!(mean >= 20.0, "mean flipped bits {mean}");
    }

    #[test]
    fn wiener_increment_moments() {
        let dt = 0.01;
        let mut rng = trajectory_rng(1, 0);
        let n = 1_000_000;
        let mut buf = vec![C64::new(0.0, 0.0); 2];
        let mut sum = C64::new(0.0, 0.0);
        let mut sq = 0.0;
        let mut pseudo = C64::new(0.0, 0.0);
        let mut cross = C64::new(0.0, 0.0);
        for _ in 0..n / 2 {
            wiener_increments(&mut rng, dt, &mut buf);
            for z in &buf {
                sum += z;
                sq += z.norm_sqr();
                pseudo += z * z;
            }
            cross += buf[0] * buf[1].conj();
        }
        let n = n as f64;
        assert!((sum / n).norm() <= 4e-3 * dt.sqrt());
        assert!(((sq / n) - dt).abs() <= 0.01 * dt);
        assert!((pseudo / n).norm() <= 0.01 * dt);
        assert!((cross / (n / 2.0)).norm() <= 0.01 * dt);

        let mut zeros = vec![C64::new(1.0, 1.0); 3];
        wiener_increments(&mut rng, 0.0, &mut zeros);
        assert!(zeros.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn schrodinger_limit() {
        let s = free_schedule(1, 2.0, 1.0);
        let cfg = IntegratorConfig {
            dt: 1e-3,
            trajectories: 1,
            ..IntegratorConfig::default()
        };
        let plan = StepPlan::new(&s, cfg.dt, cfg.scheme).unwrap();
        let out =
            run_trajectory(&plan, &StateVector::plus(), &NoiseModel::none(), &cfg, 0).unwrap();
        let sx = expect(&out.final_state, &pauli(Axis::X)).unwrap().re;
        assert!((sx - 2f64.cos()).abs() < 1e-4);
    }

    #[test]
    fn zero_kappa_channels_match_noiseless_step() {
        let h = pauli(Axis::Z).scale_re(0.7);
        let psi = StateVector::plus();
        let l = pauli(Axis::X).scale_re(0.0);
        let a = qsd_step(&psi, &h, &[], 1e-3, &[], Scheme::SplitStep).unwrap();
        let b = qsd_step(
            &psi,
            &h,
            &[l],
            1e-3,
            &[C64::new(0.3, -0.2)],
            Scheme::SplitStep,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monomial_kick_matches_general_formula() {
        let psi = StateVector::new(&[
            C64::new(0.3, 0.1),
            C64::new(-0.2, 0.5),
            C64::new(0.4, -0.3),
            C64::new(0.1, 0.6),
        ])
        .unwrap();
        let xi = [C64::new(0.013, -0.021)];
        for (a, b) in [(Axis::X, Axis::I), (Axis::Y, Axis::Z), (Axis::I, Axis::Y)] {
            let l = crate::qcore::pauli_pair(a, b).scale_re(0.7);
            let fast = channel_ops(&[l]);
            assert!(matches!(fast[0], ChannelOps::Monomial { .. }));
            let slow = [ChannelOps::General {
                l,
                ldl: l.adjoint().matmul_unchecked(&l),
            }];
            let mut p1 = *psi.raw();
            let mut p2 = *psi.raw();
            noise_kick(4, &mut p1, &fast, 1e-3, &xi);
            noise_kick(4, &mut p2, &slow, 1e-3, &xi);
            for k in 0..4 {
                assert!((p1[k] - p2[k]).norm() < 1e-15);
            }
        }
        let mut lower = Operator::zeros(2).unwrap();
        lower[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(
            channel_ops(&[lower])[0],
            ChannelOps::General { .. }
        ));
    }

    #[test]
    fn step_preserves_norm() {
        let h = pauli(Axis::Y).scale_re(3.0);
        let l = pauli(Axis::Z).scale_re(0.4);
        let mut psi = StateVector::plus();
        let mut rng = trajectory_rng(5, 5);
        let mut dxi = [C64::new(0.0, 0.0)];
        for _ in 0..1000 {
            wiener_increments(&mut rng, 1e-3, &mut dxi);
            psi = qsd_step(&psi, &h, &[l], 1e-3, &dxi, Scheme::SplitStep).unwrap();
            assert!((psi.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn qsd_step_checks_dimensions() {
        let h = Operator::identity(4).unwrap();
        let r = qsd_step(&StateVector::plus(), &h, &[], 1e-3, &[], Scheme::SplitStep);
        assert!(r.is_err());
    }

    #[test]
    fn substeps_hit_boundaries() {
        let steps: Vec<_> = substeps(1.0, 0.3).collect();
        assert_eq!(steps.len(), 4);
        assert!((steps[3].1 - 0.1).abs() < 1e-12);
        let total: f64 = steps.iter().map(|s| s.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(substeps(1.0, 0.25).count(), 4);
        assert_eq!(substeps(0.0, 0.1).count(), 0);
    }

    #[test]
    fn step_plan_rejects_coarse_grid() {
        let s = free_schedule(1, 200.0, 1.0);
        assert!(matches!(
            StepPlan::new(&s, 1e-3, Scheme::SplitStep),
            Err(QsdError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn trajectories_are_reproducible() {
        let s = build_dynamic(37.5, PI / 37.5).unwrap();
        let cfg = IntegratorConfig::default();
        let plan = StepPlan::new(&s, cfg.dt, cfg.scheme).unwrap();
        let input = StateVector::product(&StateVector::plus(), &StateVector::plus()).unwrap();
        let noise = NoiseModel::isotropic_both(1.0);
        let a = run_trajectory(&plan, &input, &noise, &cfg, 17).unwrap();
        let b = run_trajectory(&plan, &input, &noise, &cfg, 17).unwrap();
        let c = run_trajectory(&plan, &input, &noise, &cfg, 18).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_ne!(a.final_state, c.final_state);
    }

    #[test]
    fn single_noiseless_trajectory_is_pure() {
        let s = build_dynamic(37.5, PI / 37.5).unwrap();
        let input = StateVector::product(&StateVector::plus(), &StateVector::plus()).unwrap();
        let cfg = IntegratorConfig {
            trajectories: 1,
            ..IntegratorConfig::default()
        };
        let r = run_ensemble(&s, &input, &NoiseModel::none(), &cfg).unwrap();
        assert!((r.rho.purity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let s = build_dynamic(37.5, PI / 37.5).unwrap();
        let input = StateVector::product(&StateVector::plus(), &StateVector::plus()).unwrap();
        let cfg = IntegratorConfig {
            trajectories: 0,
            ..IntegratorConfig::default()
        };
        assert!(matches!(
            run_ensemble(&s, &input, &NoiseModel::none(), &cfg),
            Err(QsdError::InvalidConfig(_))
        ));
    }

    #[test]
    fn norm_collapse_is_reported() {
        // κ²dt = 2 with a lowering operator cancels |1⟩ exactly
        let mut l = Operator::zeros(2).unwrap();
        l[(0, 1)] = C64::new(2f64.sqrt(), 0.0);
        let h = Operator::zeros(2).unwrap();
        let one = StateVector::basis(2, 1).unwrap();
        let r = qsd_step(
            &one,
            &h,
            &[l],
            1.0,
            &[C64::new(0.0, 0.0)],
            Scheme::SplitStep,
        );
        assert!(matches!(r, Err(QsdError::NormCollapse { .. })), "{r:?}");
    }
}
