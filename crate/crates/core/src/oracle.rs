//! Direct integration of the Lindblad master equation
//!
//! ```text
//! ρ̇ = −i[H, ρ] + Σ_m (L_m ρ L_m† − ½L_m†L_m ρ − ½ρ L_m†L_m)
//! ```
//!
//! with classical RK4 on the same segment-aligned time grid as the
//! trajectory integrator.

use thiserror::Error;

use crate::qcore::{DensityMatrix, LinalgError, Operator, C64};
use crate::qsd::{substeps, NoiseModel, QsdError};
use crate::schedule::{PulseSchedule, ScheduleError};

/// Largest trace drift tolerated in a single step.
pub const MAX_TRACE_DRIFT: f64 = 1e-6;

/// Bound on ‖H‖·dt for the RK4 grid.
pub const MAX_PHASE_PER_STEP: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("trace drifted by {drift:e} in one step at t = {time}; reduce dt")]
    TraceDrift { time: f64, drift: f64 },
    #[error("step too large: ‖H‖·dt = {phase} exceeds {MAX_PHASE_PER_STEP}")]
    StepTooLarge { phase: f64 },
    #[error("dt must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Noise(#[from] QsdError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Lindblad operators together with K = Σ L†L.
#[derive(Debug, Clone)]
pub struct Dissipator {
    channels: Vec<(Operator, Operator)>,
    k: Operator,
}

impl Dissipator {
    pub fn new(dim: usize, channels: &[Operator]) -> Result<Self, LinalgError> {
        let mut k = Operator::zeros(dim)?;
        let mut pairs = Vec::with_capacity(channels.len());
        for l in channels {
            if l.dim() != dim {
                return Err(LinalgError::DimensionMismatch {
                    left: dim,
                    right: l.dim(),
                });
            }
            let ld = l.adjoint();
            k = k + ld.matmul_unchecked(l);
            pairs.push((*l, ld));
        }
        Ok(Self { channels: pairs, k })
    }

    fn apply(&self, h: &Operator, rho: &Operator) -> Operator {
        // −iHρ − ½Kρ + h.c. written as Gρ + ρG† with G = −iH − ½K
        let g = h.scale(C64::new(0.0, -1.0)) - self.k.scale_re(0.5);
        let grho = g.matmul_unchecked(rho);
        let mut out = grho + grho.adjoint();
        for (l, ld) in &self.channels {
            out = out + l.matmul_unchecked(rho).matmul_unchecked(ld);
        }
        out
    }
}

/// Right-hand side of the master equation.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &Operator,
    channels: &[Operator],
) -> Result<Operator, LinalgError> {
    let dim = rho.dim();
    if h.dim() != dim {
        return Err(LinalgError::DimensionMismatch {
            left: dim,
            right: h.dim(),
        });
    }
    Ok(Dissipator::new(dim, channels)?.apply(h, rho.as_operator()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub dt: f64,
    /// Record ρ every `sample_stride` steps (0: final state only).
    pub sample_stride: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dt: crate::qsd::DEFAULT_DT,
            sample_stride: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub final_rho: DensityMatrix,
    /// `(t, ρ(t))` at t = 0 and every `sample_stride` steps.
    pub samples: Vec<(f64, DensityMatrix)>,
}

/// Integrates ρ through `s`, applying instantaneous rotations as UρU†.
pub fn integrate_lindblad(
    s: &PulseSchedule,
    rho0: &DensityMatrix,
    noise: &NoiseModel,
    cfg: &OracleConfig,
) -> Result<OracleRun, OracleError> {
    let dt = cfg.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OracleError::BadStep(dt));
    }
    let dim = s.dim();
    if rho0.dim() != dim {
        return Err(LinalgError::DimensionMismatch {
            left: dim,
            right: rho0.dim(),
        }
        .into());
    }
    let diss = Dissipator::new(dim, &noise.operators(s.qubits)?)?;
    let mut rho = *rho0.as_operator();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut samples = Vec::new();
    if cfg.sample_stride > 0 {
        samples.push((0.0, *rho0));
    }

    for seg in &s.segments {
        if let Some(u) = s.rotation_unitary(seg) {
            rho = u.matmul_unchecked(&rho).matmul_unchecked(&u.adjoint());
            continue;
        }
        for (start, h) in substeps(seg.duration(), dt) {
            let h0 = s.segment_hamiltonian(seg, start).expect("timed segment");
            let hm = s
                .segment_hamiltonian(seg, start + 0.5 * h)
                .expect("timed segment");
            let h1 = s
                .segment_hamiltonian(seg, start + h)
                .expect("timed segment");
            let phase = hm.spectral_radius_hermitian()? * h;
            if phase > MAX_PHASE_PER_STEP {
                return Err(OracleError::StepTooLarge { phase });
            }
            let k1 = diss.apply(&h0, &rho);
            let k2 = diss.apply(&hm, &(rho + k1.scale_re(0.5 * h)));
            let k3 = diss.apply(&hm, &(rho + k2.scale_re(0.5 * h)));
            let k4 = diss.apply(&h1, &(rho + k3.scale_re(h)));
            rho = rho + (k1 + k2.scale_re(2.0) + k3.scale_re(2.0) + k4).scale_re(h / 6.0);
            t += h;
            let tr = rho.trace().re;
            let drift = (tr - 1.0).abs();
            if !(drift <= MAX_TRACE_DRIFT) {
                return Err(OracleError::TraceDrift { time: t, drift });
            }
            rho = rho.hermitian_part().scale_re(1.0 / tr);
            steps += 1;
            if cfg.sample_stride > 0 && steps % cfg.sample_stride == 0 {
                samples.push((t, DensityMatrix::from_operator(rho)?));
            }
        }
    }
    Ok(OracleRun {
        final_rho: DensityMatrix::from_operator(rho)?,
        samples,
    })
}
