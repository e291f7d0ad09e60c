//! Fidelities, entropy, Pauli tomography, concurrence, entanglement of
//! formation and the entanglement-death threshold search.

use thiserror::Error;

use crate::qcore::{
    eigh, herm_sqrt, pauli, pauli_pair, Axis, DensityMatrix, LinalgError, Operator, StateVector,
    C64, PSD_CLAMP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("expectation table is unphysical: minimum eigenvalue {min_eigenvalue:e}")]
    NotPhysical { min_eigenvalue: f64 },
    #[error("invalid threshold bracket [{lo}, {hi}]: {reason}")]
    BadBracket { lo: f64, hi: f64, reason: String },
    #[error("expected a {expected}-qubit state, got dimension {dim}")]
    WrongQubitCount { expected: usize, dim: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Pauli expectation values of a one- or two-qubit state.
///
/// Single qubit: `values[k] = ⟨σ_k⟩` for k ∈ {0, x, y, z}.
/// Two qubits: `values[4i + j] = ⟨σ_ai σ_bj⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationTable {
    qubits: usize,
    values: [f64; 16],
}

impl ExpectationTable {
    /// Table of the maximally mixed state.
    pub fn unpolarized(qubits: usize) -> Self {
        let mut values = [0.0; 16];
        values[0] = 1.0;
        Self { qubits, values }
    }

    /// Builds a table from raw values (4 for one qubit, 16 for two). The
    /// identity entry is forced to one.
    pub fn from_values(qubits: usize, values: &[f64]) -> Self {
        let mut v = [0.0; 16];
        let n = 1 << (2 * qubits);
        v[..n].copy_from_slice(&values[..n]);
        v[0] = 1.0;
        Self { qubits, values: v }
    }

    pub fn from_state(psi: &StateVector) -> Self {
        let qubits = if psi.dim() == 2 { 1 } else { 2 };
        let mut values = [0.0; 16];
        values[0] = 1.0;
        for (k, op) in basis(qubits).iter().enumerate().skip(1) {
            let opsi = op.apply(psi).expect("matching dimension");
            values[k] = psi.inner(&opsi).expect("matching dimension").re;
        }
        Self { qubits, values }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values[..1 << (2 * self.qubits)]
    }

    /// ⟨σ_axis⟩ of a single-qubit table.
    pub fn single(&self, axis: Axis) -> f64 {
        self.values[axis.index()]
    }

    /// ⟨σ_ai σ_bj⟩ of a two-qubit table.
    pub fn pair(&self, a: Axis, b: Axis) -> f64 {
        self.values[4 * a.index() + b.index()]
    }

    /// Bloch vector (⟨σx⟩, ⟨σy⟩, ⟨σz⟩) of a single-qubit table.
    pub fn bloch(&self) -> [f64; 3] {
        [self.values[1], self.values[2], self.values[3]]
    }
}

fn basis(qubits: usize) -> Vec<Operator> {
    if qubits == 1 {
        Axis::ALL.iter().map(|&a| pauli(a)).collect()
    } else {
        Axis::ALL
            .iter()
            .flat_map(|&i| Axis::ALL.map(|j| pauli_pair(i, j)))
            .collect()
    }
}

fn qubits_of(rho: &DensityMatrix) -> usize {
    if rho.dim() == 2 {
        1
    } else {
        2
    }
}

/// ⟨P⟩ = Tr(ρP) for every Pauli string P.
pub fn expectations_from_rho(rho: &DensityMatrix) -> ExpectationTable {
    let qubits = qubits_of(rho);
    let mut values = [0.0; 16];
    for (k, p) in basis(qubits).iter().enumerate() {
        values[k] = rho
            .as_operator()
            .matmul(p)
            .expect("matching dimension")
            .trace()
            .re;
    }
    values[0] = 1.0;
    ExpectationTable { qubits, values }
}

/// ρ = (1/d) Σ ⟨P⟩ P. Fails when the result has an eigenvalue below the
/// clamp tolerance.
pub fn tomography(t: &ExpectationTable) -> Result<DensityMatrix, MetricsError> {
    let dim = 1 << t.qubits;
    let mut acc = Operator::zeros(dim)?;
    for (p, &v) in basis(t.qubits).iter().zip(t.values()) {
        acc = acc.checked_add(&p.scale_re(v))?;
    }
    let rho = DensityMatrix::from_operator(acc.scale_re(1.0 / dim as f64))?;
    let min_eigenvalue = rho.min_eigenvalue();
    if min_eigenvalue < PSD_CLAMP {
        return Err(MetricsError::NotPhysical { min_eigenvalue });
    }
    Ok(rho)
}

/// Measurable single-qubit gate fidelity
/// f = ½[1 − sinθ cosγ_B ⟨σz⟩ + cosθ cosγ_B ⟨σx⟩ + sinγ_B ⟨σy⟩].
pub fn fidelity_footnote(sx: f64, sy: f64, sz: f64, theta: f64, gamma_b: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let (sg, cg) = gamma_b.sin_cos();
    0.5 * (1.0 - st * cg * sz + ct * cg * sx + sg * sy)
}

/// Unit Bloch vector the fidelity formula measures against.
pub fn fidelity_target(theta: f64, gamma_b: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sg, cg) = gamma_b.sin_cos();
    [ct * cg, sg, -st * cg]
}

/// Expectations along axes tipped by θ about y: σ'_x = cosθσx + sinθσz,
/// σ'_y = σy, σ'_z = −sinθσx + cosθσz.
pub fn tipped_expectations(bloch: [f64; 3], theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    let [x, y, z] = bloch;
    [c * x + s * z, y, -s * x + c * z]
}

/// Fidelity formula evaluated on the tipped-frame expectations of a
/// single-qubit Bloch vector.
pub fn gate_fidelity(bloch: [f64; 3], theta: f64, gamma_b: f64) -> f64 {
    let [x, y, z] = tipped_expectations(bloch, theta);
    fidelity_footnote(x, y, z, theta, gamma_b)
}

/// ⟨target|ρ|target⟩.
pub fn fidelity_state(rho: &DensityMatrix, target: &StateVector) -> Result<f64, MetricsError> {
    let v = rho.as_operator().apply(target)?;
    Ok(target.inner(&v)?.re.clamp(0.0, 1.0))
}

/// Von Neumann entropy −Σλ log_base λ over clamped eigenvalues.
pub fn entropy(rho: &DensityMatrix, base: f64) -> f64 {
    let ln_base = base.ln();
    let s: f64 = rho
        .clamped_eigenvalues()
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln() / ln_base)
        .sum();
    s.max(0.0)
}

const CONCURRENCE_EIG_FLOOR: f64 = 1e-13;

/// Wootters concurrence from the eigenvalues of √ρ ρ̃ √ρ,
/// ρ̃ = (σy⊗σy) ρ* (σy⊗σy).
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, MetricsError> {
    if rho.dim() != 4 {
        return Err(MetricsError::WrongQubitCount {
            expected: 2,
            dim: rho.dim(),
        });
    }
    let yy = pauli_pair(Axis::Y, Axis::Y);
    let tilde = yy.matmul(&rho.as_operator().conj())?.matmul(&yy)?;
    let sq = herm_sqrt(rho);
    let r = sq.matmul(&tilde)?.matmul(&sq)?.hermitian_part();
    let e = eigh(&r)?;
    // roundoff in eigenvalues that should vanish is amplified by the square root
    let floor = CONCURRENCE_EIG_FLOOR * e.eigenvalues().iter().fold(1.0, |m: f64, &x| m.max(x));
    let mut lam: Vec<f64> = e
        .eigenvalues()
        .iter()
        .map(|&x| if x > floor { x.sqrt() } else { 0.0 })
        .collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).clamp(0.0, 1.0))
}

fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    term(x) + term(1.0 - x)
}

/// Entanglement of formation h((1 + √(1 − C²))/2) as a function of C.
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt())).clamp(0.0, 1.0)
}

pub fn eof(rho: &DensityMatrix) -> Result<f64, MetricsError> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}

/// Fidelity, entropy and (for two qubits) entanglement of a final state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementReport {
    pub concurrence: f64,
    pub eof: f64,
    pub entropy: f64,
    pub fidelity: f64,
}

impl EntanglementReport {
    /// Two-qubit report with base-4 entropy and state fidelity to `target`.
    pub fn two_qubit(rho: &DensityMatrix, target: &StateVector) -> Result<Self, MetricsError> {
        let c = concurrence(rho)?;
        Ok(Self {
            concurrence: c,
            eof: eof_from_concurrence(c),
            entropy: entropy(rho, 4.0),
            fidelity: fidelity_state(rho, target)?,
        })
    }
}

/// Delete-one-block jackknife standard error from leave-one-out estimates.
pub fn jackknife_error(leave_out: &[f64]) -> f64 {
    let n = leave_out.len() as f64;
    if leave_out.len() < 2 {
        return 0.0;
    }
    let mean = leave_out.iter().sum::<f64>() / n;
    ((n - 1.0) / n * leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Smallest concurrence treated as nonzero.
pub const CONCURRENCE_FLOOR: f64 = 1e-4;

/// Entanglement estimate at one noise rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementSample {
    pub concurrence: f64,
    pub concurrence_err: f64,
}

impl EntanglementSample {
    /// EOF counts as zero when C ≤ max(1e−4, 2·SE(C)).
    pub fn is_zero(&self) -> bool {
        self.concurrence <= CONCURRENCE_FLOOR.max(2.0 * self.concurrence_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub gamma_thres: f64,
    pub bracket_width: f64,
    pub trajectories: usize,
    pub tau: f64,
    /// Γ_thres·τ.
    pub product: f64,
    pub evaluations: usize,
}

/// Relative bracket width at which the bisection stops.
pub const THRESHOLD_REL_WIDTH: f64 = 0.02;

/// Bisects on Γ for the point where the EOF reaches zero. `evaluate` runs
/// the full simulation at one rate.
pub fn find_gamma_threshold<E>(
    bracket: (f64, f64),
    tau: f64,
    trajectories: usize,
    mut evaluate: impl FnMut(f64) -> Result<EntanglementSample, E>,
) -> Result<ThresholdResult, E>
where
    E: From<MetricsError>,
{
    let (mut lo, mut hi) = bracket;
    let bad = |reason: &str| MetricsError::BadBracket {
        lo: bracket.0,
        hi: bracket.1,
        reason: reason.to_string(),
    };
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad("need 0 ≤ lo < hi").into());
    }
    if evaluate(lo)?.is_zero() {
        return Err(bad("entanglement already zero at the lower end").into());
    }
    if !evaluate(hi)?.is_zero() {
        return Err(bad("entanglement still nonzero at the upper end").into());
    }
    let mut evaluations = 2;
    while hi - lo > THRESHOLD_REL_WIDTH * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if evaluate(mid)?.is_zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let gamma_thres = 0.5 * (lo + hi);
    Ok(ThresholdResult {
        gamma_thres,
        bracket_width: hi - lo,
        trajectories,
        tau,
        product: gamma_thres * tau,
        evaluations,
    })
}

/// Closed-form concurrence of a Werner state pΦ⁺ + (1−p)I/4.
pub fn werner_concurrence(p: f64) -> f64 {
    (0.5 * (3.0 * p - 1.0)).max(0.0)
}

/// The Werner state pΦ⁺ + (1−p)I/4.
pub fn werner_state(p: f64) -> DensityMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = StateVector::new(&[
        C64::new(h, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(h, 0.0),
    ])
    .expect("normalized");
    let op = phi.projector().scale_re(p)
        + Operator::identity(4)
            .expect("valid dimension")
            .scale_re((1.0 - p) / 4.0);
    DensityMatrix::from_operator(op).expect("valid density matrix")
}
