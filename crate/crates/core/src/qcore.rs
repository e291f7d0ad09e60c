//! Dense complex linear algebra for one and two qubits.
//!
//! Everything here works on fixed-size storage (at most 4×4) so that the
//! trajectory integrator can run tight loops without heap traffic.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest supported Hilbert-space dimension (two qubits).
pub const MAX_DIM: usize = 4;

/// Tolerance used when deciding whether a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues above this (negative) threshold are treated as roundoff and
/// clamped to zero.
pub const PSD_CLAMP: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("unsupported dimension {0} (expected 2 or 4)")]
    InvalidDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("zero vector cannot be normalized")]
    ZeroNorm,
    #[error("trace {trace} is not 1")]
    BadTrace { trace: f64 },
    #[error("expected {expected} entries, got {got}")]
    WrongLength { expected: usize, got: usize },
}

fn check_dim(dim: usize) -> Result<(), LinalgError> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(LinalgError::InvalidDimension(dim))
    }
}

/// Pauli label. `I` is σ₀, the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    I,
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::I, Axis::X, Axis::Y, Axis::Z];
    pub const XYZ: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::I => 0,
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::I => "0",
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

/// Square complex matrix of dimension 2 or 4, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Operator {
    dim: usize,
    m: [C64; MAX_DIM * MAX_DIM],
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rows = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            rows.push(format!("[{}]", row.join(", ")));
        }
        write!(f, "Operator{}[{}]", self.dim, rows.join(", "))
    }
}

impl std::ops::Index<(usize, usize)> for Operator {
    type Output = C64;

    #[inline(always)]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.m[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Operator {
    #[inline(always)]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.m[i * self.dim + j]
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            m: [ZERO; MAX_DIM * MAX_DIM],
        })
    }

    pub fn identity(dim: usize) -> Result<Self, LinalgError> {
        let mut out = Self::zeros(dim)?;
        for k in 0..dim {
            out[(k, k)] = ONE;
        }
        Ok(out)
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        if entries.len() != dim * dim {
            return Err(LinalgError::WrongLength {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite);
        }
        let mut out = Self::zeros(dim)?;
        out.m[..dim * dim].copy_from_slice(entries);
        Ok(out)
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_rows(dim, &c)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        let mut out = Self::zeros(values.len())?;
        for (k, &v) in values.iter().enumerate() {
            out[(k, k)] = C64::new(v, 0.0);
        }
        Ok(out)
    }

    #[inline(always)]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major view of the live entries.
    pub fn entries(&self) -> &[C64] {
        &self.m[..self.dim * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    /// Entry-wise complex conjugate (not transposed).
    pub fn conj(&self) -> Self {
        let mut out = *self;
        for z in out.m.iter_mut() {
            *z = z.conj();
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for z in out.m[..self.dim * self.dim].iter_mut() {
            *z *= s;
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self[(k, k)]).sum()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_dim(other)?;
        Ok(self.matmul_unchecked(other))
    }

    #[inline]
    pub(crate) fn matmul_unchecked(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = Self {
            dim: n,
            m: [ZERO; MAX_DIM * MAX_DIM],
        };
        for i in 0..n {
            for k in 0..n {
                let a = self.m[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.m[i * n + j] += a * other.m[k * n + j];
                }
            }
        }
        out
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_dim(other)?;
        let mut out = *self;
        for (a, b) in out.m.iter_mut().zip(other.m.iter()) {
            *a += *b;
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_dim(other)?;
        let mut out = *self;
        for (a, b) in out.m.iter_mut().zip(other.m.iter()) {
            *a -= *b;
        }
        Ok(out)
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self, LinalgError> {
        self.matmul(other)?
            .checked_sub(&other.matmul_unchecked(self))
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector, LinalgError> {
        if self.dim != v.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: v.dim,
            });
        }
        Ok(StateVector {
            dim: v.dim,
            a: self.apply_raw(&v.a),
        })
    }

    #[inline(always)]
    pub(crate) fn apply_raw(&self, v: &[C64; MAX_DIM]) -> [C64; MAX_DIM] {
        let n = self.dim;
        let mut out = [ZERO; MAX_DIM];
        for i in 0..n {
            let row = &self.m[i * n..i * n + n];
            let mut acc = ZERO;
            for j in 0..n {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Largest entry-wise modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.entries()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Returns `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let adj = self.adjoint();
        let mut out = *self;
        for (a, b) in out.m.iter_mut().zip(adj.m.iter()) {
            *a = (*a + *b) * 0.5;
        }
        out
    }

    /// Largest |eigenvalue| of a Hermitian operator.
    pub fn spectral_radius_hermitian(&self) -> Result<f64, LinalgError> {
        let e = eigh(self)?;
        Ok(e.values[..self.dim]
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max))
    }

    fn same_dim(&self, other: &Self) -> Result<(), LinalgError> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            })
        }
    }
}

impl Add for Operator {
    type Output = Operator;

    /// Panics on dimension mismatch; use [`Operator::checked_add`] otherwise.
    fn add(self, rhs: Self) -> Self {
        self.checked_add(&rhs).expect("operator dimension mismatch")
    }
}

impl Sub for Operator {
    type Output = Operator;

    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(&rhs).expect("operator dimension mismatch")
    }
}

impl Mul for Operator {
    type Output = Operator;

    fn mul(self, rhs: Self) -> Self {
        self.matmul(&rhs).expect("operator dimension mismatch")
    }
}

impl Mul<Operator> for f64 {
    type Output = Operator;

    fn mul(self, rhs: Operator) -> Operator {
        rhs.scale_re(self)
    }
}

impl Mul<Operator> for C64 {
    type Output = Operator;

    fn mul(self, rhs: Operator) -> Operator {
        rhs.scale(self)
    }
}

/// Returns the 2×2 identity or Pauli matrix.
pub fn pauli(axis: Axis) -> Operator {
    let e = match axis {
        Axis::I => [ONE, ZERO, ZERO, ONE],
        Axis::X => [ZERO, ONE, ONE, ZERO],
        Axis::Y => [ZERO, -I, I, ZERO],
        Axis::Z => [ONE, ZERO, ZERO, -ONE],
    };
    Operator::from_rows(2, &e).expect("static Pauli matrix")
}

/// Tensor product of two single-qubit operators; `a` is the left (slow)
/// index of the resulting 4×4 matrix.
pub fn kron(a: &Operator, b: &Operator) -> Result<Operator, LinalgError> {
    if a.dim != 2 {
        return Err(LinalgError::DimensionMismatch {
            left: a.dim,
            right: 2,
        });
    }
    if b.dim != 2 {
        return Err(LinalgError::DimensionMismatch {
            left: b.dim,
            right: 2,
        });
    }
    let mut out = Operator::zeros(4)?;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// σ_i ⊗ σ_j.
pub fn pauli_pair(a: Axis, b: Axis) -> Operator {
    kron(&pauli(a), &pauli(b)).expect("2x2 operands")
}

/// Normalized pure state of one or two qubits.
#[derive(Clone, Copy, PartialEq)]
pub struct StateVector {
    dim: usize,
    a: [C64; MAX_DIM],
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .amplitudes()
            .iter()
            .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
            .collect();
        write!(f, "StateVector[{}]", parts.join(", "))
    }
}

impl StateVector {
    /// Normalizes the given amplitudes.
    pub fn new(amplitudes: &[C64]) -> Result<Self, LinalgError> {
        let dim = amplitudes.len();
        check_dim(dim)?;
        if amplitudes
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite);
        }
        let mut a = [ZERO; MAX_DIM];
        a[..dim].copy_from_slice(amplitudes);
        let mut v = Self { dim, a };
        v.normalize()?;
        Ok(v)
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        if k >= dim {
            return Err(LinalgError::DimensionMismatch {
                left: k,
                right: dim,
            });
        }
        let mut a = [ZERO; MAX_DIM];
        a[k] = ONE;
        Ok(Self { dim, a })
    }

    /// (|0⟩ + |1⟩)/√2.
    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(&[C64::new(h, 0.0), C64::new(h, 0.0)]).expect("static state")
    }

    /// |a⟩ ⊗ |b⟩ for single-qubit states.
    pub fn product(a: &StateVector, b: &StateVector) -> Result<Self, LinalgError> {
        if a.dim != 2 || b.dim != 2 {
            return Err(LinalgError::DimensionMismatch {
                left: a.dim.max(b.dim),
                right: 2,
            });
        }
        let amps = [
            a.a[0] * b.a[0],
            a.a[0] * b.a[1],
            a.a[1] * b.a[0],
            a.a[1] * b.a[1],
        ];
        Self::new(&amps)
    }

    #[inline(always)]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.a[..self.dim]
    }

    #[inline(always)]
    pub(crate) fn raw(&self) -> &[C64; MAX_DIM] {
        &self.a
    }

    /// Wraps raw amplitudes without normalizing.
    #[inline(always)]
    pub(crate) fn from_raw(dim: usize, a: [C64; MAX_DIM]) -> Self {
        Self { dim, a }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64, LinalgError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(LinalgError::ZeroNorm);
        }
        let inv = 1.0 / n;
        for z in self.a[..self.dim].iter_mut() {
            *z *= inv;
        }
        Ok(n)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(self
            .amplitudes()
            .iter()
            .zip(other.amplitudes())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |⟨self|other⟩|².
    pub fn overlap(&self, other: &StateVector) -> Result<f64, LinalgError> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// |ψ⟩⟨ψ|.
    pub fn projector(&self) -> Operator {
        let mut out = Operator::zeros(self.dim).expect("valid dim");
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self.a[i] * self.a[j].conj();
            }
        }
        out
    }
}

/// ⟨ψ|o|ψ⟩.
pub fn expect(psi: &StateVector, o: &Operator) -> Result<C64, LinalgError> {
    if psi.dim != o.dim {
        return Err(LinalgError::DimensionMismatch {
            left: psi.dim,
            right: o.dim,
        });
    }
    Ok(expect_raw(psi.dim, &psi.a, o))
}

#[inline(always)]
pub(crate) fn expect_raw(dim: usize, psi: &[C64; MAX_DIM], o: &Operator) -> C64 {
    let opsi = o.apply_raw(psi);
    let mut acc = ZERO;
    for k in 0..dim {
        acc += psi[k].conj() * opsi[k];
    }
    acc
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator);

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityMatrix({:?})", self.0)
    }
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace. Small negative eigenvalues are
    /// tolerated; see [`DensityMatrix::clamped_eigenvalues`].
    pub fn from_operator(op: Operator) -> Result<Self, LinalgError> {
        if !op.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let deviation = op.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(LinalgError::NotHermitian { deviation });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(LinalgError::BadTrace { trace: tr.re });
        }
        Ok(Self(op.hermitian_part()))
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self(psi.projector())
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self, LinalgError> {
        Ok(Self(Operator::identity(dim)?.scale_re(1.0 / dim as f64)))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn purity(&self) -> f64 {
        self.0.matmul_unchecked(&self.0).trace().re
    }

    /// Eigenvalues (ascending), with anything negative set to zero and the
    /// result renormalized to sum to one.
    pub fn clamped_eigenvalues(&self) -> Vec<f64> {
        let e = eigh(&self.0).expect("density matrix is Hermitian");
        let mut vals: Vec<f64> = e.values[..self.dim()].iter().map(|&x| x.max(0.0)).collect();
        let s: f64 = vals.iter().sum();
        if s > 0.0 {
            for v in vals.iter_mut() {
                *v /= s;
            }
        }
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.0).expect("density matrix is Hermitian").values[0]
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64, LinalgError> {
        let diff = self.0.checked_sub(&other.0)?;
        let e = eigh(&diff)?;
        Ok(0.5 * e.values[..self.dim()].iter().map(|x| x.abs()).sum::<f64>())
    }

    /// U ρ U†.
    pub fn conjugate_by(&self, u: &Operator) -> Result<Self, LinalgError> {
        let out = u.matmul(&self.0)?.matmul_unchecked(&u.adjoint());
        Ok(Self(out.hermitian_part()))
    }
}

/// Result of a Hermitian eigendecomposition: `h = V diag(values) V†`.
#[derive(Debug, Clone, Copy)]
pub struct Eigh {
    /// Ascending; only the first `dim` entries are meaningful.
    pub values: [f64; MAX_DIM],
    /// Columns are eigenvectors.
    pub vectors: Operator,
}

impl Eigh {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values[..self.vectors.dim]
    }

    /// V f(Λ) V† for a complex-valued spectral function.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> Operator {
        let n = self.vectors.dim;
        let v = &self.vectors;
        let mut out = Operator::zeros(n).expect("valid dim");
        for k in 0..n {
            let fk = f(self.values[k]);
            if fk == ZERO {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * fk;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }
}

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn eigh(h: &Operator) -> Result<Eigh, LinalgError> {
    if !h.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = h.dim;
    let scale = h.max_abs().max(1.0);
    let deviation = h.hermitian_deviation();
    if deviation > HERMITIAN_TOL * scale {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let mut a = h.hermitian_part();
    let mut v = Operator::identity(n)?;
    // Absolute threshold relative to the matrix scale: 1e-13 is below the
    // roundoff floor for the ~1e2 entries of the drive Hamiltonians.
    let tol = JACOBI_TOL * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let e = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // J = P G P† with P = diag(1, e*) acting on (p, q).
                let jpp = C64::new(c, 0.0);
                let jpq = e * s;
                let jqp = -e.conj() * s;
                let jqq = C64::new(c, 0.0);
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut order: [usize; MAX_DIM] = [0, 1, 2, 3];
    order[..n].sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let mut values = [0.0; MAX_DIM];
    let mut vectors = Operator::zeros(n)?;
    for (col, &src) in order[..n].iter().enumerate() {
        values[col] = a[(src, src)].re;
        for i in 0..n {
            vectors[(i, col)] = v[(i, src)];
        }
    }
    Ok(Eigh { values, vectors })
}

/// e^{−i h t} for Hermitian `h`.
pub fn expm_antihermitian(h: &Operator, t: f64) -> Result<Operator, LinalgError> {
    if t == 0.0 {
        return Operator::identity(h.dim);
    }
    let e = eigh(h)?;
    Ok(e.map(|lambda| C64::from_polar(1.0, -lambda * t)))
}

/// PSD square root; negative eigenvalues are clamped to zero first.
pub fn herm_sqrt(rho: &DensityMatrix) -> Operator {
    let e = eigh(rho.as_operator()).expect("density matrix is Hermitian");
    e.map(|lambda| C64::new(lambda.max(0.0).sqrt(), 0.0))
}

/// Single-qubit rotation exp(−iθσ/2).
pub fn rotation(axis: Axis, angle: f64) -> Operator {
    let (s, c) = (0.5 * angle).sin_cos();
    let id = pauli(Axis::I).scale_re(c);
    id + pauli(axis).scale(C64::new(0.0, -s))
}
