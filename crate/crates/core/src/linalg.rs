//! Dense complex linear algebra on small Hilbert spaces (dim ≤ 8).
//!
//! Basis conventions shared by every module:
//!
//! * photonic qubit: `|0⟩ = |σ⁺⟩`, `|1⟩ = |σ⁻⟩`
//! * atomic qubit: `|0⟩ = |1,−1⟩`, `|1⟩ = |1,+1⟩`
//! * two-qubit ordering: `{00, 01, 10, 11}`, first factor most significant.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest Hilbert-space dimension handled by this crate.
pub const MAX_DIM: usize = 8;

/// Hermiticity tolerance for density matrices and observables.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  [")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
            }
            writeln!(f, " ]")?;
        }
        Ok(())
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = cr(1.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries.len() {
            return Err(Error::Dimension(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(Self { dim, data: entries })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = cr(d);
        }
        m
    }

    /// `|v⟩⟨w|`
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        assert_eq!(v.len(), w.len());
        Self::from_fn(v.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn scale_c(&self, k: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> C64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = cr(0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    /// `U · self · U†`
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        &(u * self) * &u.adjoint()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖M − M†‖_max`
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(M + M†)/2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> Self {
        let (m, n) = (self.dim, other.dim);
        Self::from_fn(m * n, |r, c| {
            self[(r / n, c / n)] * other[(r % n, c % n)]
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == cr(0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product of two matrices.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kron(b)
}

/// Normalized ket.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Builds a ket and normalizes it. Zero vectors are rejected.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self { amplitudes };
        s.normalize()?;
        Ok(s)
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![cr(0.0); dim];
        amplitudes[index] = cr(1.0);
        Self { amplitudes }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Validation("cannot normalize a zero vector".into()));
        }
        for a in &mut self.amplitudes {
            *a /= norm;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        StateVector { amplitudes }
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn projector(&self) -> CMatrix {
        CMatrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

/// Hermitian matrix (observables, projectors, partial transposes).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::Validation(format!(
                "matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is Hermitian by construction.
    pub(crate) fn from_hermitian(m: CMatrix) -> Self {
        debug_assert!(m.hermiticity_defect() <= 1e-8);
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn eigen(&self) -> Eigen {
        jacobi_eigen(&self.0)
    }

    /// `⟨O⟩_ρ`, real for Hermitian `O` and `ρ`.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        rho.matrix().trace_product(&self.0).re
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates all density-matrix invariants.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.dim() == 0 || m.dim() > MAX_DIM {
            return Err(Error::Dimension(format!(
                "dimension {} outside 1..={MAX_DIM}",
                m.dim()
            )));
        }
        let diag = validate_density(&m);
        if !diag.passed {
            return Err(Error::Validation(diag.to_string()));
        }
        Ok(Self(m))
    }

    /// Wraps the output of a channel that preserves the invariants.
    pub(crate) fn from_channel(m: CMatrix) -> Self {
        debug_assert!(validate_density(&m).passed, "{:?}", validate_density(&m));
        Self(m)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self(psi.projector())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    /// `Σ w_k ρ_k`; weights must be non-negative and sum to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyData("empty mixture".into()))?;
        let mut acc = CMatrix::zeros(first.1.dim());
        for (w, rho) in parts {
            if *w < 0.0 {
                return Err(Error::Validation(format!("negative mixture weight {w}")));
            }
            if rho.dim() != acc.dim() {
                return Err(Error::Dimension("mixture of different dimensions".into()));
            }
            acc = &acc + &rho.0.scale(*w);
        }
        Self::new(acc)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    /// `U ρ U†`
    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self::from_channel(self.0.conjugate_by(u))
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn overlap(&self, psi: &StateVector) -> f64 {
        let v = self.0.apply(psi.amplitudes());
        psi.amplitudes()
            .iter()
            .zip(&v)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        jacobi_eigen(&self.0).values
    }

    pub fn as_hermitian(&self) -> HermitianOperator {
        HermitianOperator(self.0.clone())
    }
}

/// Result of a Hermitian eigendecomposition. Eigenvalues are sorted in
/// descending order; column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.dim()).map(|i| self.vectors[(i, k)]).collect()
    }

    /// `V diag(f(λ)) V†`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        CMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * fl[k] * self.vectors[(j, k)].conj())
                .sum()
        })
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_values(|l| l)
    }
}

/// Eigendecomposition of a Hermitian matrix; rejects non-Hermitian input.
pub fn eig_hermitian(m: &CMatrix) -> Result<Eigen> {
    let defect = m.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::Validation(format!(
            "eig_hermitian on non-Hermitian matrix (defect {defect:.3e})"
        )));
    }
    Ok(jacobi_eigen(m))
}

/// Cyclic complex Jacobi. Each rotation first removes the phase of the
/// pivot element, then applies a real Givens rotation that zeroes it.
fn jacobi_eigen(m: &CMatrix) -> Eigen {
    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let abs = apq.norm();
                if abs <= 1e-300 {
                    continue;
                }
                let phase = apq / abs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * abs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                let ph_c = phase.conj();

                // A ← A U (columns p, q)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * cs - akq * ph_c * sn;
                    a[(k, q)] = akp * sn + akq * ph_c * cs;
                }
                // A ← U† A (rows p, q)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * cs - aqk * phase * sn;
                    a[(q, k)] = apk * sn + aqk * phase * cs;
                }
                a[(p, q)] = cr(0.0);
                a[(q, p)] = cr(0.0);
                a[(p, p)] = cr(a[(p, p)].re);
                a[(q, q)] = cr(a[(q, q)].re);
                // V ← V U
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * cs - vkq * ph_c * sn;
                    v[(k, q)] = vkp * sn + vkq * ph_c * cs;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, |r, k| v[(r, order[k])]);
    Eigen { values, vectors }
}

/// Transpose on one tensor factor of a two-qubit operator.
pub fn partial_transpose(rho: &DensityMatrix, subsystem: usize) -> Result<HermitianOperator> {
    Ok(HermitianOperator::from_hermitian(partial_transpose_matrix(
        rho.matrix(),
        subsystem,
    )?))
}

pub fn partial_transpose_matrix(m: &CMatrix, subsystem: usize) -> Result<CMatrix> {
    if m.dim() != 4 {
        return Err(Error::Dimension(format!(
            "partial transpose needs a 4x4 matrix, got {}x{}",
            m.dim(),
            m.dim()
        )));
    }
    if subsystem > 1 {
        return Err(Error::Dimension(format!("subsystem {subsystem} not in {{0,1}}")));
    }
    Ok(CMatrix::from_fn(4, |r, c| {
        let (mut i1, mut i2) = (r / 2, r % 2);
        let (mut j1, mut j2) = (c / 2, c % 2);
        if subsystem == 0 {
            std::mem::swap(&mut i1, &mut j1);
        } else {
            std::mem::swap(&mut i2, &mut j2);
        }
        m[(i1 * 2 + i2, j1 * 2 + j2)]
    }))
}

/// Traces out factor `traced` (0 or 1) of a bipartite state with factor
/// dimensions `dims`.
pub fn partial_trace(rho: &DensityMatrix, dims: [usize; 2], traced: usize) -> Result<DensityMatrix> {
    let [da, db] = dims;
    if da * db != rho.dim() || da == 0 || db == 0 {
        return Err(Error::Dimension(format!(
            "dimension {} does not factor as {da}x{db}",
            rho.dim()
        )));
    }
    if traced > 1 {
        return Err(Error::Dimension(format!("subsystem {traced} not in {{0,1}}")));
    }
    let m = rho.matrix();
    let out = if traced == 1 {
        CMatrix::from_fn(da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum())
    } else {
        CMatrix::from_fn(db, |i, j| (0..da).map(|k| m[(k * db + i, k * db + j)]).sum())
    };
    Ok(DensityMatrix::from_channel(out))
}

/// Outcome of [`validate_density`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityDiagnostics {
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl fmt::Display for DensityDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hermiticity defect {:.3e}, trace defect {:.3e}, min eigenvalue {:.3e} ({})",
            self.hermiticity_defect,
            self.trace_defect,
            self.min_eigenvalue,
            if self.passed { "pass" } else { "fail" }
        )
    }
}

/// Checks Hermiticity, unit trace and positivity against the crate tolerances.
pub fn validate_density(m: &CMatrix) -> DensityDiagnostics {
    let hermiticity_defect = m.hermiticity_defect();
    let tr = m.trace();
    let trace_defect = (tr - cr(1.0)).norm();
    let min_eigenvalue = jacobi_eigen(m)
        .values
        .last()
        .copied()
        .unwrap_or(f64::NAN);
    let passed = hermiticity_defect <= HERMITIAN_TOL
        && trace_defect <= TRACE_TOL
        && min_eigenvalue >= PSD_TOL;
    DensityDiagnostics {
        hermiticity_defect,
        trace_defect,
        min_eigenvalue,
        passed,
    }
}

/// `½ Σ |λ_k(ρ − σ)|`
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).hermitian_part();
    0.5 * jacobi_eigen(&diff).values.iter().map(|l| l.abs()).sum::<f64>()
}

/// Pauli matrices `[I, X, Y, Z]` in the `{|0⟩, |1⟩}` basis.
pub fn pauli(index: usize) -> CMatrix {
    let z = cr(0.0);
    let o = cr(1.0);
    let i = c(0.0, 1.0);
    let entries = match index {
        0 => vec![o, z, z, o],
        1 => vec![z, o, o, z],
        2 => vec![z, -i, i, z],
        3 => vec![o, z, z, -o],
        _ => panic!("pauli index {index} out of range"),
    };
    CMatrix { dim: 2, data: entries }
}

/// Projector `(I + n·σ)/2` onto the Bloch direction `n` (unit vector).
pub fn bloch_projector(n: [f64; 3]) -> CMatrix {
    let mut m = CMatrix::identity(2);
    for (k, nk) in n.iter().enumerate() {
        m = &m + &pauli(k + 1).scale(*nk);
    }
    m.scale(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singlet() -> DensityMatrix {
        let s = 1.0 / 2f64.sqrt();
        let psi = StateVector::new(vec![cr(0.0), cr(s), cr(-s), cr(0.0)]).unwrap();
        DensityMatrix::from_pure(&psi)
    }

    #[test]
    fn identity_tensor_identity() {
        let i4 = tensor(&CMatrix::identity(2), &CMatrix::identity(2));
        assert_eq!(i4, CMatrix::identity(4));
    }

    #[test]
    fn tensor_basis_ordering() {
        let plus = StateVector::basis(2, 0).projector();
        let minus = StateVector::basis(2, 1).projector();
        let t = tensor(&plus, &minus);
        assert_eq!(t, CMatrix::from_real_diagonal(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn partial_transpose_singlet_min_eigenvalue() {
        let pt = partial_transpose(&singlet(), 1).unwrap();
        let ev = pt.eigen().values;
        assert!((ev[3] + 0.5).abs() < 1e-12, "{ev:?}");
        for l in &ev[..3] {
            assert!((l - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_transpose_is_involution() {
        let rho = singlet();
        let twice = partial_transpose_matrix(&partial_transpose_matrix(rho.matrix(), 0).unwrap(), 0)
            .unwrap();
        assert_eq!(&twice, rho.matrix());
    }

    #[test]
    fn partial_transpose_rejects_wrong_dim() {
        let rho = DensityMatrix::maximally_mixed(8);
        assert!(matches!(partial_transpose(&rho, 0), Err(Error::Dimension(_))));
        assert!(matches!(
            partial_transpose(&DensityMatrix::maximally_mixed(4), 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn partial_trace_of_singlet_is_maximally_mixed() {
        for k in 0..2 {
            let r = partial_trace(&singlet(), [2, 2], k).unwrap();
            assert!(r.matrix().max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_factorization() {
        let rho = DensityMatrix::maximally_mixed(8);
        assert!(matches!(partial_trace(&rho, [2, 2], 0), Err(Error::Dimension(_))));
        assert!(partial_trace(&rho, [2, 4], 0).is_ok());
        assert!(partial_trace(&rho, [4, 2], 1).is_ok());
    }

    #[test]
    fn eig_identity_and_projector() {
        let e = eig_hermitian(&CMatrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
        let e = eig_hermitian(singlet().matrix()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        for l in &e.values[1..] {
            assert!(l.abs() < 1e-14);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2);
        m[(0, 1)] = cr(1.0);
        assert!(matches!(eig_hermitian(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn validate_flags_trace_defect() {
        let m = CMatrix::identity(4).scale(0.9 / 4.0);
        let d = validate_density(&m);
        assert!(!d.passed);
        assert!((d.trace_defect - 0.1).abs() < 1e-12);
        assert!(validate_density(singlet().matrix()).passed);
    }

    #[test]
    fn validate_reports_negative_eigenvalue() {
        let m = CMatrix::from_real_diagonal(&[0.6, 0.5, -0.1, 0.0]);
        let d = validate_density(&m);
        assert!(!d.passed);
        assert!((d.min_eigenvalue + 0.1).abs() < 1e-12);
    }

    #[test]
    fn state_vector_normalizes() {
        let v = StateVector::new(vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(StateVector::new(vec![cr(0.0); 2]).is_err());
    }

    #[test]
    fn bloch_projector_is_rank_one() {
        let p = bloch_projector([0.0, 0.6, 0.8]);
        assert!((&p * &p).max_abs_diff(&p) < 1e-15);
        assert!((p.trace().re - 1.0).abs() < 1e-15);
    }
}
