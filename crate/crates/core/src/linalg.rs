//! Dense complex vectors and matrices with the Hermitian operations used by
//! the channel, metric and relaxation code.
//!
//! Both types are thin newtypes over `nalgebra` storage. The inner values are
//! reachable through [`CVector::as_inner`] / [`CMatrix::as_inner`] for the few
//! places that need raw factorizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CVector(DVector<C64>);

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: CMatrix,
}

impl CVector {
    pub fn from_vec(entries: Vec<C64>) -> Self {
        Self(DVector::from_vec(entries))
    }

    pub fn from_real(entries: &[f64]) -> Self {
        Self(DVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    /// Vector with entries `exp(j * phase_i)`.
    pub fn from_phases(phases: &[f64]) -> Self {
        Self(DVector::from_iterator(
            phases.len(),
            phases.iter().map(|&p| C64::from_polar(1.0, p)),
        ))
    }

    pub fn from_inner(v: DVector<C64>) -> Self {
        Self(v)
    }

    pub fn as_inner(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &C64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    /// `selfᴴ other`.
    pub fn dot(&self, other: &CVector) -> Result<C64> {
        check_len(self.len(), other.len(), "inner product")?;
        Ok(self.0.dotc(&other.0))
    }

    pub fn conj(&self) -> CVector {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, factor: C64) -> CVector {
        Self(&self.0 * factor)
    }

    pub fn add(&self, other: &CVector) -> Result<CVector> {
        check_len(self.len(), other.len(), "vector sum")?;
        Ok(Self(&self.0 + &other.0))
    }

    /// Unit-norm copy; `None` for the zero vector.
    pub fn normalized(&self) -> Option<CVector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| Self(&self.0 / C64::new(n, 0.0)))
    }

    /// Entrywise projection onto the unit circle. Zero entries map to 1.
    pub fn unit_modulus(&self) -> CVector {
        Self(self.0.map(|z| {
            if z.norm() > 0.0 {
                C64::from_polar(1.0, z.arg())
            } else {
                C64::new(1.0, 0.0)
            }
        }))
    }

    pub fn max_modulus_deviation(&self) -> f64 {
        self.0
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl CMatrix {
    /// Builds from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix from {} entries",
                entries.len()
            )));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, entries)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &CVector) -> Self {
        Self(DMatrix::from_diagonal(diag.as_inner()))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_diagonal(&CVector::from_real(diag))
    }

    pub fn from_inner(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn as_inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn adjoint(&self) -> CMatrix {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> CMatrix {
        Self(self.0.transpose())
    }

    pub fn scale(&self, factor: C64) -> CMatrix {
        Self(&self.0 * factor)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.0.shape() != other.0.shape() {
            return Err(Error::DimensionMismatch(format!(
                "matrix sum {:?} + {:?}",
                self.0.shape(),
                other.0.shape()
            )));
        }
        Ok(Self(&self.0 + &other.0))
    }

    pub fn mul_vec(&self, x: &CVector) -> Result<CVector> {
        check_len(self.cols(), x.len(), "matrix-vector product")?;
        Ok(CVector(&self.0 * x.as_inner()))
    }

    pub fn mul(&self, other: &CMatrix) -> Result<CMatrix> {
        check_len(self.cols(), other.rows(), "matrix product")?;
        Ok(Self(&self.0 * &other.0))
    }

    pub fn column(&self, c: usize) -> CVector {
        CVector(self.0.column(c).into_owned())
    }

    pub fn diagonal(&self) -> CVector {
        CVector(self.0.diagonal())
    }

    /// `‖m − mᴴ‖_F / max(‖m‖_F, tiny)`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        (&self.0 - self.0.adjoint()).norm() / scale
    }

    /// `(m + mᴴ)/2` when `m` is Hermitian within [`HERMITIAN_TOL`].
    pub fn symmetrized(&self) -> Result<CMatrix> {
        if !self.is_finite() {
            return Err(Error::NonFinite("matrix"));
        }
        let defect = self.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NonHermitian(defect));
        }
        Ok(Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0)))
    }
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input is symmetrized before decomposition, which absorbs the roundoff
/// left by channel products.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermEig> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let sym = m.symmetrized()?;
    let eig = SymmetricEigen::new(sym.0);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.rows();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermEig {
        eigenvalues,
        eigenvectors: CMatrix(vectors),
    })
}

impl HermEig {
    /// `U diag(λ) Uᴴ`.
    pub fn reconstruct(&self) -> CMatrix {
        let u = self.eigenvectors.as_inner();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)),
        ));
        CMatrix(u * d * u.adjoint())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Real part of `xᴴ m x` for Hermitian `m`.
pub fn quad_form(x: &CVector, m: &CMatrix) -> Result<f64> {
    if !m.is_square() || m.rows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form of length-{} vector with {}x{} matrix",
            x.len(),
            m.rows(),
            m.cols()
        )));
    }
    let mx = m.as_inner() * x.as_inner();
    Ok(x.as_inner().dotc(&mx).re)
}

/// `x xᴴ`.
pub fn outer(x: &CVector) -> CMatrix {
    CMatrix(x.as_inner() * x.as_inner().adjoint())
}
