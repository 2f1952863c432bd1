//! Dense complex matrices and the handful of kernels the measurement layers
//! need: Kronecker products, partial traces, Hermitian eigendecomposition,
//! positivity tests, square roots, unitary completion and Hamiltonian
//! exponentials.
//!
//! Storage is backed by `nalgebra`; the public surface speaks in row/column
//! indices and never exposes the underlying layout.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative Frobenius asymmetry accepted as Hermitian.
pub const HERM_TOL: f64 = 1e-9;
/// Reconstruction and orthonormality budget of [`eig_hermitian`].
pub const EIG_TOL: f64 = 1e-9;
/// Gram defect accepted by [`unitary_completion`].
pub const ISOMETRY_TOL: f64 = 1e-10;
/// Residual norm below which a completion candidate is discarded.
const COMPLETION_SKIP: f64 = 1e-8;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    /// Builds a matrix from row-major entries, rejecting bad shapes and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                rows,
                cols,
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("matrix must be non-empty".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(CMatrix(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(r * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    rows: r,
                    cols,
                    expected: cols,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(r, cols, entries)
    }

    /// Convenience for real matrices written row by row.
    ///
    /// # Panics
    /// Panics on ragged or non-finite input; intended for literals.
    pub fn real(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| c(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows).expect("invalid real matrix literal")
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { ZERO })
    }

    pub fn real_diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { ZERO })
    }

    /// The matrix unit `|i⟩⟨j|` on `C^n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        Self::from_fn(n, n, |a, b| if a == i && b == j { ONE } else { ZERO })
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_fn(v.len(), 1, |i, _| v[i])
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

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        CMatrix(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix(self.0.map(|z| z * s))
    }

    pub fn scale_real(&self, s: f64) -> Self {
        CMatrix(self.0.map(|z| z * s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &CMatrix) -> f64 {
        debug_assert_eq!(self.rows(), other.rows());
        debug_assert_eq!(self.cols(), other.cols());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn trace(&self) -> Result<C64> {
        trace(self)
    }

    /// `‖A − A†‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.0[(i, j)] - self.0[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self) -> bool {
        self.is_square() && self.hermitian_defect() <= HERM_TOL * self.frobenius_norm().max(1.0)
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        CMatrix((&self.0 + self.0.adjoint()) * c(0.5, 0.0))
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        tensor_product(self, other)
    }

    pub fn is_diagonal(&self) -> bool {
        let (r, cl) = (self.rows(), self.cols());
        (0..r).all(|i| (0..cl).all(|j| i == j || self.0[(i, j)] == ZERO))
    }

    /// `A v` for a vector `v`.
    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `A X A†`.
    pub fn sandwich(&self, x: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &x.0 * self.0.adjoint())
    }

    /// `A† X A`.
    pub fn sandwich_adjoint(&self, x: &CMatrix) -> CMatrix {
        CMatrix(self.0.adjoint() * &x.0 * &self.0)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: &CMatrix) -> CMatrix {
                CMatrix(&self.0 $op &rhs.0)
            }
        }
        impl $tr<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: CMatrix) -> CMatrix {
                CMatrix(self.0 $op rhs.0)
            }
        }
        impl $tr<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: &CMatrix) -> CMatrix {
                CMatrix(self.0 $op &rhs.0)
            }
        }
        impl $tr<CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: CMatrix) -> CMatrix {
                CMatrix(&self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        self.0 += &rhs.0;
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-self.0)
    }
}

impl Mul<f64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: f64) -> CMatrix {
        self.scale_real(s)
    }
}

impl Mul<f64> for CMatrix {
    type Output = CMatrix;
    fn mul(self, s: f64) -> CMatrix {
        self.scale_real(s)
    }
}

impl Mul<C64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: C64) -> CMatrix {
        self.scale(s)
    }
}

impl Mul<C64> for CMatrix {
    type Output = CMatrix;
    fn mul(self, s: C64) -> CMatrix {
        self.scale(s)
    }
}

fn require_square(a: &CMatrix) -> Result<usize> {
    if a.is_square() {
        Ok(a.rows())
    } else {
        Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        })
    }
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn trace(a: &CMatrix) -> Result<C64> {
    let n = require_square(a)?;
    Ok((0..n).map(|i| a.0[(i, i)]).sum())
}

/// `Tr(AB)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.cols(), b.rows());
    debug_assert_eq!(a.rows(), b.cols());
    let mut acc = ZERO;
    for i in 0..a.rows() {
        for k in 0..a.cols() {
            acc += a.0[(i, k)] * b.0[(k, i)];
        }
    }
    acc
}

/// Kronecker product `a ⊗ b`.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix(a.0.kronecker(&b.0))
}

/// Which tensor factor survives a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of an operator on `C^{dim_first} ⊗ C^{dim_second}`.
pub fn partial_trace(a: &CMatrix, dim_first: usize, dim_second: usize, keep: Keep) -> Result<CMatrix> {
    let n = require_square(a)?;
    if dim_first == 0 || dim_second == 0 || n != dim_first * dim_second {
        return Err(Error::DimensionMismatch {
            expected: dim_first * dim_second,
            found: n,
        });
    }
    let m = &a.0;
    Ok(match keep {
        Keep::First => CMatrix::from_fn(dim_first, dim_first, |i, j| {
            (0..dim_second)
                .map(|k| m[(i * dim_second + k, j * dim_second + k)])
                .sum()
        }),
        Keep::Second => CMatrix::from_fn(dim_second, dim_second, |i, j| {
            (0..dim_first)
                .map(|k| m[(k * dim_second + i, k * dim_second + j)])
                .sum()
        }),
    })
}

/// Spectral decomposition `A = V Λ V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending; ties keep the solver's order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: CMatrix,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let lambda = CMatrix::real_diag(&self.eigenvalues);
        v * lambda * v.adjoint()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.column(k)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V†` for a real spectral function.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        self.map_complex(|x| c(f(x), 0.0))
    }

    /// `V f(Λ) V†` for a complex spectral function.
    pub fn map_complex(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let vals: Vec<C64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        let v = &self.eigenvectors;
        v * CMatrix::diag(&vals) * v.adjoint()
    }
}

fn check_hermitian(a: &CMatrix) -> Result<()> {
    require_square(a)?;
    let scale = a.frobenius_norm().max(1.0);
    let asymmetry = a.hermitian_defect() / scale;
    if asymmetry > HERM_TOL {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Exactly diagonal input is decomposed without iteration, so diagonal
/// observables keep their eigenvalues bit for bit.
pub fn eig_hermitian(a: &CMatrix) -> Result<EigenDecomposition> {
    check_hermitian(a)?;
    let n = a.rows();
    let (values, vectors) = if a.is_diagonal() {
        let vals: Vec<f64> = (0..n).map(|i| a.0[(i, i)].re).collect();
        (vals, DMatrix::<C64>::identity(n, n))
    } else {
        let eig = nalgebra::SymmetricEigen::new(a.hermitian_part().0);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMatrix) -> Result<f64> {
    Ok(eig_hermitian(a)?.min_eigenvalue())
}

/// True iff the smallest eigenvalue is at least `-tol · max(1, ‖a‖_F)`.
pub fn is_psd(a: &CMatrix, tol: f64) -> Result<bool> {
    let lmin = min_eigenvalue(a)?;
    Ok(lmin >= -tol * a.frobenius_norm().max(1.0))
}

/// Positive square root of a positive semidefinite matrix.
pub fn sqrt_psd(a: &CMatrix) -> Result<CMatrix> {
    let eig = eig_hermitian(a)?;
    let lmin = eig.min_eigenvalue();
    if lmin < -EIG_TOL * a.frobenius_norm().max(1.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    Ok(eig.map_real(|x| x.max(0.0).sqrt()))
}

/// `‖V†V − I‖_F`.
pub fn gram_defect(v: &CMatrix) -> f64 {
    (v.adjoint() * v).distance(&CMatrix::identity(v.cols()))
}

/// Extends orthonormal columns to a square unitary.
///
/// The input columns are kept verbatim as the leading columns; the rest are
/// canonical basis vectors `e_0, e_1, ...` orthogonalized in order, skipping
/// any whose residual norm falls below `1e-8`.
pub fn unitary_completion(isometry_columns: &CMatrix) -> Result<CMatrix> {
    let n = isometry_columns.rows();
    let k = isometry_columns.cols();
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot complete {k} columns in dimension {n}"
        )));
    }
    let gram = gram_defect(isometry_columns);
    if gram > ISOMETRY_TOL {
        return Err(Error::NotIsometry { gram_defect: gram });
    }

    let mut basis: Vec<Vec<C64>> = (0..k).map(|j| isometry_columns.column(j)).collect();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut r = vec![ZERO; n];
        r[e] = ONE;
        // two passes of Gram-Schmidt keep the result orthogonal to ~1e-16
        for _ in 0..2 {
            for b in &basis {
                let overlap: C64 = b.iter().zip(&r).map(|(bi, ri)| bi.conj() * ri).sum();
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= overlap * bi;
                }
            }
        }
        let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < COMPLETION_SKIP {
            continue;
        }
        basis.push(r.into_iter().map(|z| z / norm).collect());
    }
    debug_assert_eq!(basis.len(), n);
    Ok(CMatrix::from_fn(n, n, |i, j| basis[j][i]))
}

/// `exp(−i·tau·h/hbar)` via the spectral decomposition of `h`.
pub fn evolution_unitary(h: &CMatrix, tau: f64, hbar: f64) -> Result<CMatrix> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite, got {tau}")));
    }
    let eig = eig_hermitian(h)?;
    Ok(eig.map_complex(|x| C64::from_polar(1.0, -tau * x / hbar)))
}

/// Pauli matrices.
pub mod pauli {
    use super::{c, CMatrix};

    pub fn x() -> CMatrix {
        CMatrix::real(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]])
            .expect("literal")
    }

    pub fn z() -> CMatrix {
        CMatrix::real_diag(&[1.0, -1.0])
    }
}
