//! Dense complex matrices: Kronecker products, norms, the Hermitian
//! eigendecomposition used throughout the pipeline, and the commutation
//! permutation relating `A ⊗ B` to `B ⊗ A`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Errors raised by the dense linear-algebra layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix is not Hermitian: |A - A^H|_F = {deviation:e} exceeds {allowed:e}")]
    NotHermitian { deviation: f64, allowed: f64 },

    #[error("eigensolver did not converge for a {0}x{0} matrix")]
    ConvergenceFailure(usize),

    #[error("entry count {got} does not match shape {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, got: usize },
}

/// A dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self, LinalgError> {
        if entries.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch { rows, cols, got: entries.len() });
        }
        Ok(CMatrix(DMatrix::from_row_slice(rows, cols, entries)))
    }

    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        let z: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(rows, cols, &z)
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { C64::new(0.0, 0.0) })
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        CMatrix(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
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

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        CMatrix(self.0.map(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    /// Matrix formed by the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        CMatrix(self.0.select_columns(cols.iter()))
    }

    /// Copy of the `nrows x ncols` sub-block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nrows: usize, ncols: usize) -> Self {
        CMatrix(self.0.view((r0, c0), (nrows, ncols)).into_owned())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        self.0.view_mut((r0, c0), (b.rows(), b.cols())).copy_from(&b.0);
    }

    /// Block-diagonal matrix `diag(b_1, ..., b_k)`.
    pub fn block_diag(blocks: &[CMatrix]) -> Self {
        let rows = blocks.iter().map(CMatrix::rows).sum();
        let cols = blocks.iter().map(CMatrix::cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for b in blocks {
            out.set_block(r, c, b);
            r += b.rows();
            c += b.cols();
        }
        out
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        kron(self, other)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Frobenius norm of everything outside the diagonal blocks of the
    /// given sizes. Summed directly, not as a difference of norms.
    pub fn off_block_norm(&self, sizes: &[usize]) -> f64 {
        let mut owner = Vec::with_capacity(self.rows());
        for (b, &len) in sizes.iter().enumerate() {
            owner.extend(std::iter::repeat_n(b, len));
        }
        assert_eq!(owner.len(), self.rows(), "block sizes must cover the matrix");
        let mut sum = 0.0;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                if owner[i] != owner[j] {
                    sum += self.0[(i, j)].norm_sqr();
                }
            }
        }
        sum.sqrt()
    }

    /// Largest absolute imaginary part over all entries.
    pub fn max_abs_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    /// `‖A − B‖_F ≤ tol · max(1, ‖A‖_F)`.
    pub fn approx_eq(&self, other: &CMatrix, tol: f64) -> bool {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return false;
        }
        (self - other).frobenius_norm() <= tol * self.frobenius_norm().max(1.0)
    }

    /// `‖A†A − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.cols();
        (&(&self.adjoint() * self) - &CMatrix::identity(n)).frobenius_norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.unitarity_defect() <= tol
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).frobenius_norm()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

/// Kronecker product; entry `((i,p),(j,q))` is `a[i,j] * b[p,q]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = (b.rows(), b.cols());
    CMatrix::from_fn(a.rows() * br, a.cols() * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Permutation pair `(P, F)` with `B ⊗ A = P (A ⊗ B) F` for `A` of size
/// `n` and `B` of size `c`, and `P = F†`.
///
/// `F = [f | h f | … | h^{c-1} f]` where `f` places column `j` of the
/// `cn × n` selector at row `j c`, and `h` moves row `k` to row `k + 1`.
pub fn commutation_permutation(n: usize, c: usize) -> (CMatrix, CMatrix) {
    let dim = n * c;
    let mut selector = CMatrix::zeros(dim, n);
    for j in 0..n {
        selector[(j * c, j)] = C64::new(1.0, 0.0);
    }
    let shift = CMatrix::from_fn(dim, dim, |i, j| if i == j + 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let mut f = CMatrix::zeros(dim, dim);
    let mut power = selector;
    for m in 0..c {
        f.set_block(0, m * n, &power);
        power = &shift * &power;
    }
    (f.adjoint(), f)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues in decreasing order.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigResult {
    /// `‖A V − V Λ‖_F`.
    pub fn residual(&self, a: &CMatrix) -> f64 {
        let lambda: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        let vl = &self.vectors * &CMatrix::from_diagonal(&lambda);
        (&(a * &self.vectors) - &vl).frobenius_norm()
    }
}

const SIGNIFICANT: f64 = 1e-8;

/// Index of the first component whose modulus is significant.
fn leading_index(v: &[C64]) -> usize {
    v.iter().position(|z| z.norm() > SIGNIFICANT).unwrap_or(v.len())
}

/// Hermitian eigendecomposition.
///
/// Eigenvalues come back in decreasing order; exact ties are ordered by
/// the position of the first significant eigenvector component. Each
/// eigenvector is rephased so that this component is real and positive.
/// Exactly real input is solved in real arithmetic, so its eigenvectors
/// are real.
pub fn hermitian_eig(a: &CMatrix, tol_eig: f64) -> Result<EigResult, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    let norm = a.frobenius_norm();
    let deviation = a.hermiticity_defect();
    let allowed = tol_eig * norm;
    if deviation > allowed {
        return Err(LinalgError::NotHermitian { deviation, allowed });
    }
    if n == 0 {
        return Ok(EigResult { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let herm = (a + &a.adjoint()).scale_real(0.5);
    let max_iter = 1000 * n.max(4);

    let (values, vectors): (Vec<f64>, DMatrix<C64>) = if herm.is_real() {
        let re = herm.0.map(|z| z.re);
        let eig = SymmetricEigen::try_new(re, f64::EPSILON, max_iter).ok_or(LinalgError::ConvergenceFailure(n))?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::try_new(herm.0.clone(), f64::EPSILON, max_iter)
            .ok_or(LinalgError::ConvergenceFailure(n))?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let columns: Vec<Vec<C64>> = (0..n).map(|j| vectors.column(j).iter().copied().collect()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| leading_index(&columns[i]).cmp(&leading_index(&columns[j])))
    });

    let mut out = CMatrix::zeros(n, n);
    let mut sorted_values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let col = &columns[src];
        let lead = leading_index(col);
        let phase = if lead < n { col[lead].conj() / col[lead].norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            let mut z = col[i] * phase;
            if i == lead {
                z = C64::new(z.norm(), 0.0);
            }
            out[(i, k)] = z;
        }
        sorted_values.push(values[src]);
    }

    let result = EigResult { values: sorted_values, vectors: out };
    let check = tol_eig.max(1e-10) * norm.max(f64::MIN_POSITIVE) * (n as f64).sqrt();
    if norm > 0.0 && result.residual(&herm) > check {
        return Err(LinalgError::ConvergenceFailure(n));
    }
    Ok(result)
}
