//! Dense complex linear algebra primitives.
//!
//! Everything downstream works with one matrix type: [`DenseMatrix`], a dense
//! row-major matrix of `Complex64` entries. Real matrices are represented
//! with exactly-zero imaginary parts, so a single code path covers both the
//! common real case and the genuinely complex reduction matrices produced by
//! spectral constructions on directed graphs.
//!
//! Decompositions (general eigen, Hermitian eigen, SVD) are backed by the
//! system reference LAPACK; pseudoinverses, orthogonal projections, and
//! kernel/range bases are derived from the SVD. Intended scale is desk-sized
//! (n up to a few hundred), so products are computed naively rather than
//! through a tuned BLAS.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lapack;

/// Errors from linear-algebra primitives.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("LAPACK {routine} did not converge (info = {info})")]
    NonConvergence { routine: &'static str, info: i32 },

    #[error("LAPACK {routine} rejected argument {arg} (internal error)")]
    BadArgument { routine: &'static str, arg: i32 },

    #[error("basis columns are rank deficient (σ_min/σ_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix data: {0}")]
    InvalidData(String),
}

impl From<lapack::RoutineError> for LinalgError {
    fn from(e: lapack::RoutineError) -> Self {
        if e.info > 0 {
            LinalgError::NonConvergence {
                routine: e.routine,
                info: e.info,
            }
        } else {
            LinalgError::BadArgument {
                routine: e.routine,
                arg: -e.info,
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix with row-major storage.
///
/// Invariants: `rows ≥ 1`, `cols ≥ 1`, `data.len() == rows * cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    /// Zero matrix of the given shape. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be ≥ 1");
        DenseMatrix {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    /// n×n identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    /// Builds a matrix entry-by-entry from a closure over `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a real matrix entry-by-entry (imaginary parts exactly zero).
    pub fn from_real_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(rows, cols, |i, j| Complex64::new(f(i, j), 0.0))
    }

    /// Builds a real matrix from nested row slices. All rows must have equal,
    /// nonzero length.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LinalgError::InvalidData("empty row data".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::InvalidData("ragged row data".into()));
        }
        Ok(Self::from_real_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    /// Builds a matrix whose rows are the given complex vectors.
    pub fn from_complex_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LinalgError::InvalidData("empty row data".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::InvalidData("ragged row data".into()));
        }
        Ok(Self::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    /// Builds a matrix whose columns are the given complex vectors.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        if columns.is_empty() || columns[0].is_empty() {
            return Err(LinalgError::InvalidData("empty column data".into()));
        }
        let rows = columns[0].len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(LinalgError::InvalidData("ragged column data".into()));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    /// Diagonal matrix from complex entries.
    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// True iff every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// Row `i` as a vector.
    pub fn row(&self, i: usize) -> Vec<Complex64> {
        assert!(i < self.rows);
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<Complex64> {
        assert!(j < self.cols);
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// All columns, left to right.
    pub fn columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    /// Transpose (no conjugation).
    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose `A^H`.
    pub fn conj_transpose(&self) -> DenseMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Entry-wise map.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul dimension mismatch: {}×{} · {}×{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == Complex64::ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self[(i, j)] * x[j])
                    .sum::<Complex64>()
            })
            .collect()
    }

    /// Matrix–vector product with a real vector; the matrix must be real.
    /// Returns the real parts (exact, since nothing complex enters).
    pub fn mul_real_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_real_vec dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].re * x[j]).sum())
            .collect()
    }

    /// Hermitian part `(A + A^H)/2`.
    pub fn hermitian_part(&self) -> DenseMatrix {
        assert!(self.is_square(), "hermitian_part requires a square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)].conj())
        })
    }

    /// Scales every entry.
    pub fn scale(&self, s: Complex64) -> DenseMatrix {
        self.map(|z| z * s)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum())
            .fold(0.0, f64::max)
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].norm()).sum())
            .fold(0.0, f64::max)
    }

    /// Induced 2-norm (largest singular value).
    pub fn norm_two(&self) -> Result<f64> {
        Ok(svd(self)?.sigma.first().copied().unwrap_or(0.0))
    }

    /// Column-major copy of the data (LAPACK boundary helper).
    fn to_col_major(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self[(i, j)];
            }
        }
        out
    }

    fn from_col_major(rows: usize, cols: usize, data: &[Complex64]) -> Self {
        Self::from_fn(rows, cols, |i, j| data[j * rows + i])
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl std::ops::Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + rhs[(i, j)])
    }
}

impl std::ops::Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - rhs[(i, j)])
    }
}

// ---------------------------------------------------------------------------
// JSON representation: {"re": [[...]], "im": [[...]]} with "im" optional.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    re: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<f64>>>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let re = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].re).collect())
            .collect();
        let im = if self.is_real() {
            None
        } else {
            Some(
                (0..self.rows)
                    .map(|i| (0..self.cols).map(|j| self[(i, j)].im).collect())
                    .collect(),
            )
        };
        MatrixJson { re, im }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(deserializer)?;
        let rows = raw.re.len();
        if rows == 0 || raw.re[0].is_empty() {
            return Err(D::Error::custom("matrix must have at least one row and column"));
        }
        let cols = raw.re[0].len();
        if raw.re.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged rows in \"re\""));
        }
        if let Some(im) = &raw.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom("\"im\" shape differs from \"re\""));
            }
        }
        Ok(DenseMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(raw.re[i][j], raw.im.as_ref().map_or(0.0, |im| im[i][j]))
        }))
    }
}

// ---------------------------------------------------------------------------
// Decompositions
// ---------------------------------------------------------------------------

/// Eigenvalues (and optionally right eigenvectors) of a square matrix.
///
/// Eigenvalues are sorted by descending real part, ties broken by descending
/// imaginary part, so downstream constructions are reproducible. When
/// eigenvectors are computed, column `k` of `right_eigenvectors` pairs with
/// `eigenvalues[k]` and has unit 2-norm.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub right_eigenvectors: Option<DenseMatrix>,
    /// Numerically non-diagonalizable: the eigenvector matrix is singular to
    /// working precision (σ_min/σ_max ≤ 1e-8).
    pub is_defective: bool,
}

impl SpectralDecomposition {
    /// Spectral abscissa: the largest real part over the spectrum.
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Deterministic eigenvalue order: descending real part, then descending
/// imaginary part. Adding `0.0` collapses `-0.0` into `+0.0` so a conjugate
/// pair on the imaginary axis always lists `+iω` before `-iω`.
fn eigen_order(a: Complex64, b: Complex64) -> std::cmp::Ordering {
    (b.re + 0.0)
        .total_cmp(&(a.re + 0.0))
        .then((b.im + 0.0).total_cmp(&(a.im + 0.0)))
}

/// Sort permutation for eigenvalues: descending real part, ties broken by
/// descending imaginary part. Real parts that agree to within `1e-12 · |λ|max`
/// count as tied — conjugate pairs come out of the QR iteration with real
/// parts differing by rounding noise, and a strict lexicographic sort on the
/// raw values would order such pairs unpredictably.
fn eigen_sort_permutation(w: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| eigen_order(w[i], w[j]));
    let scale = w.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    let mut start = 0;
    for k in 1..=order.len() {
        let split = k == order.len() || (w[order[k - 1]].re - w[order[k]].re).abs() > tol;
        if split {
            order[start..k].sort_by(|&i, &j| (w[j].im + 0.0).total_cmp(&(w[i].im + 0.0)));
            start = k;
        }
    }
    order
}

/// Full eigendecomposition of a square matrix, with right eigenvectors.
///
/// # Errors
/// [`LinalgError::NotSquare`] for non-square input;
/// [`LinalgError::NonConvergence`] if the QR iteration stalls.
pub fn eigen(a: &DenseMatrix) -> Result<SpectralDecomposition> {
    eigen_impl(a, true)
}

/// Eigenvalues only — cheaper when eigenvectors are not needed.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    Ok(eigen_impl(a, false)?.eigenvalues)
}

fn eigen_impl(a: &DenseMatrix, want_vectors: bool) -> Result<SpectralDecomposition> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut buf = a.to_col_major();
    let (w, vr) = lapack::zgeev(n, &mut buf, want_vectors)?;

    let order = eigen_sort_permutation(&w);
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| w[i]).collect();

    let right_eigenvectors = match vr {
        Some(vr) => {
            let v = DenseMatrix::from_col_major(n, n, &vr);
            Some(DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]))
        }
        None => None,
    };

    let is_defective = match &right_eigenvectors {
        Some(v) => {
            let s = &svd(v)?.sigma;
            let smax = s.first().copied().unwrap_or(0.0);
            let smin = s.last().copied().unwrap_or(0.0);
            smax == 0.0 || smin <= 1e-8 * smax
        }
        None => false,
    };

    Ok(SpectralDecomposition {
        eigenvalues,
        right_eigenvectors,
        is_defective,
    })
}

/// Eigenvalues (ascending, real) and orthonormal eigenvectors of a Hermitian
/// matrix. Only the Hermitian part of the input participates, so callers may
/// pass a matrix that is Hermitian up to rounding.
pub fn hermitian_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut buf = a.hermitian_part().to_col_major();
    let w = lapack::zheev(n, &mut buf)?;
    Ok((w, DenseMatrix::from_col_major(n, n, &buf)))
}

/// Singular value decomposition `A = U Σ V^H`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m×m unitary.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative; length `min(m, n)`.
    pub sigma: Vec<f64>,
    /// n×n unitary (not conjugated: `A = U diag(σ) V^H`).
    pub v: DenseMatrix,
}

impl Svd {
    /// Numerical rank at the given absolute threshold on singular values.
    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tol).count()
    }
}

/// Full SVD of any matrix.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = (a.rows, a.cols);
    let mut buf = a.to_col_major();
    let (u, s, vh) = lapack::zgesvd(m, n, &mut buf)?;
    Ok(Svd {
        u: DenseMatrix::from_col_major(m, m, &u),
        sigma: s,
        v: DenseMatrix::from_col_major(n, n, &vh).conj_transpose(),
    })
}

/// Relative rank threshold: singular values at or below `RANK_TOL_REL · σ_max`
/// are treated as zero. Chosen so desk-scale Laplacian kernels are detected
/// exactly while genuine near-dependence still counts as rank-deficient.
pub const RANK_TOL_REL: f64 = 1e-12;

fn effective_tol(sigma: &[f64], rank_tol: Option<f64>) -> f64 {
    let smax = sigma.first().copied().unwrap_or(0.0);
    rank_tol.unwrap_or(RANK_TOL_REL * smax)
}

/// Moore–Penrose pseudoinverse.
///
/// Singular values at or below `rank_tol` (default `1e-12 · σ_max`) are
/// treated as zero. The result satisfies the four Penrose identities, and
/// `A A†` is the orthogonal projection onto the column space of `A`.
pub fn pinv(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<DenseMatrix> {
    let dec = svd(a)?;
    let tol = effective_tol(&dec.sigma, rank_tol);
    let k = dec.sigma.len();
    // A† = V Σ⁺ U^H with Σ⁺ inverting only the retained singular values.
    let mut out = DenseMatrix::zeros(a.cols, a.rows);
    for r in 0..k {
        let s = dec.sigma[r];
        if s <= tol {
            break; // nonincreasing order: the rest are below tolerance too
        }
        let inv = 1.0 / s;
        for i in 0..a.cols {
            let vir = dec.v[(i, r)];
            if vir == Complex64::ZERO {
                continue;
            }
            for j in 0..a.rows {
                out[(i, j)] += vir * inv * dec.u[(j, r)].conj();
            }
        }
    }
    Ok(out)
}

/// Numerical rank at the default relative tolerance.
pub fn rank(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<usize> {
    let dec = svd(a)?;
    let tol = effective_tol(&dec.sigma, rank_tol);
    Ok(dec.sigma.iter().filter(|&&s| s > tol).count())
}

/// Orthonormal basis of the kernel of `A`, as a list of column vectors
/// (possibly empty when `A` has full column rank).
pub fn null_space(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<Vec<Vec<Complex64>>> {
    let dec = svd(a)?;
    let tol = effective_tol(&dec.sigma, rank_tol);
    let r = dec.sigma.iter().filter(|&&s| s > tol).count();
    Ok((r..a.cols).map(|j| dec.v.column(j)).collect())
}

/// Orthonormal basis of the column space of `A`, as a list of column vectors.
pub fn range_space(a: &DenseMatrix, rank_tol: Option<f64>) -> Result<Vec<Vec<Complex64>>> {
    let dec = svd(a)?;
    let tol = effective_tol(&dec.sigma, rank_tol);
    let r = dec.sigma.iter().filter(|&&s| s > tol).count();
    Ok((0..r).map(|j| dec.u.column(j)).collect())
}

/// Orthogonal projection onto the span of the given columns in `ℂ^dim`.
///
/// The result `P` is Hermitian and idempotent with range equal to the span.
/// An empty basis yields the zero matrix (projection onto `{0}`).
///
/// # Errors
/// [`LinalgError::RankDeficient`] if the columns are linearly dependent
/// beyond tolerance (σ_min/σ_max ≤ 1e-10);
/// [`LinalgError::DimensionMismatch`] if a column has the wrong length.
pub fn orth_projection(dim: usize, basis_columns: &[Vec<Complex64>]) -> Result<DenseMatrix> {
    assert!(dim >= 1, "ambient dimension must be ≥ 1");
    if basis_columns.is_empty() {
        return Ok(DenseMatrix::zeros(dim, dim));
    }
    if basis_columns.iter().any(|c| c.len() != dim) {
        return Err(LinalgError::DimensionMismatch(format!(
            "basis columns must have length {dim}"
        )));
    }
    let b = DenseMatrix::from_columns(basis_columns)?;
    let dec = svd(&b)?;
    let k = basis_columns.len();
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let smin = dec.sigma.get(k - 1).copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= 1e-10 * smax {
        return Err(LinalgError::RankDeficient {
            ratio: if smax == 0.0 { 0.0 } else { smin / smax },
        });
    }
    // P = Q Q^H with Q the first k left singular vectors.
    let mut p = DenseMatrix::zeros(dim, dim);
    for r in 0..k {
        for i in 0..dim {
            let uir = dec.u[(i, r)];
            for j in 0..dim {
                p[(i, j)] += uir * dec.u[(j, r)].conj();
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        (a - b).max_abs()
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let a = DenseMatrix::from_real_rows(&[&[-1.0, 0.0], &[0.0, -3.0]]).unwrap();
        let dec = eigen(&a).unwrap();
        assert_abs_diff_eq!(dec.eigenvalues[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dec.eigenvalues[1].re, -3.0, epsilon = 1e-12);
        assert!(!dec.is_defective);
    }

    #[test]
    fn eigen_rotation_generator_has_imaginary_pair() {
        let a = DenseMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let dec = eigen(&a).unwrap();
        // Sorted: +i before −i (equal real parts, descending imaginary).
        assert_abs_diff_eq!(dec.eigenvalues[0].im, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dec.eigenvalues[1].im, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dec.eigenvalues[0].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_pair_laplacian() {
        let a = DenseMatrix::from_real_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        let dec = eigen(&a).unwrap();
        assert_abs_diff_eq!(dec.eigenvalues[0].re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dec.eigenvalues[1].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_vectors_satisfy_definition() {
        let a = DenseMatrix::from_real_rows(&[&[2.0, 1.0, 0.0], &[0.5, -1.0, 3.0], &[0.0, 1.0, 0.2]])
            .unwrap();
        let dec = eigen(&a).unwrap();
        let v = dec.right_eigenvectors.as_ref().unwrap();
        let norm = a.norm_two().unwrap();
        for k in 0..3 {
            let col = v.column(k);
            let av = a.mul_vec(&col);
            let max_err = av
                .iter()
                .zip(&col)
                .map(|(l, r)| (l - dec.eigenvalues[k] * r).norm())
                .fold(0.0, f64::max);
            assert!(max_err <= 1e-9 * norm, "residual {max_err}");
            let len: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert_abs_diff_eq!(len, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn eigen_flags_jordan_block_as_defective() {
        let a = DenseMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let dec = eigen(&a).unwrap();
        assert!(dec.is_defective);
    }

    #[test]
    fn hermitian_eigen_ascending_and_orthonormal() {
        let a = DenseMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        let (w, v) = hermitian_eigen(&a).unwrap();
        assert!(w[0] <= w[1]);
        // Known eigenvalues of [[2,1],[1,3]]: (5 ± √5)/2.
        assert_abs_diff_eq!(w[0], (5.0 - 5.0_f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], (5.0 + 5.0_f64.sqrt()) / 2.0, epsilon = 1e-12);
        let vhv = v.conj_transpose().matmul(&v);
        assert!(residual(&vhv, &DenseMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let id = DenseMatrix::identity(2);
        let s = svd(&id).unwrap();
        assert_abs_diff_eq!(s.sigma[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.sigma[1], 1.0, epsilon = 1e-14);

        let a = DenseMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 0.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert_abs_diff_eq!(s.sigma[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.sigma[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_unit_row_vector() {
        let r = 0.5_f64.sqrt();
        let a = DenseMatrix::from_real_rows(&[&[r, -r]]).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.sigma.len(), 1);
        assert_abs_diff_eq!(s.sigma[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstructs_input() {
        let a = DenseMatrix::from_fn(3, 2, |i, j| c(i as f64 - j as f64, 0.3 * j as f64));
        let dec = svd(&a).unwrap();
        let mut sig = DenseMatrix::zeros(3, 2);
        for (r, &s) in dec.sigma.iter().enumerate() {
            sig[(r, r)] = c(s, 0.0);
        }
        let back = dec.u.matmul(&sig).matmul(&dec.v.conj_transpose());
        assert!(residual(&back, &a) <= 1e-9 * a.norm_two().unwrap().max(1.0));
    }

    #[test]
    fn pinv_inverts_invertible() {
        let a = DenseMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 3.0]]).unwrap();
        let p = pinv(&a, None).unwrap();
        assert!(residual(&a.matmul(&p), &DenseMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn pinv_of_orthonormal_rows_is_transpose() {
        let r = 0.5_f64.sqrt();
        let a = DenseMatrix::from_real_rows(&[&[r, -r]]).unwrap();
        let p = pinv(&a, None).unwrap();
        assert!(residual(&p, &a.transpose()) < 1e-12);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero_transpose_shape() {
        let a = DenseMatrix::zeros(2, 3);
        let p = pinv(&a, None).unwrap();
        assert_eq!((p.rows(), p.cols()), (3, 2));
        assert_eq!(p.max_abs(), 0.0);
    }

    fn penrose_ok(a: &DenseMatrix, p: &DenseMatrix, scale: f64) -> bool {
        let tol = 1e-8 * scale.max(1.0);
        let apa = a.matmul(p).matmul(a);
        let pap = p.matmul(a).matmul(p);
        let ap = a.matmul(p);
        let pa = p.matmul(a);
        residual(&apa, a) <= tol
            && residual(&pap, p) <= tol
            && residual(&ap.conj_transpose(), &ap) <= tol
            && residual(&pa.conj_transpose(), &pa) <= tol
    }

    #[test]
    fn pinv_penrose_identities_random_including_rank_deficient() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let m = rng.random_range(1..=12);
            let n = rng.random_range(1..=12);
            let mut a = DenseMatrix::from_fn(m, n, |_, _| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            if trial % 3 == 0 && m > 1 {
                // Force rank deficiency by duplicating a row.
                for j in 0..n {
                    let v = a[(0, j)];
                    a[(m - 1, j)] = v;
                }
            }
            let p = pinv(&a, None).unwrap();
            let scale = a.norm_two().unwrap();
            assert!(penrose_ok(&a, &p, scale), "trial {trial} failed");
        }
    }

    #[test]
    fn pinv_times_matrix_projects_onto_range() {
        // A with column space = span(e1) in R^2.
        let a = DenseMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 0.0]]).unwrap();
        let p = pinv(&a, None).unwrap();
        let proj = a.matmul(&p);
        let expected = DenseMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(residual(&proj, &expected) < 1e-12);
    }

    #[test]
    fn orth_projection_axis_and_diagonal() {
        let p = orth_projection(2, &[vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let expected = DenseMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!(residual(&p, &expected) < 1e-12);

        let ones = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let p = orth_projection(2, &[ones]).unwrap();
        let expected = DenseMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        assert!(residual(&p, &expected) < 1e-12);
    }

    #[test]
    fn orth_projection_empty_basis_is_zero() {
        let p = orth_projection(3, &[]).unwrap();
        assert_eq!(p.max_abs(), 0.0);
        assert_eq!((p.rows(), p.cols()), (3, 3));
    }

    #[test]
    fn orth_projection_rejects_dependent_columns() {
        let col = vec![c(1.0, 0.0), c(2.0, 0.0)];
        let twice = vec![c(2.0, 0.0), c(4.0, 0.0)];
        let err = orth_projection(2, &[col, twice]).unwrap_err();
        assert!(matches!(err, LinalgError::RankDeficient { .. }));
    }

    #[test]
    fn null_space_of_wide_matrix() {
        // Kernel of [1, 1] is span((1,-1)/√2).
        let a = DenseMatrix::from_real_rows(&[&[1.0, 1.0]]).unwrap();
        let ns = null_space(&a, None).unwrap();
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        assert_abs_diff_eq!((v[0] + v[1]).norm(), 0.0, epsilon = 1e-12);
        let len: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_abs_diff_eq!(len, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_real_and_complex() {
        let a = DenseMatrix::from_real_rows(&[&[1.5, -2.0], &[0.0, 3.25]]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert!(!s.contains("\"im\""), "real matrix must omit the im block: {s}");
        let b: DenseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);

        let z = DenseMatrix::from_fn(2, 2, |i, j| c(i as f64, j as f64 + 0.5));
        let s = serde_json::to_string(&z).unwrap();
        let b: DenseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(z, b);
    }

    #[test]
    fn json_rejects_ragged_and_mismatched_shapes() {
        assert!(serde_json::from_str::<DenseMatrix>(r#"{"re": [[1, 2], [3]]}"#).is_err());
        assert!(
            serde_json::from_str::<DenseMatrix>(r#"{"re": [[1, 2]], "im": [[1]]}"#).is_err()
        );
        assert!(serde_json::from_str::<DenseMatrix>(r#"{"re": []}"#).is_err());
    }

    proptest! {
        /// Similar matrices have the same spectrum (up to conditioning).
        #[test]
        fn eigen_invariant_under_similarity(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=6);
            let a = DenseMatrix::from_real_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            // Well-conditioned T: identity plus a small random part.
            let t = {
                let mut t = DenseMatrix::identity(n);
                for i in 0..n {
                    for j in 0..n {
                        t[(i, j)] += c(0.2 * rng.random_range(-1.0..1.0), 0.0);
                    }
                }
                t
            };
            let t_inv = pinv(&t, None).unwrap();
            prop_assume!(residual(&t.matmul(&t_inv), &DenseMatrix::identity(n)) < 1e-10);
            let sim = t.matmul(&a).matmul(&t_inv);

            // Compare spectra as multisets: conjugate pairs with real parts
            // equal only up to rounding may swap order between the two runs.
            let ev_a = eigenvalues(&a).unwrap();
            let mut ev_s = eigenvalues(&sim).unwrap();
            for x in &ev_a {
                let (best, dist) = ev_s
                    .iter()
                    .enumerate()
                    .map(|(k, y)| (k, (x - y).norm()))
                    .min_by(|l, r| l.1.total_cmp(&r.1))
                    .unwrap();
                prop_assert!(dist < 1e-7, "{x} unmatched (closest at distance {dist})");
                ev_s.swap_remove(best);
            }
        }

        /// SVD reconstruction error stays within the backward-stable budget.
        #[test]
        fn svd_reconstruction_random(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(1..=8);
            let n = rng.random_range(1..=8);
            let a = DenseMatrix::from_fn(m, n, |_, _| {
                c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
            });
            let dec = svd(&a).unwrap();
            let mut sig = DenseMatrix::zeros(m, n);
            for (r, &s) in dec.sigma.iter().enumerate() {
                sig[(r, r)] = c(s, 0.0);
            }
            let back = dec.u.matmul(&sig).matmul(&dec.v.conj_transpose());
            let scale = dec.sigma.first().copied().unwrap_or(0.0).max(1e-300);
            prop_assert!(residual(&back, &a) <= 1e-9 * scale.max(1.0));
            // Nonincreasing singular values.
            for w in dec.sigma.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
