//! Dense complex matrices and the handful of spectral tools the norm
//! computations need.
//!
//! Matrices are small (at most [`MAX_DIM`] on a side for anything that gets
//! diagonalized) and immutable once built, so they are shared freely across
//! optimizer threads.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{input, Error, Result};

pub type C64 = Complex64;

/// Largest square dimension handed to the eigensolver.
pub const MAX_DIM: usize = 64;

/// Relative cutoff below which eigenvalues count as zero before taking
/// fractional powers.
pub const EIG_CLIP: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, " ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return input(format!("matrix shape {rows}x{cols} must be positive"));
        }
        if data.len() != rows * cols {
            return input(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return input(format!("non-finite entry at ({}, {})", pos / cols, pos % cols));
        }
        Ok(Self { rows, cols, data })
    }

    /// Unchecked constructor for internal arithmetic on already-valid data.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Builds a real matrix from nested rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return input("ragged rows");
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0))).collect();
        Self::new(n_rows, n_cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![ZERO; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |r, c| if r == c { C64::new(values[r], 0.0) } else { ZERO })
    }

    pub fn diag_complex(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |r, c| if r == c { values[r] } else { ZERO })
    }

    /// Matrix unit |r⟩⟨c| of shape n×n.
    pub fn unit(n: usize, r: usize, c: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.data[r * n + c] = ONE;
        m
    }

    /// Column vector |k⟩ of length n.
    pub fn ket(n: usize, k: usize) -> Self {
        let mut m = Self::zeros(n, 1);
        m.data[k] = ONE;
        m
    }

    /// Outer product |u⟩⟨v| of two vectors.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&z| f(z)).collect())
    }

    /// Conjugate transpose A*.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Frobenius norm, computed entrywise.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Hilbert-Schmidt inner product Tr(A* B).
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Tr(A B) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = ZERO;
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(r, k)] * other[(k, r)];
            }
        }
        acc
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * p];
        for r in 0..n {
            let row = &mut out[r * p..(r + 1) * p];
            for k in 0..m {
                let a = self.data[r * m + k];
                if a == ZERO {
                    continue;
                }
                let other_row = &other.data[k * p..(k + 1) * p];
                for (o, b) in row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Self::from_raw(n, p, out)
    }

    /// A* A, Hermitian by construction.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                out.data[i * n + j] = acc;
                out.data[j * n + i] = acc.conj();
            }
        }
        out
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// (A + A*) / 2.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite matrix entry".into()))
        }
    }

    fn require_square(&self, what: &str) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            input(format!("{what}: expected a square matrix, got {}x{}", self.rows, self.cols))
        }
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix::from_raw(self.rows, self.cols, data)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix::from_raw(self.rows, self.cols, data)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Accumulates `acc += s * m` in place.
pub(crate) fn axpy(acc: &mut ComplexMatrix, s: C64, m: &ComplexMatrix) {
    assert_eq!((acc.rows, acc.cols), (m.rows, m.cols), "shape mismatch");
    for (a, b) in acc.data.iter_mut().zip(&m.data) {
        *a += s * b;
    }
}

/// Sum of matrices with a common shape.
pub fn sum<'a>(mut items: impl Iterator<Item = &'a ComplexMatrix>) -> Option<ComplexMatrix> {
    let first = items.next()?.clone();
    Some(items.fold(first, |acc, m| &acc + m))
}

/// Standard Kronecker product A ⊗ B.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![ZERO; rows * cols];
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            if s == ZERO {
                continue;
            }
            for br in 0..b.rows {
                let base = (ar * b.rows + br) * cols + ac * b.cols;
                for bc in 0..b.cols {
                    data[base + bc] = s * b[(br, bc)];
                }
            }
        }
    }
    ComplexMatrix::from_raw(rows, cols, data)
}

/// Which tensor factor survives a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Partial trace of a (d1·d2)-square matrix over the factor not kept.
pub fn partial_trace(m: &ComplexMatrix, d1: usize, d2: usize, keep: Keep) -> Result<ComplexMatrix> {
    let n = d1 * d2;
    if d1 == 0 || d2 == 0 || m.rows != n || m.cols != n {
        return input(format!(
            "partial trace: matrix is {}x{}, factors {d1}x{d2} need {n}x{n}",
            m.rows, m.cols
        ));
    }
    Ok(match keep {
        Keep::First => ComplexMatrix::from_fn(d1, d1, |i, j| {
            (0..d2).map(|a| m[(i * d2 + a, j * d2 + a)]).sum()
        }),
        Keep::Second => ComplexMatrix::from_fn(d2, d2, |a, b| {
            (0..d1).map(|i| m[(i * d2 + a, i * d2 + b)]).sum()
        }),
    })
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Unitary whose columns are the eigenvectors, in eigenvalue order.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// V · diag(f(λ)) · V*.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let w: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = ZERO;
                for (k, &wk) in w.iter().enumerate() {
                    if wk != 0.0 {
                        acc += v[(i, k)] * v[(j, k)].conj() * wk;
                    }
                }
                out.data[i * n + j] = acc;
                out.data[j * n + i] = acc.conj();
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|l| l)
    }

    /// Eigenvalues with everything below `EIG_CLIP` times the largest
    /// magnitude (and every negative value) replaced by zero.
    pub fn clipped_eigenvalues(&self) -> Vec<f64> {
        let top = self.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        let cut = EIG_CLIP * top;
        self.eigenvalues.iter().map(|&l| if l < cut { 0.0 } else { l }).collect()
    }
}

/// Diagonalizes the Hermitian part of `a`.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianSpectrum> {
    let n = a.require_square("hermitian_eigen")?;
    if n > MAX_DIM {
        return Err(Error::Resource(format!("eigensolver dimension {n} exceeds {MAX_DIM}")));
    }
    a.check_finite()?;
    let h = a.hermitian_part();
    let m = DMatrix::from_row_slice(n, n, &h.data);
    let eig = nalgebra::linalg::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("eigensolver produced non-finite eigenvalues".into()));
    }
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianSpectrum { eigenvalues, eigenvectors })
}

fn validate_exponent(p: f64) -> Result<()> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::Domain(format!("Schatten exponent must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// ℓ^p norm of a nonnegative vector, scaled to avoid overflow at large p.
pub(crate) fn lp_norm(values: &[f64], p: f64) -> f64 {
    let top = values.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|&x| (x.abs() / top).powf(p)).sum();
    top * s.powf(1.0 / p)
}

/// Singular values of `a`, descending, via the eigenvalues of the smaller
/// of A*A and AA*.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    a.check_finite().map_err(|_| Error::Input("non-finite matrix entry".into()))?;
    // Hermitian input: |λ| is exact where √eig(A*A) would lose half the
    // digits of small singular values.
    if a.is_square() && a.hermiticity_defect() <= 1e-14 * a.max_abs() {
        let mut s: Vec<f64> = hermitian_eigen(a)?.eigenvalues.iter().map(|l| l.abs()).collect();
        s.sort_by(|x, y| y.total_cmp(x));
        return Ok(s);
    }
    let g = if a.cols <= a.rows { a.gram() } else { a.adjoint().gram() };
    let spec = hermitian_eigen(&g)?;
    Ok(spec.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect())
}

/// Schatten p-norm (Tr|A|^p)^{1/p}.
pub fn schatten_norm(a: &ComplexMatrix, p: f64) -> Result<f64> {
    validate_exponent(p)?;
    Ok(lp_norm(&singular_values(a)?, p))
}

/// Schatten norm of a matrix already known to be PSD, read off its
/// eigenvalues.
pub fn psd_schatten_norm(a: &ComplexMatrix, p: f64) -> Result<f64> {
    validate_exponent(p)?;
    let spec = hermitian_eigen(a)?;
    Ok(lp_norm(&spec.clipped_eigenvalues(), p))
}

/// Hermitian within `tol` entrywise and λ_min((A+A*)/2) ≥ −tol.
pub fn is_psd(a: &ComplexMatrix, tol: f64) -> Result<bool> {
    a.require_square("is_psd")?;
    if a.hermiticity_defect() > tol {
        return Ok(false);
    }
    let spec = hermitian_eigen(a)?;
    Ok(spec.eigenvalues.last().is_none_or(|&l| l >= -tol))
}

/// Every entry real within `tol` and no real part below −tol.
pub fn is_entrywise_nonneg(a: &ComplexMatrix, tol: f64) -> bool {
    a.data.iter().all(|z| z.im.abs() <= tol && z.re >= -tol)
}

/// A^q for PSD A through the spectral decomposition. Eigenvalues are
/// clipped at zero first; q = 0 yields the identity (the derivative
/// convention for Tr A^p at p = 1).
pub fn psd_power(a: &ComplexMatrix, q: f64) -> Result<ComplexMatrix> {
    if !q.is_finite() || q < 0.0 {
        return Err(Error::Domain(format!("power exponent must be finite and >= 0, got {q}")));
    }
    if !is_psd(a, 1e-9)? {
        return input("psd_power: matrix is not positive semidefinite");
    }
    let spec = hermitian_eigen(a)?;
    Ok(spectral_power(&spec, q))
}

pub(crate) fn spectral_power(spec: &HermitianSpectrum, q: f64) -> ComplexMatrix {
    let clipped = spec.clipped_eigenvalues();
    let clipped_spec = HermitianSpectrum {
        eigenvalues: clipped,
        eigenvectors: spec.eigenvectors.clone(),
    };
    if q == 1.0 {
        clipped_spec.reconstruct()
    } else {
        clipped_spec.reconstruct_with(|l| l.powf(q))
    }
}

/// A^{-1/2} for positive definite A.
pub fn psd_inverse_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !is_psd(a, 1e-9)? {
        return input("inverse square root: matrix is not positive semidefinite");
    }
    let spec = hermitian_eigen(a)?;
    let top = spec.eigenvalues.first().copied().unwrap_or(0.0);
    let bottom = spec.eigenvalues.last().copied().unwrap_or(0.0);
    if bottom <= EIG_CLIP * top.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric("inverse square root of a singular matrix".into()));
    }
    Ok(spec.reconstruct_with(|l| l.powf(-0.5)))
}

/// Tr(A^q) for PSD A, real part only.
pub fn psd_trace_power(a: &ComplexMatrix, q: f64) -> Result<f64> {
    let spec = hermitian_eigen(a)?;
    Ok(spec.clipped_eigenvalues().iter().map(|&l| l.powf(q)).sum())
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let data = raw.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::new(raw.rows, raw.cols, data).map_err(serde::de::Error::custom)
    }
}
