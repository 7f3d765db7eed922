//! Small dense complex linear algebra.
//!
//! Matrices here are tiny (antenna count, pilot length times antennas), so a
//! row-major buffer with inline storage for up to 2x2 entries avoids heap
//! traffic in the per-edge message updates, where `N = 1` or `N = 2` is the
//! common case.

use core::ops::{Index, IndexMut};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

type Buf = SmallVec<[C64; 4]>;

/// Relative pivot threshold for the positive-definiteness test.
pub const PD_REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CVector {
    data: Buf,
}

impl CVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: smallvec::smallvec![C64::zero(); n],
        }
    }

    pub fn from_slice(values: &[C64]) -> Self {
        Self {
            data: SmallVec::from_slice(values),
        }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> C64) -> Self {
        Self {
            data: (0..n).map(f).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, C64> {
        self.data.iter()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.len(), rhs.len());
        Self::from_fn(self.len(), |i| self.data[i] + rhs.data[i])
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.len(), rhs.len());
        Self::from_fn(self.len(), |i| self.data[i] - rhs.data[i])
    }

    pub fn add_assign(&mut self, rhs: &Self) {
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(self.len(), |i| self.data[i] * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self::from_fn(self.len(), |i| self.data[i] * s)
    }

    /// `self^H rhs`.
    pub fn dot(&self, rhs: &Self) -> C64 {
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `self * rhs^H`.
    pub fn outer(&self, rhs: &Self) -> CMatrix {
        CMatrix::from_fn(self.len(), rhs.len(), |i, j| self.data[i] * rhs.data[j].conj())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    #[inline]
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for CVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Buf,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: smallvec::smallvec![C64::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { C64::new(s, 0.0) } else { C64::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Buf::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[C64]) -> Self {
        assert_eq!(values.len(), rows * cols, "buffer does not match shape");
        Self {
            rows,
            cols,
            data: SmallVec::from_slice(values),
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::zero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector::from_fn(self.rows, |i| self[(i, j)])
    }

    pub fn set_column(&mut self, j: usize, v: &CVector) {
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    /// Copy of the block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add(&self, rhs: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_assign(&mut self, rhs: &Self) {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        let data = self.data.iter().map(|a| a * s).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        let data = self.data.iter().map(|a| a * s).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// `self + s * I`.
    pub fn add_diag(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)].re += s;
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self[(i, p)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[p * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.cols, v.len(), "inner dimensions differ");
        CVector::from_fn(self.rows, |i| {
            self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum()
        })
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        Self::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |i, j| {
            self[(i / rhs.rows, j / rhs.cols)] * rhs[(i % rhs.rows, j % rhs.cols)]
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        debug_assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Cholesky factor `A = L L^H` of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: CMatrix,
}

impl Cholesky {
    /// Factors the Hermitian part of `a`. Fails unless every pivot exceeds
    /// `PD_REL_TOL * trace(A) / n`.
    pub fn new(a: &CMatrix) -> Result<Self> {
        Self::with_tolerance(a, PD_REL_TOL)
    }

    pub fn with_tolerance(a: &CMatrix, rel_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "cholesky input",
                expected: (a.rows, a.rows),
                found: (a.rows, a.cols),
            });
        }
        let n = a.rows;
        let sym = a.hermitian_part();
        let scale = sym.trace().re / n.max(1) as f64;
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let threshold = rel_tol * scale;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = sym[(j, j)].re;
            for p in 0..j {
                d -= l[(j, p)].norm_sqr();
            }
            if !(d > threshold) {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = d.sqrt();
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = sym[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &CMatrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solves `L w = b` in place.
    fn forward(&self, b: &mut [C64]) {
        let l = &self.lower;
        for i in 0..l.rows {
            let mut s = b[i];
            for p in 0..i {
                s -= l[(i, p)] * b[p];
            }
            b[i] = s / l[(i, i)].re;
        }
    }

    /// Solves `L^H x = w` in place.
    fn backward(&self, b: &mut [C64]) {
        let l = &self.lower;
        for i in (0..l.rows).rev() {
            let mut s = b[i];
            for p in (i + 1)..l.rows {
                s -= l[(p, i)].conj() * b[p];
            }
            b[i] = s / l[(i, i)].re;
        }
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        let mut x = b.clone();
        self.forward(x.as_mut_slice());
        self.backward(x.as_mut_slice());
        x
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let mut out = b.clone();
        let mut col = CVector::zeros(b.rows);
        for j in 0..b.cols {
            for i in 0..b.rows {
                col[i] = b[(i, j)];
            }
            self.forward(col.as_mut_slice());
            self.backward(col.as_mut_slice());
            out.set_column(j, &col);
        }
        out
    }

    /// Explicit inverse; used only for moment/natural conversions of small
    /// messages, whose dual form must be materialized anyway.
    pub fn inverse(&self) -> CMatrix {
        let inv = self.solve(&CMatrix::identity(self.dim()));
        inv.hermitian_part()
    }

    /// `ln det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.lower[(i, i)].re.ln()).sum()
    }

    /// `b^H A^{-1} b`.
    pub fn quad_form(&self, b: &CVector) -> f64 {
        let mut w = b.clone();
        self.forward(w.as_mut_slice());
        w.norm_sqr()
    }
}

/// True if the Hermitian part of `a` passes the factorization test.
pub fn is_positive_definite(a: &CMatrix) -> bool {
    a.is_finite() && Cholesky::new(a).is_ok()
}

/// Factor `A = G G^H` of a Hermitian positive semidefinite matrix.
///
/// Columns whose pivot falls below `tol * max diag` are zeroed, so rank
/// deficient inputs (coincident points in a correlation kernel) are accepted.
/// A pivot more negative than the tolerance is rejected.
pub fn psd_factor(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            what: "psd factor input",
            expected: (a.rows, a.rows),
            found: (a.rows, a.cols),
        });
    }
    let n = a.rows;
    let sym = a.hermitian_part();
    let max_diag = (0..n).map(|i| sym[(i, i)].re).fold(0.0, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    let mut g = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = sym[(j, j)].re;
        for p in 0..j {
            d -= g[(j, p)].norm_sqr();
        }
        if d < -tol || !d.is_finite() {
            return Err(Error::NotPositiveSemidefinite);
        }
        if d <= tol {
            continue;
        }
        let gjj = d.sqrt();
        g[(j, j)] = C64::new(gjj, 0.0);
        for i in (j + 1)..n {
            let mut s = sym[(i, j)];
            for p in 0..j {
                s -= g[(i, p)] * g[(j, p)].conj();
            }
            g[(i, j)] = s / gjj;
        }
    }
    Ok(g)
}
