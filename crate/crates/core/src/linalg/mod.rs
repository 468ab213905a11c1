//! Dense complex matrices and vectors.
//!
//! Storage is row-major. Vectorization (`vec`) is column-stacking: element
//! `(i, j)` of an `r x c` matrix lands at index `j * r + i`. The network
//! encoder relies on the same convention, see [`crate::autonet`].

mod decomp;

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) use decomp::log2_det_hermitian_plus_identity;
pub use decomp::{det_hermitian_plus_identity, eigh, inv_sqrt_hermitian, svd_small, Eigh, Svd};

/// Orthonormality tolerance for decompositions.
pub const ORTHO_TOL: f64 = 1e-8;
/// Largest negative pivot accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;
/// Smallest eigenvalue accepted as nonsingular.
pub const SINGULAR_TOL: f64 = 1e-12;

fn cast_complex<T: Real, U: Real>(z: Complex<T>) -> Complex<U> {
    Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector<T> {
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexVector<T> {
    pub fn new(data: Vec<Complex<T>>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![Complex::zero(); len],
        }
    }

    /// Converts the entries to another scalar precision.
    pub fn cast<U: Real>(&self) -> ComplexVector<U> {
        ComplexVector::new(self.data.iter().map(|z| cast_complex(*z)).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex<T>> {
        self.data.iter()
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Inner product `self^H other`.
    pub fn dot(&self, other: &Self) -> Complex<T> {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self::new(self.data.iter().map(|z| z * s).collect())
    }

    /// Inverse of [`ComplexMatrix::vec`].
    pub fn unvec(&self, rows: usize, cols: usize) -> Result<ComplexMatrix<T>> {
        if rows * cols != self.len() || rows == 0 {
            return Err(Error::dim(
                "unvec",
                format!("length {} into {rows}x{cols}", self.len()),
            ));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |i, j| self.data[j * rows + i]))
    }
}

impl<T> Index<usize> for ComplexVector<T> {
    type Output = Complex<T>;
    fn index(&self, i: usize) -> &Complex<T> {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for ComplexVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut Complex<T> {
        &mut self.data[i]
    }
}

impl<T: Real> From<Vec<Complex<T>>> for ComplexVector<T> {
    fn from(data: Vec<Complex<T>>) -> Self {
        Self::new(data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("ComplexMatrix::new", "dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "ComplexMatrix::new",
                format!("{} entries for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn cast<U: Real>(&self) -> ComplexMatrix<U> {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| cast_complex(*z)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { Complex::one() } else { Complex::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(diag[i], T::zero())
            } else {
                Complex::zero()
            }
        })
    }

    /// Builds a matrix whose columns are the given vectors, in order.
    pub fn from_columns(columns: &[ComplexVector<T>]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::dim("from_columns", "no columns"))?;
        let rows = first.len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::dim("from_columns", "columns differ in length"));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector<T> {
        ComplexVector::new((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    pub fn matmul(&self, b: &Self) -> Result<Self> {
        if self.cols != b.rows {
            return Err(Error::dim(
                "matmul",
                format!("{}x{} by {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (o, &bv) in o_row.iter_mut().zip(b.row(k)) {
                    *o = *o + a * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &ComplexVector<T>) -> Result<ComplexVector<T>> {
        if self.cols != v.len() {
            return Err(Error::dim(
                "mul_vec",
                format!("{}x{} by vector of {}", self.rows, self.cols, v.len()),
            ));
        }
        Ok(ComplexVector::new(
            (0..self.rows)
                .map(|i| {
                    self.row(i)
                        .iter()
                        .zip(v.iter())
                        .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
                })
                .collect(),
        ))
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Kronecker product; block `(i, j)` of the result is `self[(i, j)] * b`.
    pub fn kronecker(&self, b: &Self) -> Self {
        Self::from_fn(self.rows * b.rows, self.cols * b.cols, |i, j| {
            self[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
        })
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> ComplexVector<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        ComplexVector::new(out)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.map(|z| z * s)
    }

    pub fn add(&self, b: &Self) -> Result<Self> {
        self.zip_with(b, "add", |x, y| x + y)
    }

    pub fn sub(&self, b: &Self) -> Result<Self> {
        self.zip_with(b, "sub", |x, y| x - y)
    }

    fn zip_with(
        &self,
        b: &Self,
        op: &'static str,
        f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>,
    ) -> Result<Self> {
        if self.shape() != b.shape() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(), b.shape()),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    pub fn frobenius_norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// `(A + A^H) / 2`, used to clean rounding asymmetry before Hermitian routines.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}
