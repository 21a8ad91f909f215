//! Dense matrices for the small problems this crate solves (dimensions 1 to ~50).
//!
//! [`Mat`] is a plain row-major matrix. [`SymMat`] wraps a square `Mat` that is
//! symmetrized on construction and after every product that is symmetric in
//! exact arithmetic; every covariance, LMI block and SDP variable is a `SymMat`.
//! Inverses of positive definite matrices go through [`Cholesky`].

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default relative tolerance for positive-semidefiniteness tests.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    /// Builds a matrix from nested rows; rejects ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::Dimension("matrix must have at least one row and column".into()));
        }
        if let Some(bad) = rows.iter().position(|row| row.len() != c) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} entries, expected {c}",
                rows[bad].len()
            )));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diag(d: &[T]) -> Self {
        Self::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { T::zero() })
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec: {}x{} * {}", self.rows, self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copy of the `nr x nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat<T> {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        Mat::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat<T>) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "set_block out of range");
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// `[[a, b], [c, d]]`.
    pub fn block2x2(a: &Mat<T>, b: &Mat<T>, c: &Mat<T>, d: &Mat<T>) -> Mat<T> {
        assert!(a.rows == b.rows && c.rows == d.rows && a.cols == c.cols && b.cols == d.cols);
        let mut out = Mat::zeros(a.rows + c.rows, a.cols + b.cols);
        out.set_block(0, 0, a);
        out.set_block(0, a.cols, b);
        out.set_block(a.rows, 0, c);
        out.set_block(a.rows, a.cols, d);
        out
    }

    pub fn vstack(blocks: &[&Mat<T>]) -> Mat<T> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        assert!(blocks.iter().all(|b| b.cols == cols), "vstack: column mismatch");
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut r = 0;
        for b in blocks {
            out.set_block(r, 0, b);
            r += b.rows;
        }
        out
    }

    pub fn hstack(blocks: &[&Mat<T>]) -> Mat<T> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        assert!(blocks.iter().all(|b| b.rows == rows), "hstack: row mismatch");
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut c = 0;
        for b in blocks {
            out.set_block(0, c, b);
            c += b.cols;
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.scale(-T::one())
    }
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

impl<T: Serialize> Serialize for Mat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.data.chunks(self.cols.max(1)))
    }
}

/// Symmetric matrix. `entries[i][j] == entries[j][i]` holds exactly.
#[derive(Clone, PartialEq)]
pub struct SymMat<T>(Mat<T>);

impl<T: Real> SymMat<T> {
    /// Symmetrizes `(A + Aᵀ)/2`; rejects non-square or empty input.
    pub fn new(m: Mat<T>) -> Result<Self> {
        if !m.is_square() || m.rows == 0 {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.rows, m.cols
            )));
        }
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(mut m: Mat<T>) -> Self {
        debug_assert!(m.is_square());
        let half = T::lit(0.5);
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                let v = (m[(i, j)] + m[(j, i)]) * half;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMat(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Mat::from_rows(rows)?)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(Mat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(Mat::identity(n))
    }

    pub fn from_diag(d: &[T]) -> Self {
        SymMat(Mat::diag(d))
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        SymMat(Mat::identity(n).scale(s))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.0
    }

    pub fn into_mat(self) -> Mat<T> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.0.to_rows()
    }

    pub fn add(&self, rhs: &SymMat<T>) -> SymMat<T> {
        SymMat(&self.0 + &rhs.0)
    }

    pub fn sub(&self, rhs: &SymMat<T>) -> SymMat<T> {
        SymMat(&self.0 - &rhs.0)
    }

    pub fn scale(&self, s: T) -> SymMat<T> {
        SymMat(self.0.scale(s))
    }

    /// `self + s·I`.
    pub fn add_identity(&self, s: T) -> SymMat<T> {
        let mut m = self.0.clone();
        for i in 0..m.rows {
            m[(i, i)] += s;
        }
        SymMat(m)
    }

    /// `A · self · Aᵀ`, symmetrized.
    pub fn congruence(&self, a: &Mat<T>) -> SymMat<T> {
        SymMat::symmetrized(a.matmul(&self.0).matmul(&a.transpose()))
    }

    /// Principal submatrix on indices `start..start + n`.
    pub fn principal_block(&self, start: usize, n: usize) -> SymMat<T> {
        SymMat(self.0.block(start, start, n, n))
    }

    pub fn frobenius_norm(&self) -> T {
        self.0.frobenius_norm()
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    /// `trace(self · rhs)` without forming the product.
    pub fn dot(&self, rhs: &SymMat<T>) -> T {
        self.0.data.iter().zip(&rhs.0.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn eig(&self) -> Result<SymEig<T>> {
        sym_eig(self)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(sym_eig(self)?.values[0])
    }

    pub fn chol(&self) -> Result<Cholesky<T>> {
        Cholesky::new(self)
    }

    /// Inverse of a positive definite matrix via Cholesky.
    pub fn inverse_pd(&self) -> Result<SymMat<T>> {
        Ok(Cholesky::new(self)?.inverse())
    }

    /// Symmetric square root of the PSD part (negative eigenvalues clamped to zero).
    pub fn sqrt_psd(&self) -> Result<SymMat<T>> {
        let e = sym_eig(self)?;
        let roots: Vec<T> = e.values.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
        Ok(e.reconstruct_with(&roots))
    }

    pub fn cast<U: Real>(&self) -> SymMat<U> {
        SymMat(self.0.cast())
    }
}

impl<T> Index<(usize, usize)> for SymMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, ij: (usize, usize)) -> &T {
        &self.0[ij]
    }
}

impl<T: fmt::Debug> fmt::Debug for SymMat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym")?;
        self.0.fmt(f)
    }
}

impl<T: Serialize> Serialize for SymMat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Eigen-decomposition `A = V diag(values) Vᵀ`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    pub values: Vec<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Mat<T>,
}

impl<T: Real> SymEig<T> {
    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        *self.values.last().expect("non-empty spectrum")
    }

    /// `V diag(d) Vᵀ` for replacement eigenvalues `d`.
    pub fn reconstruct_with(&self, d: &[T]) -> SymMat<T> {
        let n = self.values.len();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * d[j]);
        SymMat::symmetrized(scaled.matmul(&self.vectors.transpose()))
    }

    pub fn reconstruct(&self) -> SymMat<T> {
        self.reconstruct_with(&self.values)
    }
}

/// Cyclic Jacobi eigen-solver.
pub fn sym_eig<T: Real>(a: &SymMat<T>) -> Result<SymEig<T>> {
    let n = a.dim();
    let mut m = a.0.clone();
    let mut v = Mat::<T>::identity(n);
    let scale = a.frobenius_norm();
    if scale == T::zero() || n == 1 {
        return Ok(SymEig {
            values: a.diagonal(),
            vectors: v,
        });
    }
    if !scale.is_finite() {
        return Err(Error::InvalidInput("eigen-decomposition of non-finite matrix".into()));
    }
    let eps = T::epsilon();
    let two = T::lit(2.0);
    let max_sweeps = 100 * n * n;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if (two * off).sqrt() <= eps * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= eps * eps * scale {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = if theta.abs() > T::lit(1e150) {
                    T::one() / (two * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: T = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum();
        return Err(Error::NoConvergence {
            what: "Jacobi eigen-solver",
            iterations: max_sweeps,
            residual: off.sqrt().as_f64(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Singular values (descending) and right singular vectors (as columns of
/// `v`, same order) from one-sided Jacobi.
#[derive(Clone, Debug)]
pub struct RightSvd<T> {
    pub values: Vec<T>,
    pub v: Mat<T>,
}

pub fn right_svd<T: Real>(a: &Mat<T>) -> Result<RightSvd<T>> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::<T>::identity(n);
    let eps = T::epsilon();
    let max_sweeps = 100 * n.max(1) * n.max(1);
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    alpha += w[(i, p)] * w[(i, p)];
                    beta += w[(i, q)] * w[(i, q)];
                    gamma += w[(i, p)] * w[(i, q)];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "one-sided Jacobi SVD",
            iterations: max_sweeps,
            residual: f64::NAN,
        });
    }
    let norms: Vec<T> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    Ok(RightSvd {
        values: order.iter().map(|&j| norms[j]).collect(),
        v: Mat::from_fn(n, n, |r, c| v[(r, order[c])]),
    })
}

/// Singular values of a general matrix, descending.
pub fn singular_values<T: Real>(a: &Mat<T>) -> Result<Vec<T>> {
    Ok(right_svd(a)?.values)
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank<T: Real>(a: &Mat<T>, rel_tol: T) -> Result<usize> {
    let sv = singular_values(a)?;
    let top = sv.first().copied().unwrap_or_else(T::zero);
    if top == T::zero() {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * top).count())
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &SymMat<T>) -> Result<Self> {
        let n = a.dim();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Mat<T> {
        &self.l
    }

    pub fn into_factor(self) -> Mat<T> {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `A x = b`.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "cholesky solve: rhs length");
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        assert_eq!(b.rows(), self.dim(), "cholesky solve: rhs rows");
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![T::zero(); b.rows()];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            let x = self.solve_vec(&col);
            for (i, xi) in x.into_iter().enumerate() {
                out[(i, j)] = xi;
            }
        }
        out
    }

    pub fn inverse(&self) -> SymMat<T> {
        SymMat::symmetrized(self.solve_mat(&Mat::identity(self.dim())))
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }
}

/// Lower-triangular factor of a positive definite matrix.
pub fn chol<T: Real>(a: &SymMat<T>) -> Result<Mat<T>> {
    Ok(Cholesky::new(a)?.into_factor())
}

/// Outcome of a positive-semidefiniteness test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdCheck<T> {
    pub min_eigenvalue: T,
    pub max_eigenvalue: T,
    pub is_psd: bool,
    pub tolerance: T,
}

/// PSD test relative to the spectral scale: `λ_min ≥ −tol·max(1, |λ_max|)`.
pub fn psd_check<T: Real>(a: &SymMat<T>, tol: T) -> Result<PsdCheck<T>> {
    let e = sym_eig(a)?;
    let (lo, hi) = (e.min(), e.max());
    Ok(PsdCheck {
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        is_psd: lo >= -tol * T::one().max(hi.abs()),
        tolerance: tol,
    })
}

/// `A ⪰ B` up to `tol·(1 + ‖A‖_F + ‖B‖_F)`.
pub fn psd_order<T: Real>(a: &SymMat<T>, b: &SymMat<T>, tol: T) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("psd_order: {} vs {}", a.dim(), b.dim())));
    }
    let scale = T::one() + a.frobenius_norm() + b.frobenius_norm();
    Ok(a.sub(b).min_eigenvalue()? >= -tol * scale)
}

fn check_blocks<T: Real>(m11: &SymMat<T>, m12: &Mat<T>, m22: &SymMat<T>) -> Result<()> {
    if m12.shape() != (m11.dim(), m22.dim()) {
        return Err(Error::Dimension(format!(
            "off-diagonal block is {}x{}, expected {}x{}",
            m12.rows(),
            m12.cols(),
            m11.dim(),
            m22.dim()
        )));
    }
    Ok(())
}

/// Assembles `[[M11, M12], [M12ᵀ, M22]]`.
pub fn block_sym<T: Real>(m11: &SymMat<T>, m12: &Mat<T>, m22: &SymMat<T>) -> Result<SymMat<T>> {
    check_blocks(m11, m12, m22)?;
    Ok(SymMat::symmetrized(Mat::block2x2(
        m11.as_mat(),
        m12,
        &m12.transpose(),
        m22.as_mat(),
    )))
}

/// `M11 − M12 M22⁻¹ M12ᵀ` with `M22` positive definite.
pub fn schur_complement<T: Real>(m11: &SymMat<T>, m12: &Mat<T>, m22: &SymMat<T>) -> Result<SymMat<T>> {
    check_blocks(m11, m12, m22)?;
    let c = Cholesky::new(m22).map_err(|_| Error::Singular {
        context: "Schur complement pivot block".into(),
        min_eigenvalue: m22.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let x = c.solve_mat(&m12.transpose());
    Ok(SymMat::symmetrized(m11.as_mat() - &m12.matmul(&x)))
}

/// Both sides of the Schur-complement equivalence, evaluated independently.
#[derive(Clone, Copy, Debug)]
pub struct SchurEquiv<T> {
    pub block: PsdCheck<T>,
    pub complement: PsdCheck<T>,
}

impl<T: Real> SchurEquiv<T> {
    pub fn agree(&self) -> bool {
        self.block.is_psd == self.complement.is_psd
    }
}

/// Tests `[[M11, M12], [M12ᵀ, M22]] ⪰ 0` directly and through the Schur complement.
pub fn schur_psd_equiv<T: Real>(
    m11: &SymMat<T>,
    m12: &Mat<T>,
    m22: &SymMat<T>,
    tol: T,
) -> Result<SchurEquiv<T>> {
    let block = psd_check(&block_sym(m11, m12, m22)?, tol)?;
    let complement = psd_check(&schur_complement(m11, m12, m22)?, tol)?;
    Ok(SchurEquiv { block, complement })
}

/// `L⁻¹ − (L + L Υ L)⁻¹`, which equals `(L + Υ⁻¹)⁻¹` whenever `Υ` is invertible.
pub fn woodbury_lhs<T: Real>(l: &SymMat<T>, ups: &SymMat<T>) -> Result<SymMat<T>> {
    if l.dim() != ups.dim() {
        return Err(Error::Dimension(format!("woodbury: {} vs {}", l.dim(), ups.dim())));
    }
    let l_chol = Cholesky::new(l).map_err(|_| Error::Singular {
        context: "woodbury_lhs: L".into(),
        min_eigenvalue: l.min_eigenvalue().map(Real::as_f64).unwrap_or(f64::NAN),
    })?;
    let inflated = l.add(&ups.congruence(l.as_mat()));
    let inflated_inv = inflated.inverse_pd()?;
    Ok(l_chol.inverse().sub(&inflated_inv))
}
