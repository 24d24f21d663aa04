//! Small dense complex matrix type backed by faer for the heavy kernels
//! (GEMM, Hermitian eigendecomposition, SVD, Cholesky).
//!
//! Storage is row-major so that it lines up with the tensor layout.

use faer::complex_native::c64;
use faer::prelude::SpSolver;
use faer::{Mat, Parallelism, Side};
use num_complex::Complex64;
use std::fmt;
use std::ops::{Index, IndexMut};

use crate::C64;

/// Below this many multiply-adds the naive triple loop beats the faer
/// conversion overhead.
const SMALL_GEMM: usize = 4096;

#[inline]
fn to_faer(z: C64) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
fn from_faer(z: c64) -> C64 {
    Complex64::new(z.re, z.im)
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row: Vec<String> = (0..self.cols.min(8))
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending, the
/// eigenvectors are the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Thin SVD `a = u diag(s) vh` with `s` sorted descending.
#[derive(Clone, Debug)]
pub struct DenseSvd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub vh: DenseMatrix,
}

/// Gram-Schmidt (twice) over `cols`. The first `trusted` columns are kept
/// as given up to roundoff; later ones that collapse are replaced by unit
/// vectors outside the current span.
fn orthonormal_columns(cols: Vec<Vec<C64>>, trusted: usize, dim: usize) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(cols.len());
    let mut spare = 0..dim;
    for (c, mut x) in cols.into_iter().enumerate() {
        loop {
            for _ in 0..2 {
                for q in &out {
                    let p = inner(q, &x);
                    axpy(-p, q, &mut x);
                }
            }
            let nx = norm(&x);
            if nx > 0.5 || (c < trusted && nx > 0.0) {
                scale_in_place(C64::new(1.0 / nx, 0.0), &mut x);
                break;
            }
            let e = spare.next().expect("fewer columns than the dimension");
            x = vec![C64::new(0.0, 0.0); dim];
            x[e] = C64::new(1.0, 0.0);
        }
        out.push(x);
    }
    out
}

/// Relative Frobenius error above which a factorization is rejected.
const SVD_CHECK_TOL: f64 = 1e-10;

impl DenseSvd {
    /// `||u diag(s) vh - a||_F`.
    pub fn reconstruction_error(&self, a: &DenseMatrix) -> f64 {
        let us = DenseMatrix::from_fn(self.u.rows(), self.s.len(), |r, c| {
            self.u[(r, c)] * self.s[c]
        });
        us.matmul(&self.vh).sub(a).frobenius_norm()
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += shift;
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |a_ij - conj(a_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let data = gemm(&self.data, self.rows, self.cols, &other.data, other.cols);
        Self {
            rows: self.rows,
            cols: other.cols,
            data,
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len());
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| {
            self[(r / r2, c / c2)] * other[(r % r2, c % c2)]
        })
    }

    fn to_faer(&self) -> Mat<c64> {
        Mat::from_fn(self.rows, self.cols, |r, c| to_faer(self[(r, c)]))
    }

    fn from_faer(m: faer::MatRef<'_, c64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| from_faer(m.read(r, c)))
    }

    /// Eigendecomposition of the Hermitian part (lower triangle is read).
    pub fn eigh(&self) -> HermitianEigen {
        assert_eq!(self.rows, self.cols, "eigh needs a square matrix");
        if self.rows == 0 {
            return HermitianEigen {
                values: vec![],
                vectors: Self::zeros(0, 0),
            };
        }
        let m = self.to_faer();
        let evd = m.selfadjoint_eigendecomposition(Side::Lower);
        let s = evd.s().column_vector();
        let values = (0..self.rows).map(|i| s.read(i).re).collect();
        HermitianEigen {
            values,
            vectors: Self::from_faer(evd.u()),
        }
    }

    /// Thin SVD with singular values sorted descending.
    pub fn svd(&self) -> DenseSvd {
        let k = self.rows.min(self.cols);
        if k == 0 {
            return DenseSvd {
                u: Self::zeros(self.rows, 0),
                s: vec![],
                vh: Self::zeros(0, self.cols),
            };
        }
        let m = self.to_faer();
        let svd = m.thin_svd();
        let sd = svd.s_diagonal();
        let mut order: Vec<usize> = (0..k).collect();
        let sv: Vec<f64> = (0..k).map(|i| sd.read(i).re).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let (fu, fv) = (svd.u(), svd.v());
        let u = Self::from_fn(self.rows, k, |r, c| from_faer(fu.read(r, order[c])));
        let vh = Self::from_fn(k, self.cols, |r, c| from_faer(fv.read(c, order[r])).conj());
        let s = order.iter().map(|&i| sv[i].max(0.0)).collect();
        let out = DenseSvd { u, s, vh };
        if out.reconstruction_error(self) > SVD_CHECK_TOL * self.frobenius_norm() {
            // faer can mispair singular vectors inside exactly degenerate
            // blocks of rank-deficient inputs.
            log::debug!(
                "svd of {}x{} failed its reconstruction check; using the eigensolver path",
                self.rows,
                self.cols
            );
            return self.svd_jordan_wielandt();
        }
        out
    }

    /// Thin SVD from the eigenpairs of `[[0, A], [A^dag, 0]]`, whose
    /// eigenvectors `(u, v) / sqrt 2` keep `A v = s u` paired inside
    /// degenerate blocks. Columns at roundoff level are completed to
    /// orthonormal sets.
    fn svd_jordan_wielandt(&self) -> DenseSvd {
        let (m, n) = (self.rows, self.cols);
        let k = m.min(n);
        let h = Self::from_fn(m + n, m + n, |r, c| match (r < m, c < m) {
            (true, false) => self[(r, c - m)],
            (false, true) => self[(c, r - m)].conj(),
            _ => C64::new(0.0, 0.0),
        });
        let eig = h.eigh();
        let top: Vec<usize> = (0..k).map(|i| m + n - 1 - i).collect();
        let s: Vec<f64> = top.iter().map(|&i| eig.values[i].max(0.0)).collect();
        let tol = (m + n) as f64 * f64::EPSILON * s.first().copied().unwrap_or(0.0);
        let reliable = s.iter().take_while(|&&x| x > tol).count();
        let r2 = std::f64::consts::SQRT_2;
        let ucols: Vec<Vec<C64>> = top
            .iter()
            .map(|&i| (0..m).map(|r| eig.vectors[(r, i)] * r2).collect())
            .collect();
        let vcols: Vec<Vec<C64>> = top
            .iter()
            .map(|&i| (m..m + n).map(|r| eig.vectors[(r, i)] * r2).collect())
            .collect();
        let u = orthonormal_columns(ucols, reliable, m);
        let v = orthonormal_columns(vcols, reliable, n);
        let u = Self::from_fn(m, k, |r, c| u[c][r]);
        let vh = Self::from_fn(k, n, |r, c| v[r][c].conj());
        DenseSvd { u, s, vh }
    }

    /// Solve `self x = b` for Hermitian positive definite `self`.
    /// Returns `None` when the Cholesky factorization fails.
    pub fn solve_hpd(&self, b: &[C64]) -> Option<Vec<C64>> {
        let m = self.to_faer();
        let chol = m.cholesky(Side::Lower).ok()?;
        let rhs = Mat::from_fn(b.len(), 1, |r, _| to_faer(b[r]));
        let x = chol.solve(&rhs);
        Some((0..b.len()).map(|r| from_faer(x.read(r, 0))).collect())
    }

    /// `f(self)` for Hermitian `self`, applied through the eigenbasis.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Self {
        let eig = self.eigh();
        let n = self.rows;
        let v = &eig.vectors;
        let fl: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
        let mut scaled = v.clone();
        for r in 0..n {
            for c in 0..n {
                scaled[(r, c)] *= fl[c];
            }
        }
        scaled.matmul(&v.adjoint())
    }
}

/// Row-major GEMM `a (m x k) * b (k x n)`.
pub fn gemm(a: &[C64], m: usize, k: usize, b: &[C64], n: usize) -> Vec<C64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let zero = C64::new(0.0, 0.0);
    if m == 0 || n == 0 {
        return vec![];
    }
    if k == 0 {
        return vec![zero; m * n];
    }
    if m * k * n <= SMALL_GEMM {
        let mut out = vec![zero; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == zero {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        return out;
    }
    let fa = Mat::from_fn(m, k, |r, c| to_faer(a[r * k + c]));
    let fb = Mat::from_fn(k, n, |r, c| to_faer(b[r * n + c]));
    let mut fc = Mat::<c64>::zeros(m, n);
    // Sequential on purpose: results must not depend on thread scheduling.
    faer::linalg::matmul::matmul(
        fc.as_mut(),
        fa.as_ref(),
        fb.as_ref(),
        None,
        c64::new(1.0, 0.0),
        Parallelism::None,
    );
    let mut out = Vec::with_capacity(m * n);
    for r in 0..m {
        for c in 0..n {
            out.push(from_faer(fc.read(r, c)));
        }
    }
    out
}

/// Eigendecomposition of a real symmetric matrix given row-major.
pub fn eigh_real(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (vec![], vec![]);
    }
    let m = Mat::<f64>::from_fn(n, n, |r, c| a[r * n + c]);
    let evd = m.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let values = (0..n).map(|i| s.read(i)).collect();
    let u = evd.u();
    let mut vectors = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            vectors.push(u.read(r, c));
        }
    }
    (values, vectors)
}

/// Conjugate-linear inner product `<x|y>`.
#[inline]
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale_in_place(alpha: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}
