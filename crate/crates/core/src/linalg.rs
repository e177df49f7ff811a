//! Dense matrix storage and the deterministic factorizations every other
//! module builds on.
//!
//! Storage is column-major `f64`. The heavy factorizations (SVD, QR, LU,
//! nonsymmetric eigensolver) and matrix products are delegated to `faer`
//! through zero-copy views. The symmetric banded Cholesky used by the
//! finite-difference models lives here too.

use std::ops::{Index, IndexMut};

use faer::linalg::solvers::Solve;
use faer::{Accum, MatMut, MatRef};
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::exec::Exec;

/// Singular values below `RANK_CUTOFF * sigma_1` count as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Dense real matrix in column-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps column-major `data`, rejecting length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            ))
        );
        ensure!(
            data.iter().all(|x| x.is_finite()),
            Error::InvalidInput("matrix entries must be finite".into())
        );
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors (all the same length).
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            ensure!(
                c.len() == rows,
                Error::Shape(format!("column {j} has length {}, expected {rows}", c.len()))
            );
            data.extend_from_slice(c);
        }
        Self::new(rows, columns.len(), data)
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_column_major_slice_mut(&mut self.data, self.rows, self.cols)
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * rhs`. Panics on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul_with(rhs, Exec::default())
    }

    pub fn matmul_with(&self, rhs: &DenseMatrix, exec: Exec) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        faer::linalg::matmul::matmul(
            out.view_mut(),
            Accum::Replace,
            self.view(),
            rhs.view(),
            1.0,
            exec.faer_par(),
        );
        out
    }

    /// `selfᵀ * rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.tr_matmul_with(rhs, Exec::default())
    }

    pub fn tr_matmul_with(&self, rhs: &DenseMatrix, exec: Exec) -> DenseMatrix {
        assert_eq!(
            self.rows, rhs.rows,
            "tr_matmul: ({}x{})ᵀ times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        faer::linalg::matmul::matmul(
            out.view_mut(),
            Accum::Replace,
            self.view().transpose(),
            rhs.view(),
            1.0,
            exec.faer_par(),
        );
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = self * x`, accumulated column by column.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: vector length");
        assert_eq!(y.len(), self.rows, "matvec: output length");
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.column(j)) {
                *yi += a * xj;
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        self.tr_matvec_into(x, &mut y);
        y
    }

    /// `y = selfᵀ * x`.
    pub fn tr_matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "tr_matvec: vector length");
        assert_eq!(y.len(), self.cols, "tr_matvec: output length");
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = dot(self.column(j), x);
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns_range(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        DenseMatrix {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(indices.len(), self.cols, |i, j| self[(indices[i], j)])
    }

    /// Multiplies column `j` by `scale[j]`.
    pub fn scale_columns(&self, scale: &[f64]) -> DenseMatrix {
        assert_eq!(scale.len(), self.cols);
        let mut out = self.clone();
        for (j, &s) in scale.iter().enumerate() {
            out.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    pub fn scaled(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<f64> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(0.0);
        }
        Ok(svd_thin(self)?.sigma.first().copied().unwrap_or(0.0))
    }

    /// `max |(selfᵀ self − I)_ij|`, the orthonormality defect of the columns.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.tr_matmul(self);
        let mut worst = 0.0f64;
        for j in 0..g.cols {
            for i in 0..g.rows {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense complex matrix in column-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Real part of column `j`.
    pub fn column_re(&self, j: usize) -> Vec<f64> {
        self.column(j).iter().map(|z| z.re).collect()
    }

    /// Imaginary part of column `j`.
    pub fn column_im(&self, j: usize) -> Vec<f64> {
        self.column(j).iter().map(|z| z.im).collect()
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        self.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn select_columns(&self, order: &[usize]) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, order.len(), |i, j| self[(i, order[j])])
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.column(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    pub(crate) fn to_faer(&self) -> faer::Mat<Complex64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i + j * self.rows]
    }
}

/// `real * complex` for a real left factor.
pub fn real_times_complex(a: &DenseMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.cols(), b.rows(), "real_times_complex: inner dimension");
    let re = DenseMatrix::from_fn(b.rows, b.cols, |i, j| b[(i, j)].re);
    let im = DenseMatrix::from_fn(b.rows, b.cols, |i, j| b[(i, j)].im);
    let pr = a.matmul(&re);
    let pi = a.matmul(&im);
    ComplexMatrix::from_fn(a.rows(), b.cols, |i, j| Complex64::new(pr[(i, j)], pi[(i, j)]))
}

/// Thin SVD `A = U diag(sigma) Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.scale_columns(&self.sigma).matmul(&self.v.transpose())
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&mut self, k: usize) {
        let k = k.min(self.sigma.len());
        self.u = self.u.columns_range(0, k);
        self.v = self.v.columns_range(0, k);
        self.sigma.truncate(k);
    }

    pub fn numerical_rank(&self) -> usize {
        numerical_rank(&self.sigma)
    }
}

/// Number of singular values at or above `RANK_CUTOFF * sigma_1`.
pub fn numerical_rank(sigma: &[f64]) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > 0.0 => sigma.iter().take_while(|&&s| s >= RANK_CUTOFF * s1).count(),
        _ => 0,
    }
}

fn check_nonempty_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    ensure!(
        a.rows() * a.cols() > 0,
        Error::Shape(format!("{what}: empty {}x{} matrix", a.rows(), a.cols()))
    );
    ensure!(
        a.is_finite(),
        Error::InvalidInput(format!("{what}: non-finite entries"))
    );
    Ok(())
}

/// Thin SVD with `min(rows, cols)` triplets.
pub fn svd_thin(a: &DenseMatrix) -> Result<SvdResult> {
    check_nonempty_finite(a, "svd_thin")?;
    let svd = a
        .view()
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("svd did not converge: {e:?}")))?;
    let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok(SvdResult {
        u: DenseMatrix::from_faer(svd.U()),
        sigma,
        v: DenseMatrix::from_faer(svd.V()),
    })
}

/// Thin Householder QR, normalized so that `diag(R) >= 0`.
pub fn qr_thin(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    ensure!(
        a.rows() >= a.cols(),
        Error::Shape(format!("qr_thin needs rows >= cols, got {}x{}", a.rows(), a.cols()))
    );
    check_nonempty_finite(a, "qr_thin")?;
    let qr = a.view().qr();
    let mut q = DenseMatrix::from_faer(qr.compute_thin_Q().as_ref());
    let r_view = qr.thin_R();
    let k = a.cols();
    let mut r = DenseMatrix::from_fn(k, k, |i, j| if i <= j { r_view[(i, j)] } else { 0.0 });
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).iter_mut().for_each(|x| *x = -*x);
            for j in i..k {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
    Ok((q, r))
}

/// Eigenpairs of a general real square matrix.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<Complex64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: ComplexMatrix,
}

pub fn eig_dense(a: &DenseMatrix) -> Result<EigResult> {
    ensure!(
        a.rows() == a.cols(),
        Error::Shape(format!("eig_dense needs a square matrix, got {}x{}", a.rows(), a.cols()))
    );
    check_nonempty_finite(a, "eig_dense")?;
    let evd = a
        .view()
        .eigen()
        .map_err(|e| Error::Decomposition(format!("eigensolver failed: {e:?}")))?;
    let values: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let vectors = ComplexMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]);
    Ok(EigResult { values, vectors })
}

/// Pivot ratio below which an LU factor is treated as singular.
const SINGULAR_RCOND: f64 = 1e-14;

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LuFactor {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor").field("n", &self.n).finish()
    }
}

impl LuFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        ensure!(
            a.rows() == a.cols(),
            Error::Shape(format!("LU needs a square matrix, got {}x{}", a.rows(), a.cols()))
        );
        check_nonempty_finite(a, "LU")?;
        let lu = a.view().partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..a.rows() {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if !(lo > SINGULAR_RCOND * hi) {
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(Error::Singular {
                context: format!("LU of {}x{} matrix", a.rows(), a.cols()),
                condition,
            });
        }
        Ok(Self { lu, n: a.rows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows(), self.n, "LU solve: right-hand side rows");
        DenseMatrix::from_faer(self.lu.solve(b.view()).as_ref())
    }

    /// Solves in place for a single right-hand side.
    pub fn solve_vec_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "LU solve: vector length");
        let rhs = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.lu.solve_in_place(rhs);
    }
}

/// Solves `A X = B` for square nonsingular `A`.
pub fn solve_linear(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(
        b.rows() == a.rows(),
        Error::Shape(format!("solve_linear: A is {}x{}, B has {} rows", a.rows(), a.cols(), b.rows()))
    );
    Ok(LuFactor::new(a)?.solve(b))
}

/// Symmetric banded matrix, stored as the lower band row by row.
///
/// Row `i` holds columns `i - bandwidth ..= i` at positions `0 ..= bandwidth`;
/// positions that fall left of column 0 are kept at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBanded {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            band: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + self.bandwidth - (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.band[self.slot(i, j)]
        }
    }

    /// Sets `(i, j)` and its mirror. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bandwidth, "entry ({i},{j}) outside bandwidth");
        let s = self.slot(i, j);
        self.band[s] = value;
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            bandwidth: self.bandwidth,
            band: self.band.iter().map(|x| c * x).collect(),
        }
    }

    /// `self + diag(d)`.
    pub fn plus_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            let s = out.slot(i, i);
            out.band[s] += di;
        }
        out
    }

    /// `c * I + self`.
    pub fn shifted(&self, c: f64) -> Self {
        self.plus_diagonal(&vec![c; self.n])
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let b = self.bandwidth;
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let row = &self.band[i * (b + 1)..(i + 1) * (b + 1)];
            let mut acc = 0.0;
            for k in lo..=i {
                let a = row[b + k - i];
                acc += a * x[k];
                if k != i {
                    y[k] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Banded Cholesky `self = L Lᵀ`; fails unless the matrix is positive definite.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let b = self.bandwidth;
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for j in 0..n {
            // Off-diagonal entries of row j: L(j,k) for k in j-b..j.
            let lo = j.saturating_sub(b);
            for k in lo..j {
                let klo = k.saturating_sub(b).max(lo);
                let mut s = self.band[j * w + b - (j - k)];
                for m in klo..k {
                    s -= l[j * w + b - (j - m)] * l[k * w + b - (k - m)];
                }
                l[j * w + b - (j - k)] = s / l[k * w + b];
            }
            let mut d = self.band[j * w + b];
            for m in lo..j {
                let v = l[j * w + b - (j - m)];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular {
                    context: format!("banded Cholesky pivot {j} is {d:.3e}"),
                    condition: f64::INFINITY,
                });
            }
            l[j * w + b] = d.sqrt();
        }
        Ok(BandedCholesky { n, bandwidth: b, l })
    }
}

/// Lower-triangular banded Cholesky factor, same row layout as [`SymBanded`].
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let b = self.bandwidth;
        let w = b + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * w + b - (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w + b];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w + b];
            let xi = x[i];
            let lo = i.saturating_sub(b);
            for k in lo..i {
                x[k] -= self.l[i * w + b - (i - k)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(matches!(DenseMatrix::new(2, 2, vec![1.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd_thin(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0]);
        let s = svd_thin(&DenseMatrix::from_diagonal(&[3.0, 0.0])).unwrap();
        assert!((s.sigma[0] - 3.0).abs() < 1e-15);
        assert!(s.sigma[1].abs() < 1e-15);
    }

    #[test]
    fn svd_recovers_known_rank() {
        let a = random(20, 5, 1).matmul(&random(5, 10, 2));
        let s = svd_thin(&a).unwrap();
        assert_eq!(s.sigma.len(), 10);
        assert_eq!(s.sigma.iter().filter(|&&x| x > 1e-10).count(), 5);
        assert!(s.reconstruct().sub(&a).frobenius_norm() <= 1e-10);
        assert!(s.u.orthonormality_defect() < 1e-12);
        assert!(s.v.orthonormality_defect() < 1e-12);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_rejects_empty_and_nan() {
        assert!(matches!(svd_thin(&DenseMatrix::zeros(0, 3)), Err(Error::Shape(_))));
        let mut a = DenseMatrix::identity(2);
        a.as_mut_slice()[1] = f64::INFINITY;
        assert!(matches!(svd_thin(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let a = random(30, 12, 9);
        let s = svd_thin(&a).unwrap();
        let gram = a.tr_matmul(&a);
        let mut ev: Vec<f64> = eig_dense(&gram).unwrap().values.iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (sig, lam) in s.sigma.iter().zip(&ev) {
            assert!((sig - lam.max(0.0).sqrt()).abs() <= 1e-8 * sig.max(1e-300));
        }
    }

    #[test]
    fn qr_identity_and_single_column() {
        let (q, r) = qr_thin(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(q, DenseMatrix::identity(3));
        assert_eq!(r, DenseMatrix::identity(3));

        let v = DenseMatrix::new(3, 1, vec![3.0, 0.0, 4.0]).unwrap();
        let (q, r) = qr_thin(&v).unwrap();
        assert!((r[(0, 0)] - 5.0).abs() < 1e-14);
        for (qi, vi) in q.column(0).iter().zip(v.column(0)) {
            assert!((qi - vi / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qr_residuals_on_random_matrix() {
        let a = random(30, 8, 3);
        let (q, r) = qr_thin(&a).unwrap();
        assert!(q.orthonormality_defect() <= 1e-12);
        assert!(q.matmul(&r).sub(&a).frobenius_norm() <= 1e-12 * a.frobenius_norm());
        for j in 0..8 {
            for i in j + 1..8 {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_wide() {
        assert!(matches!(qr_thin(&DenseMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn eig_diagonal_and_rotation() {
        let e = eig_dense(&DenseMatrix::from_diagonal(&[2.0, 3.0])).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] - 2.0).abs() < 1e-14 && (re[1] - 3.0).abs() < 1e-14);

        let th = 0.7f64;
        let rot = DenseMatrix::new(2, 2, vec![th.cos(), th.sin(), -th.sin(), th.cos()]).unwrap();
        let e = eig_dense(&rot).unwrap();
        for z in &e.values {
            assert!((z.re - th.cos()).abs() < 1e-14);
            assert!((z.im.abs() - th.sin()).abs() < 1e-14);
        }
        assert!((e.values[0].im + e.values[1].im).abs() < 1e-14);
    }

    #[test]
    fn eig_residuals_on_random_matrix() {
        let a = random(6, 6, 4);
        let e = eig_dense(&a).unwrap();
        let norm = a.spectral_norm().unwrap();
        let ac = ComplexMatrix::from_fn(6, 6, |i, j| Complex64::new(a[(i, j)], 0.0));
        for j in 0..6 {
            let w = e.vectors.column(j).to_vec();
            let aw = ac.matvec(&w);
            let res: f64 = aw
                .iter()
                .zip(&w)
                .map(|(x, y)| (x - e.values[j] * y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-10 * norm * e.vectors.column_norm(j));
        }
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(eig_dense(&DenseMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn solve_identity_and_scaling() {
        let b = random(4, 3, 5);
        assert_eq!(solve_linear(&DenseMatrix::identity(4), &b).unwrap(), b);
        let x = solve_linear(&DenseMatrix::identity(3).scaled(2.0), &DenseMatrix::identity(3)).unwrap();
        assert_eq!(x, DenseMatrix::identity(3).scaled(0.5));
    }

    #[test]
    fn solve_random_well_conditioned() {
        let a = random(10, 10, 6).add(&DenseMatrix::identity(10).scaled(5.0));
        let b = random(10, 2, 7);
        let x = solve_linear(&a, &b).unwrap();
        assert!(a.matmul(&x).sub(&b).max_abs() <= 1e-11);
    }

    #[test]
    fn solve_reports_singularity() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        match solve_linear(&a, &DenseMatrix::identity(2)) {
            Err(Error::Singular { condition, .. }) => assert!(condition > 1e13),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn banded_matches_dense_and_cholesky_solves() {
        let n = 12;
        let mut m = SymBanded::zeros(n, 3);
        for i in 0..n {
            m.set(i, i, 10.0 + i as f64);
            if i >= 1 {
                m.set(i, i - 1, -1.0);
            }
            if i >= 3 {
                m.set(i, i - 3, 0.5);
            }
        }
        let dense = m.to_dense();
        assert_eq!(dense, dense.transpose());
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y = m.matvec(&x);
        let yd = dense.matvec(&x);
        for (a, b) in y.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-13);
        }
        let chol = m.cholesky().unwrap();
        let mut z = y.clone();
        chol.solve_in_place(&mut z);
        for (a, b) in z.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let m = SymBanded::zeros(3, 1).shifted(-1.0);
        assert!(matches!(m.cholesky(), Err(Error::Singular { .. })));
    }

    #[test]
    fn numerical_rank_cutoff() {
        assert_eq!(numerical_rank(&[1.0, 1e-11, 1e-13]), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0]), 0);
        assert_eq!(numerical_rank(&[]), 0);
    }
}
