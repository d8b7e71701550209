//! Dense complex linear algebra on small Hilbert spaces.
//!
//! Composite indices always use the slow-A convention: for a bipartite
//! space `A ⊗ B` the joint index is `i = i_a * dim_b + i_b`. Every helper in
//! this module that builds or splits a composite object follows it.
//!
//! Spectral work (Hermitian eigendecomposition, SVD) is delegated to
//! `nalgebra`; everything else is written against the row-major
//! [`ComplexMatrix`] defined here.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default relative threshold for rank and support decisions.
pub const DEFAULT_THRESHOLD: f64 = 1e-10;

/// Default bound on either dimension of a Kronecker product.
pub const DEFAULT_MAX_DIMENSION: usize = 4096;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Which factor of a bipartite space an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => f.write_str("A"),
            Side::B => f.write_str("B"),
        }
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries supplied for a {}x{} matrix", data.len(), rows, cols)));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    /// Real matrix from nested rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cl = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == cl), "ragged rows");
        Self::from_fn(r, cl, |i, j| re(rows[i][j]))
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// `|u⟩⟨v|`
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[StateVector], rows: usize) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.dim() != rows {
                return Err(Error::Dimension(format!("column {} has dimension {}, expected {}", j, col.dim(), rows)));
            }
            for i in 0..rows {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> StateVector {
        StateVector::new((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Product of a chain of matrices, left to right.
    pub fn product(chain: &[&ComplexMatrix]) -> Result<Self> {
        let (first, rest) = chain.split_first().ok_or_else(|| Error::Dimension("empty product".into()))?;
        rest.iter().try_fold((*first).clone(), |acc, m| acc.matmul(m))
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if self.cols != v.dim() {
            return Err(Error::Dimension(format!(
                "cannot apply {}x{} matrix to vector of dimension {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let amps = (0..self.rows).map(|i| self.row(i).iter().zip(v.amplitudes()).map(|(a, b)| a * b).sum()).collect();
        Ok(StateVector::new(amps))
    }

    fn zip_with(&self, other: &ComplexMatrix, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.sub(other).map_or(f64::INFINITY, |d| d.max_abs())
    }

    /// Spectral norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        match self.to_faer().singular_values() {
            Ok(s) => s.into_iter().fold(0.0, f64::max),
            Err(_) => f64::NAN,
        }
    }

    /// Largest entry of `|M - M†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    fn to_faer(&self) -> faer::Mat<C64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    /// Sub-block `rows × cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }
}

/// Kronecker product with the default size limit.
pub fn kron(m1: &ComplexMatrix, m2: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_with_limit(m1, m2, DEFAULT_MAX_DIMENSION)
}

/// `(m1 ⊗ m2)[(i1,i2),(j1,j2)] = m1[i1,j1] · m2[i2,j2]`, first factor slow.
pub fn kron_with_limit(m1: &ComplexMatrix, m2: &ComplexMatrix, limit: usize) -> Result<ComplexMatrix> {
    let rows = m1.rows.saturating_mul(m2.rows);
    let cols = m1.cols.saturating_mul(m2.cols);
    if rows > limit {
        return Err(Error::Size { what: "kron rows", value: rows, limit });
    }
    if cols > limit {
        return Err(Error::Size { what: "kron cols", value: cols, limit });
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| m1[(i / m2.rows, j / m2.cols)] * m2[(i % m2.rows, j % m2.cols)]))
}

/// Normalization status carried by a [`StateVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Normalized,
    Unnormalized,
}

/// A (possibly unnormalized) vector in a finite-dimensional Hilbert space.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    normalization: Normalization,
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateVector")
            .field("dim", &self.dim())
            .field("normalization", &self.normalization)
            .field("amplitudes", &self.amplitudes)
            .finish()
    }
}

impl Index<usize> for StateVector {
    type Output = C64;

    #[inline]
    fn index(&self, i: usize) -> &C64 {
        &self.amplitudes[i]
    }
}

/// Tolerance on the squared norm of a vector flagged as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-12;

impl StateVector {
    /// Unnormalized vector.
    pub fn new(amplitudes: Vec<C64>) -> Self {
        StateVector { amplitudes, normalization: Normalization::Unnormalized }
    }

    /// Vector that must already have unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        if let Some(k) = amplitudes.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        let v = StateVector::new(amplitudes);
        let n2 = v.norm_sqr();
        if (n2 - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!("state has squared norm {n2}, expected 1")));
        }
        Ok(StateVector { normalization: Normalization::Normalized, ..v })
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector::new(vec![ZERO; dim])
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[k] = ONE;
        StateVector { amplitudes: amps, normalization: Normalization::Normalized }
    }

    pub fn from_real(values: &[f64]) -> Self {
        StateVector::new(values.iter().map(|&x| re(x)).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization == Normalization::Normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescaled copy with unit norm; zero vectors are a domain error.
    pub fn to_normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        Ok(StateVector {
            amplitudes: self.amplitudes.iter().map(|z| z / n).collect(),
            normalization: Normalization::Normalized,
        })
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector::new(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector::new(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: C64) -> StateVector {
        StateVector::new(self.amplitudes.iter().map(|a| a * s).collect())
    }

    /// `‖self - other‖`; `inf` on dimension mismatch.
    pub fn distance(&self, other: &StateVector) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.sub(other).norm()
    }

    /// `self ⊗ other`, `self` slow.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        let normalization = if self.is_normalized() && other.is_normalized() {
            Normalization::Normalized
        } else {
            Normalization::Unnormalized
        };
        StateVector { amplitudes: amps, normalization }
    }

    /// `|self⟩⟨self|`
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

/// Split of a joint space into `A ⊗ B`, A slow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BipartiteShape {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl BipartiteShape {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::Dimension(format!("bipartite dimensions must be positive, got ({dim_a}, {dim_b})")));
        }
        Ok(BipartiteShape { dim_a, dim_b })
    }

    pub fn joint_dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn dim(&self, side: Side) -> usize {
        match side {
            Side::A => self.dim_a,
            Side::B => self.dim_b,
        }
    }

    #[inline]
    pub fn index(&self, ia: usize, ib: usize) -> usize {
        ia * self.dim_b + ib
    }

    fn check_vector(&self, v: &StateVector) -> Result<()> {
        if v.dim() != self.joint_dim() {
            return Err(Error::Dimension(format!(
                "vector of dimension {} does not match shape {}x{}",
                v.dim(),
                self.dim_a,
                self.dim_b
            )));
        }
        Ok(())
    }
}

/// Coefficient matrix `M[i_a, i_b]` of a bipartite vector.
pub fn coefficient_matrix(v: &StateVector, shape: BipartiteShape) -> Result<ComplexMatrix> {
    shape.check_vector(v)?;
    ComplexMatrix::new(shape.dim_a, shape.dim_b, v.amplitudes().to_vec())
}

/// Traces out `traced` from a square matrix on `A ⊗ B`.
pub fn partial_trace(m: &ComplexMatrix, shape: BipartiteShape, traced: Side) -> Result<ComplexMatrix> {
    let n = shape.joint_dim();
    if m.rows() != n || m.cols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix does not act on a {}x{} bipartite space",
            m.rows(),
            m.cols(),
            shape.dim_a,
            shape.dim_b
        )));
    }
    let (da, db) = (shape.dim_a, shape.dim_b);
    Ok(match traced {
        Side::B => {
            ComplexMatrix::from_fn(da, da, |i, j| (0..db).map(|k| m[(shape.index(i, k), shape.index(j, k))]).sum())
        }
        Side::A => {
            ComplexMatrix::from_fn(db, db, |i, j| (0..da).map(|k| m[(shape.index(k, i), shape.index(k, j))]).sum())
        }
    })
}

/// Reduced density matrix of a pure bipartite vector on the `keep` factor,
/// computed without forming the joint projector.
pub fn reduced_density(v: &StateVector, shape: BipartiteShape, keep: Side) -> Result<ComplexMatrix> {
    let m = coefficient_matrix(v, shape)?;
    match keep {
        Side::A => m.matmul(&m.adjoint()),
        Side::B => m.transpose().matmul(&m.conj()),
    }
}

/// `(op ⊗ I)v` or `(I ⊗ op)v` for a possibly rectangular `op`.
///
/// Returns the image vector together with its new shape (the acted-on
/// factor takes `op.rows()` as its dimension).
pub fn apply_local(
    op: &ComplexMatrix,
    v: &StateVector,
    shape: BipartiteShape,
    side: Side,
) -> Result<(StateVector, BipartiteShape)> {
    if op.cols() != shape.dim(side) {
        return Err(Error::Dimension(format!(
            "operator with {} columns cannot act on side {} of dimension {}",
            op.cols(),
            side,
            shape.dim(side)
        )));
    }
    let m = coefficient_matrix(v, shape)?;
    let (out, new_shape) = match side {
        Side::A => (op.matmul(&m)?, BipartiteShape::new(op.rows(), shape.dim_b)?),
        Side::B => (m.matmul(&op.transpose())?, BipartiteShape::new(shape.dim_a, op.rows())?),
    };
    Ok((StateVector::new(out.data), new_shape))
}

/// Reorders the tensor factors of `v`.
///
/// `dims` lists the input factor dimensions, slowest first. Output factor
/// `k` is input factor `perm[k]`, so the output multi-index
/// `(j_0, …, j_{n-1})` reads the input at `i_{perm[k]} = j_k`.
pub fn permute_factors(v: &StateVector, dims: &[usize], perm: &[usize]) -> Result<StateVector> {
    let total: usize = dims.iter().product();
    if total != v.dim() {
        return Err(Error::Dimension(format!("factor dimensions {:?} do not multiply to {}", dims, v.dim())));
    }
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Dimension(format!("{perm:?} is not a permutation of {} factors", dims.len())));
    }
    // input strides, slow factor first
    let mut stride = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        stride[k] = stride[k + 1] * dims[k + 1];
    }
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let mut out = vec![ZERO; total];
    let mut digits = vec![0usize; dims.len()];
    for slot in out.iter_mut() {
        let src: usize = digits.iter().zip(perm).map(|(&d, &p)| d * stride[p]).sum();
        *slot = v[src];
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < out_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(StateVector { amplitudes: out, normalization: v.normalization })
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending with the
/// matching eigenvectors as columns.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigendecomposition of a non-square {}x{} matrix", m.rows(), m.cols())));
    }
    let n = m.rows();
    if n == 0 {
        return Ok((vec![], ComplexMatrix::zeros(0, 0)));
    }
    let sym = ComplexMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let eig = sym.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// `f(M)` for Hermitian `M` via its eigendecomposition.
pub fn hermitian_function(m: &ComplexMatrix, f: impl Fn(f64) -> C64) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eigen(m)?;
    let n = values.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let fk = f(lam);
        if fk == ZERO {
            continue;
        }
        for i in 0..n {
            let vik = vectors[(i, k)] * fk;
            for j in 0..n {
                out[(i, j)] += vik * vectors[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the eigenspaces of `rho` whose eigenvalue
/// exceeds `threshold · λ_max`.
pub fn support_projector(rho: &ComplexMatrix, threshold: f64) -> Result<ComplexMatrix> {
    let scale = rho.max_abs().max(1.0);
    let defect = rho.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(Error::Validation(format!("support_projector needs a Hermitian matrix (defect {defect:.3e})")));
    }
    let (values, vectors) = hermitian_eigen(rho)?;
    let n = values.len();
    let lam_max = values.last().copied().unwrap_or(0.0);
    if let Some(&lam_min) = values.first() {
        if lam_min < -1e-10 * lam_max.max(1.0) {
            return Err(Error::Validation(format!(
                "support_projector needs a positive semidefinite matrix (eigenvalue {lam_min:.3e})"
            )));
        }
    }
    let mut p = ComplexMatrix::zeros(n, n);
    if lam_max <= 0.0 {
        return Ok(p);
    }
    for (k, &lam) in values.iter().enumerate() {
        if lam <= threshold * lam_max {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] += vectors[(i, k)] * vectors[(j, k)].conj();
            }
        }
    }
    Ok(p)
}

/// Numerical rank of a projector-like matrix (rounded trace).
pub fn projector_rank(p: &ComplexMatrix) -> usize {
    p.trace().re.round().max(0.0) as usize
}

/// One term of a Schmidt decomposition.
#[derive(Debug, Clone)]
pub struct SchmidtTerm {
    pub coefficient: f64,
    pub left: StateVector,
    pub right: StateVector,
}

/// `v = Σ λ_i |left_i⟩ ⊗ |right_i⟩` with `λ` descending and only terms with
/// `λ_i² > DEFAULT_THRESHOLD · λ_max²` kept.
pub fn schmidt_decompose(v: &StateVector, shape: BipartiteShape) -> Result<Vec<SchmidtTerm>> {
    let m = coefficient_matrix(v, shape)?;
    let svd = ThinSvd::of(&m)?;
    let Some(&s_max) = svd.values.first() else {
        return Ok(vec![]);
    };
    if s_max == 0.0 {
        return Ok(vec![]);
    }
    let terms = svd
        .values
        .iter()
        .enumerate()
        .filter(|&(_, s)| s * s > DEFAULT_THRESHOLD * s_max * s_max)
        .map(|(k, &s)| SchmidtTerm {
            coefficient: s,
            left: svd.u.column(k),
            right: StateVector::new((0..shape.dim_b).map(|j| svd.v[(j, k)].conj()).collect()),
        })
        .collect();
    Ok(terms)
}

/// `M = U diag(values) V†` with the values descending.
struct ThinSvd {
    values: Vec<f64>,
    u: ComplexMatrix,
    v: ComplexMatrix,
}

impl ThinSvd {
    fn of(m: &ComplexMatrix) -> Result<Self> {
        let svd = m.to_faer().thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S(), svd.V());
        let k = s.dim();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| s[j].re.total_cmp(&s[i].re));
        Ok(ThinSvd {
            values: order.iter().map(|&i| s[i].re).collect(),
            u: ComplexMatrix::from_fn(m.rows, k, |i, j| u[(i, order[j])]),
            v: ComplexMatrix::from_fn(m.cols, k, |i, j| v[(i, order[j])]),
        })
    }
}

/// Orthonormal basis of the span of `vectors`, plus the coordinates of each
/// input in that basis (`rank × n`, column `j` belongs to input `j`).
///
/// Rank is the number of singular values above `threshold · σ_max`.
pub fn orthonormal_basis(vectors: &[StateVector], threshold: f64) -> Result<(Vec<StateVector>, ComplexMatrix)> {
    let Some(first) = vectors.first() else {
        return Ok((vec![], ComplexMatrix::zeros(0, 0)));
    };
    let dim = first.dim();
    let m = ComplexMatrix::from_columns(vectors, dim)?;
    if dim == 0 {
        return Ok((vec![], ComplexMatrix::zeros(0, vectors.len())));
    }
    let svd = ThinSvd::of(&m)?;
    let s_max = svd.values.first().copied().unwrap_or(0.0);
    let basis: Vec<StateVector> = (0..svd.values.len())
        .filter(|&k| s_max > 0.0 && svd.values[k] > threshold * s_max)
        .map(|k| StateVector { amplitudes: svd.u.column(k).amplitudes, normalization: Normalization::Normalized })
        .collect();
    let coords = ComplexMatrix::from_fn(basis.len(), vectors.len(), |r, j| basis[r].inner(&vectors[j]));
    Ok((basis, coords))
}

/// Outcome of [`equal_on_support`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportComparison {
    pub equal: bool,
    pub residual: f64,
}

/// Compares two operators acting on one side of `psi` only where it
/// matters: on the support of the reduced density matrix of that side.
///
/// `residual = ‖(op1 − op2) P_supp‖_op`.
pub fn equal_on_support(
    op1: &ComplexMatrix,
    op2: &ComplexMatrix,
    psi: &StateVector,
    shape: BipartiteShape,
    side: Side,
    tol: f64,
) -> Result<SupportComparison> {
    let d = shape.dim(side);
    if op1.cols() != d || op2.cols() != d || op1.rows() != op2.rows() {
        return Err(Error::Dimension(format!(
            "operators {}x{} and {}x{} cannot both act on side {} of dimension {}",
            op1.rows(),
            op1.cols(),
            op2.rows(),
            op2.cols(),
            side,
            d
        )));
    }
    let rho = reduced_density(psi, shape, side)?;
    let support = support_projector(&rho, DEFAULT_THRESHOLD)?;
    let residual = op1.sub(op2)?.matmul(&support)?.op_norm();
    Ok(SupportComparison { equal: residual <= tol, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cl: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, cl, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
        StateVector::new((0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
    }

    fn phi_plus() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::normalized(vec![re(h), ZERO, ZERO, re(h)]).unwrap()
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(k, ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_with_flip_swaps_blocks() {
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let k = kron(&x, &ComplexMatrix::identity(2)).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
        ]);
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_of_rank_one_projectors() {
        let p0 = StateVector::basis(2, 0).projector();
        let p1 = StateVector::basis(2, 1).projector();
        let k = kron(&p0, &p1).unwrap();
        assert_eq!(k, ComplexMatrix::diagonal(&[ZERO, ONE, ZERO, ZERO]));
    }

    #[test]
    fn kron_rejects_oversized_output() {
        let big = ComplexMatrix::identity(100);
        assert!(matches!(kron(&big, &big), Err(Error::Size { .. })));
        assert!(kron_with_limit(&big, &big, 10_000).is_ok());
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(matches!(ComplexMatrix::new(1, 2, vec![ONE]), Err(Error::Dimension(_))));
        assert!(matches!(ComplexMatrix::new(1, 2, vec![ONE, c(f64::NAN, 0.0)]), Err(Error::NonFinite(1))));
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let rho = phi_plus().projector();
        let shape = BipartiteShape::new(2, 2).unwrap();
        let red = partial_trace(&rho, shape, Side::B).unwrap();
        assert!(red.max_abs_diff(&ComplexMatrix::identity(2).scale(re(0.5))) < 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let rho = StateVector::basis(4, 0).projector();
        let shape = BipartiteShape::new(2, 2).unwrap();
        let red = partial_trace(&rho, shape, Side::B).unwrap();
        assert_eq!(red, StateVector::basis(2, 0).projector());
    }

    #[test]
    fn partial_trace_matches_explicit_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = BipartiteShape::new(3, 4).unwrap();
        let g = random_matrix(&mut rng, 12, 12);
        let rho = g.matmul(&g.adjoint()).unwrap();
        let red = partial_trace(&rho, shape, Side::A).unwrap();
        // oracle: explicit 4-index contraction
        let mut oracle = ComplexMatrix::zeros(4, 4);
        for b1 in 0..4 {
            for b2 in 0..4 {
                let mut acc = ZERO;
                for a in 0..3 {
                    acc += rho.entries()[(a * 4 + b1) * 12 + (a * 4 + b2)];
                }
                oracle[(b1, b2)] = acc;
            }
        }
        assert!(red.max_abs_diff(&oracle) < 1e-13);
        assert!((red.trace() - rho.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_shape_mismatch() {
        let shape = BipartiteShape::new(2, 3).unwrap();
        assert!(partial_trace(&ComplexMatrix::identity(4), shape, Side::A).is_err());
    }

    #[test]
    fn reduced_density_agrees_with_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = BipartiteShape::new(3, 5).unwrap();
        let v = random_vector(&mut rng, 15);
        for side in [Side::A, Side::B] {
            let fast = reduced_density(&v, shape, side).unwrap();
            let slow = partial_trace(&v.projector(), shape, side.other()).unwrap();
            assert!(fast.max_abs_diff(&slow) < 1e-13);
        }
    }

    #[test]
    fn apply_local_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = BipartiteShape::new(3, 2).unwrap();
        let v = random_vector(&mut rng, 6);
        let oa = random_matrix(&mut rng, 4, 3);
        let ob = random_matrix(&mut rng, 2, 2);
        let (wa, sa) = apply_local(&oa, &v, shape, Side::A).unwrap();
        let direct = kron(&oa, &ComplexMatrix::identity(2)).unwrap().apply(&v).unwrap();
        assert_eq!(sa, BipartiteShape::new(4, 2).unwrap());
        assert!(wa.distance(&direct) < 1e-14);
        let (wb, _) = apply_local(&ob, &v, shape, Side::B).unwrap();
        let direct = kron(&ComplexMatrix::identity(3), &ob).unwrap().apply(&v).unwrap();
        assert!(wb.distance(&direct) < 1e-14);
    }

    #[test]
    fn permute_factors_swaps_tensor_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let u = random_vector(&mut rng, 2);
        let v = random_vector(&mut rng, 3);
        let w = random_vector(&mut rng, 4);
        let uvw = u.tensor(&v).tensor(&w);
        let wuv = permute_factors(&uvw, &[2, 3, 4], &[2, 0, 1]).unwrap();
        assert!(wuv.distance(&w.tensor(&u).tensor(&v)) < 1e-15);
        let back = permute_factors(&wuv, &[4, 2, 3], &[1, 2, 0]).unwrap();
        assert!(back.distance(&uvw) < 1e-15);
        assert!(permute_factors(&uvw, &[2, 3, 4], &[0, 0, 1]).is_err());
        assert!(permute_factors(&uvw, &[2, 3, 5], &[0, 1, 2]).is_err());
    }

    #[test]
    fn schmidt_of_bell_pair() {
        let terms = schmidt_decompose(&phi_plus(), BipartiteShape::new(2, 2).unwrap()).unwrap();
        assert_eq!(terms.len(), 2);
        for t in &terms {
            assert!((t.coefficient - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
    }

    #[test]
    fn schmidt_of_product_state() {
        let v = StateVector::basis(4, 1); // |01⟩
        let terms = schmidt_decompose(&v, BipartiteShape::new(2, 2).unwrap()).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].coefficient - 1.0).abs() < 1e-14);
        assert!((terms[0].left[0].norm() - 1.0).abs() < 1e-14);
        assert!((terms[0].right[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn schmidt_reconstructs_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let shape = BipartiteShape::new(3, 5).unwrap();
        let v = random_vector(&mut rng, 15);
        let terms = schmidt_decompose(&v, shape).unwrap();
        let mut rebuilt = StateVector::zeros(15);
        for t in &terms {
            rebuilt = rebuilt.add(&t.left.tensor(&t.right).scale(re(t.coefficient)));
        }
        assert!(rebuilt.distance(&v) < 1e-10);
        let total: f64 = terms.iter().map(|t| t.coefficient.powi(2)).sum();
        assert!((total - v.norm_sqr()).abs() < 1e-12);
        assert!(terms.windows(2).all(|w| w[0].coefficient >= w[1].coefficient));
    }

    #[test]
    fn support_projector_examples() {
        let half = ComplexMatrix::identity(2).scale(re(0.5));
        assert!(support_projector(&half, 1e-10).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
        let p0 = StateVector::basis(2, 0).projector();
        assert!(support_projector(&p0, 1e-10).unwrap().max_abs_diff(&p0) < 1e-14);
    }

    #[test]
    fn support_projector_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(support_projector(&m, 1e-10), Err(Error::Validation(_))));
        let neg = ComplexMatrix::diagonal(&[re(1.0), re(-0.5)]);
        assert!(matches!(support_projector(&neg, 1e-10), Err(Error::Validation(_))));
    }

    #[test]
    fn orthonormal_basis_examples() {
        let e0 = StateVector::basis(2, 0);
        let e1 = StateVector::basis(2, 1);
        let (b, _) = orthonormal_basis(&[e0.clone(), e0.clone()], 1e-10).unwrap();
        assert_eq!(b.len(), 1);
        let (b, coords) = orthonormal_basis(&[e0.clone(), e1.clone()], 1e-10).unwrap();
        assert_eq!(b.len(), 2);
        // basis is unique up to phases; coordinates must then be a diagonal unitary
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((coords[(i, j)].norm() - expect).abs() < 1e-14);
            }
        }
        let (b, coords) = orthonormal_basis(&[], 1e-10).unwrap();
        assert!(b.is_empty());
        assert_eq!(coords.rows(), 0);
    }

    #[test]
    fn orthonormal_basis_reconstructs_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // tall and wide sets of low rank, including sizes where a plain
        // bidiagonal SVD loses accuracy
        for _ in 0..60 {
            let dim = rng.random_range(4..70);
            let count = rng.random_range(4..40);
            let rank = rng.random_range(1..=4);
            let gens: Vec<_> = (0..rank).map(|_| random_vector(&mut rng, dim)).collect();
            let vecs: Vec<_> = (0..count)
                .map(|_| {
                    gens.iter().fold(StateVector::zeros(dim), |acc, g| {
                        acc.add(&g.scale(c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                    })
                })
                .collect();
            let (basis, coords) = orthonormal_basis(&vecs, 1e-8).unwrap();
            assert_eq!(basis.len(), rank);
            for (j, v) in vecs.iter().enumerate() {
                let mut rebuilt = StateVector::zeros(dim);
                for (r, bv) in basis.iter().enumerate() {
                    rebuilt = rebuilt.add(&bv.scale(coords[(r, j)]));
                }
                assert!(rebuilt.distance(v) < 1e-12, "dim {dim} count {count}: {}", rebuilt.distance(v));
            }
            for i in 0..rank {
                for j in 0..rank {
                    let expect = if i == j { ONE } else { ZERO };
                    assert!((basis[i].inner(&basis[j]) - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn op_norm_of_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..40 {
            let (r, cl) = (rng.random_range(1..50), rng.random_range(1..50));
            let m = random_matrix(&mut rng, r, cl);
            // largest eigenvalue of M†M, from the Hermitian solver
            let (vals, _) = hermitian_eigen(&m.adjoint().matmul(&m).unwrap()).unwrap();
            let expected = vals.last().unwrap().sqrt();
            assert!((m.op_norm() - expected).abs() < 1e-10 * expected, "{} vs {expected}", m.op_norm());
        }
    }

    #[test]
    fn equal_on_support_examples() {
        let shape = BipartiteShape::new(2, 2).unwrap();
        let id = ComplexMatrix::identity(2);
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let r = equal_on_support(&id, &id, &phi_plus(), shape, Side::A, 1e-8).unwrap();
        assert!(r.equal && r.residual == 0.0);
        let r = equal_on_support(&x, &id, &phi_plus(), shape, Side::A, 1e-8).unwrap();
        // ‖X − I‖ = 2
        assert!(!r.equal && r.residual >= 1.0);
        assert!((r.residual - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_on_support_ignores_kernel() {
        // psi = |0⟩|0⟩ on 2x2: the support on A is span{|0⟩}
        let shape = BipartiteShape::new(2, 2).unwrap();
        let psi = StateVector::basis(4, 0);
        let op1 = ComplexMatrix::from_real_rows(&[&[1.0, 5.0], &[2.0, -3.0]]);
        let op2 = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[2.0, 7.0]]);
        let r = equal_on_support(&op1, &op2, &psi, shape, Side::A, 1e-8).unwrap();
        assert!(r.equal);
        let v1 = apply_local(&op1, &psi, shape, Side::A).unwrap().0;
        let v2 = apply_local(&op2, &psi, shape, Side::A).unwrap().0;
        assert!(v1.distance(&v2) < 1e-14);
    }

    #[test]
    fn hermitian_function_square_root() {
        let m = ComplexMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = hermitian_function(&m, |x| re(x.sqrt())).unwrap();
        assert!(s.matmul(&s).unwrap().max_abs_diff(&m) < 1e-13);
    }

    #[test]
    fn normalized_state_is_checked() {
        assert!(StateVector::normalized(vec![ONE, ONE]).is_err());
        assert!(StateVector::normalized(vec![ONE, ZERO]).unwrap().is_normalized());
        assert!(!StateVector::new(vec![ONE]).is_normalized());
        assert!(StateVector::zeros(3).to_normalized().is_err());
    }
}
