//! Dense complex matrices and the handful of operations the rest of the
//! crate is built on.
//!
//! Composite spaces are always ordered system ⊗ detector: the system index is
//! the slow (outer) index of a Kronecker product and the detector index the
//! fast (inner) one. Nothing in the crate reorders factors at runtime.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest combined Hilbert-space dimension accepted by [`tensor_product`].
pub const MAX_COMBINED_DIM: usize = 4096;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances shared by the validation predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Max entrywise deviation from H = H†, relative to max(1, max|H_ij|).
    pub hermiticity: f64,
    /// Smallest eigenvalue tolerated for a positive semi-definite matrix.
    pub psd_eigen_floor: f64,
    pub trace_one: f64,
    pub general_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-9,
            psd_eigen_floor: -1e-9,
            trace_one: 1e-9,
            general_rel: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hermiticity", self.hermiticity),
            ("trace_one", self.trace_one),
            ("general_rel", self.general_rel),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("tolerance {name} must be > 0")));
            }
        }
        if !(self.psd_eigen_floor.is_finite() && self.psd_eigen_floor < 0.0) {
            return Err(Error::InvalidParameter(
                "tolerance psd_eigen_floor must be < 0".into(),
            ));
        }
        Ok(())
    }
}

/// Dense complex matrix. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("matrix must be at least 1x1".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, &entries)))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        let entries = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), ncols, entries)
    }

    /// Real matrix from row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = DMatrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        Self(m)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_diagonal(&diag.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    /// Outer product |v⟩⟨v| (no normalization).
    pub fn projector(ket: &[C64]) -> Self {
        Self::outer(ket, ket)
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self(DMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj()))
    }

    pub(crate) fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
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

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self(&self.0 * z)
    }

    pub fn scale_real(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    /// Tr[self · rho].
    pub fn trace_product(&self, rho: &ComplexMatrix) -> C64 {
        // Tr[AB] = Σ_ij A_ij B_ji without forming the product.
        let (a, b) = (&self.0, &rho.0);
        let mut acc = ZERO;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                acc += a[(i, j)] * b[(j, i)];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max |H_ij − conj(H_ji)|; infinite for non-square input.
    pub fn hermiticity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: &Tolerances) -> bool {
        self.hermiticity_deviation() <= tol.hermiticity * self.max_abs().max(1.0)
    }

    pub(crate) fn check_hermitian(&self, tol: &Tolerances) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        let deviation = self.hermiticity_deviation();
        if deviation > tol.hermiticity * self.max_abs().max(1.0) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(())
    }

    /// (H + H†)/2.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn commutator(&self, other: &ComplexMatrix) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn anticommutator(&self, other: &ComplexMatrix) -> Self {
        &(self * other) + &(other * self)
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = Self::identity(self.rows());
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Compression P†·self·P onto the span of the given orthonormal columns.
    pub fn compress(&self, basis: &ComplexMatrix) -> Self {
        &(&basis.adjoint() * self) * basis
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>], nrows: usize) -> Self {
        Self(DMatrix::from_fn(nrows, columns.len(), |i, j| columns[j][i]))
    }
}

/// JSON layout: an array of rows, each row an array of `[re, im]` pairs.
impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix(&self.0 $op &rhs.0)
            }
        }
        impl $tr<ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix(self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

/// Kronecker product A ⊗ B, capped at [`MAX_COMBINED_DIM`].
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    tensor_product_with_limit(a, b, MAX_COMBINED_DIM)
}

pub fn tensor_product_with_limit(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    max_dim: usize,
) -> Result<ComplexMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= max_dim && c <= max_dim => Ok(ComplexMatrix(a.0.kronecker(&b.0))),
        _ => Err(Error::DimensionOverflow {
            dim: a.rows().saturating_mul(b.rows()).max(a.cols().saturating_mul(b.cols())),
            max: max_dim,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Detector,
}

/// Partial trace over the factor not kept, with `dims = (d_sys, d_det)`.
pub fn partial_trace(
    m: &ComplexMatrix,
    dims: (usize, usize),
    keep: Subsystem,
) -> Result<ComplexMatrix> {
    let (ds, dd) = dims;
    let n = ds * dd;
    if ds == 0 || dd == 0 || m.rows() != n || m.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace of a {}x{} matrix with factor dims ({ds}, {dd})",
            m.rows(),
            m.cols()
        )));
    }
    let out = match keep {
        Subsystem::Detector => DMatrix::from_fn(dd, dd, |a, b| {
            (0..ds).map(|i| m.0[(i * dd + a, i * dd + b)]).sum()
        }),
        Subsystem::System => DMatrix::from_fn(ds, ds, |i, j| {
            (0..dd).map(|a| m.0[(i * dd + a, j * dd + a)]).sum()
        }),
    };
    Ok(ComplexMatrix(out))
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary matrix whose j-th column is the eigenvector of `values[j]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// V·diag(f(e))·V†.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let v = &self.vectors.0;
        let mut scaled = v.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let fe = f(e);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fe);
        }
        ComplexMatrix(scaled * v.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|e| C64::new(e, 0.0))
    }

    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.vectors.column(j)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    /// Largest |eigenvalue|.
    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }
}

pub fn hermitian_eig(h: &ComplexMatrix, tol: &Tolerances) -> Result<HermitianEigen> {
    h.check_hermitian(tol)?;
    let eig = SymmetricEigen::new(h.hermitian_part().0);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = h.rows();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen {
        values,
        vectors: ComplexMatrix(vectors),
    })
}

/// exp(i·scale·H) for Hermitian H.
pub fn unitary_exp(h: &ComplexMatrix, scale: f64, tol: &Tolerances) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(h, tol)?;
    Ok(eig.map(|e| C64::from_polar(1.0, scale * e)))
}

/// (X, Y) = Tr[P2·X·P1·Y†] for nonnegative P1, P2.
pub fn semi_inner_product(
    p2: &ComplexMatrix,
    p1: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<C64> {
    let n = p1.rows();
    for (name, m) in [("P2", p2), ("P1", p1), ("X", x), ("Y", y)] {
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{}, expected {n}x{n}",
                m.rows(),
                m.cols()
            )));
        }
    }
    for p in [p1, p2] {
        let eig = hermitian_eig(p, tol)?;
        if eig.min() < tol.psd_eigen_floor {
            return Err(Error::Spectrum {
                eigenvalue: eig.min(),
                range: "[0, inf)",
            });
        }
    }
    Ok((&(&(p2 * x) * p1) * &y.adjoint()).trace())
}
