//! Dense matrices, thin SVD, and observation masks.
//!
//! [`DenseMatrix`] wraps a column-major `nalgebra` matrix but speaks row-major
//! at its boundaries (constructors, CSV files). [`thin_svd`] delegates the
//! factorization to `nalgebra` and normalizes the result: singular values are
//! sorted non-increasing and every left singular vector has a non-negative
//! first nonzero entry, with the matching right vector flipped along with it.

use std::collections::HashSet;
use std::ops::{Add, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff used when counting numerically nonzero singular values.
pub const RANK_TOLERANCE: f64 = 1e-8;

const SVD_MAX_SWEEPS: usize = 10_000;

// nalgebra occasionally returns an inconsistent factorization of a
// rank-deficient input at the tightest tolerances; looser ones are retried.
const SVD_TOLERANCES: [f64; 4] = [f64::EPSILON, 1e-14, 1e-12, 1e-10];
const SVD_BACKWARD_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", entries.len()),
            });
        }
        let m = DenseMatrix(DMatrix::from_row_slice(rows, cols, &entries));
        m.ensure_finite()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix(DMatrix::identity(n, n))
    }

    /// `rows x cols` matrix with `diag` on its main diagonal.
    pub fn from_diagonal(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = DMatrix::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        DenseMatrix(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        DenseMatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.0[(row, col)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.0.row(i).iter().copied());
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn frobenius_norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DenseMatrix(&self.0 * factor)
    }

    pub fn transpose(&self) -> Self {
        DenseMatrix(self.0.transpose())
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Self {
        DenseMatrix(self.0.columns(start, width).into_owned())
    }

    /// Horizontal concatenation. All blocks must have the same row count.
    pub fn hstack(blocks: &[DenseMatrix]) -> Result<Self> {
        let rows = blocks
            .first()
            .map(DenseMatrix::rows)
            .ok_or_else(|| Error::InvalidArgument("cannot concatenate zero blocks".into()))?;
        let cols: usize = blocks.iter().map(DenseMatrix::cols).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            if b.rows() != rows {
                return Err(Error::dims((rows, b.cols()), b.shape()));
            }
            out.columns_mut(offset, b.cols()).copy_from(&b.0);
            offset += b.cols();
        }
        Ok(DenseMatrix(out))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.0.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::NonFiniteEntry {
                row: k % self.rows(),
                col: k / self.rows(),
            }),
        }
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<DMatrix<f64>> for DenseMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        DenseMatrix(m)
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix(&self.0 - &rhs.0)
    }
}

/// Thin factorization `A = U diag(s) Vᵀ` with `k = min(rows, cols)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// `U diag(values) Vᵀ`, skipping zero components.
    pub fn compose(&self, values: &[f64]) -> DenseMatrix {
        compose_with(&self.u, values, &self.v)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.compose(&self.singular_values)
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values)
    }
}

pub(crate) fn compose_with(u: &DenseMatrix, values: &[f64], v: &DenseMatrix) -> DenseMatrix {
    let active: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
    if active.is_empty() {
        return DenseMatrix::zeros(u.rows(), v.rows());
    }
    let mut left = DMatrix::zeros(u.rows(), active.len());
    let mut right = DMatrix::zeros(v.rows(), active.len());
    for (j, &i) in active.iter().enumerate() {
        left.column_mut(j).copy_from(&(u.0.column(i) * values[i]));
        right.column_mut(j).copy_from(&v.0.column(i));
    }
    DenseMatrix(left * right.transpose())
}

/// Number of singular values above `RANK_TOLERANCE * s[0]`.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let Some(&top) = singular_values.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * top)
        .count()
}

pub fn thin_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    a.ensure_finite()?;
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    let (u, values, v_t) = SVD_TOLERANCES
        .iter()
        .find_map(|&eps| consistent_svd(&a.0, eps))
        .or_else(|| {
            let transposed = a.0.transpose();
            SVD_TOLERANCES.iter().find_map(|&eps| {
                consistent_svd(&transposed, eps).map(|(u, s, v_t)| (v_t.transpose(), s, u.transpose()))
            })
        })
        .ok_or(Error::SvdNotConverged { rows, cols })?;
    let values = &values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let mut u_out = DMatrix::zeros(rows, k);
    let mut v_out = DMatrix::zeros(cols, k);
    let mut s_out = Vec::with_capacity(k);
    for (j, &i) in order.iter().enumerate() {
        let mut ucol = u.column(i).into_owned();
        let mut vcol = v_t.row(i).transpose();
        let flip = ucol
            .iter()
            .find(|x| x.abs() > f64::EPSILON)
            .is_some_and(|&x| x < 0.0);
        if flip {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        u_out.column_mut(j).copy_from(&ucol);
        v_out.column_mut(j).copy_from(&vcol);
        s_out.push(values[i].max(0.0));
    }
    Ok(SvdFactors {
        u: DenseMatrix(u_out),
        singular_values: s_out,
        v: DenseMatrix(v_out),
    })
}

fn consistent_svd(a: &DMatrix<f64>, eps: f64) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, eps, SVD_MAX_SWEEPS)?;
    let (u, v_t) = (svd.u?, svd.v_t?);
    let s = svd.singular_values;
    let scale = a.norm();
    let residual = (&u * DMatrix::from_diagonal(&s) * &v_t - a).norm();
    let k = s.len();
    let identity = DMatrix::<f64>::identity(k, k);
    let u_drift = (u.transpose() * &u - &identity).norm();
    let v_drift = (&v_t * v_t.transpose() - &identity).norm();
    let ok = residual <= SVD_BACKWARD_TOLERANCE * scale
        && u_drift <= SVD_BACKWARD_TOLERANCE * k as f64
        && v_drift <= SVD_BACKWARD_TOLERANCE * k as f64;
    ok.then_some((u, s, v_t))
}

/// Observed entries `(row, col, value)` of a `rows x cols` matrix, kept sorted row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "observation dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for &(i, j, y) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "observation ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if !y.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate observation at ({i}, {j})"
                )));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Ok(ObservationSet {
            rows,
            cols,
            entries,
        })
    }

    /// Every entry of `m` observed.
    pub fn full(m: &DenseMatrix) -> Self {
        let entries = (0..m.rows())
            .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, m.get(i, j)))
            .collect();
        ObservationSet {
            rows: m.rows(),
            cols: m.cols(),
            entries,
        }
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

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries
            .binary_search_by_key(&(row, col), |&(i, j, _)| (i, j))
            .is_ok()
    }

    /// The observed values scattered into an otherwise zero matrix, `P_Ω(Y)`.
    pub fn observed_matrix(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, y) in &self.entries {
            out.set(i, j, y);
        }
        out
    }

    /// Frobenius norm of the observed values, `‖Y‖_Ω`.
    pub fn value_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }

    pub(crate) fn check_shape(&self, a: &DenseMatrix) -> Result<()> {
        if a.shape() != self.shape() {
            return Err(Error::dims(self.shape(), a.shape()));
        }
        Ok(())
    }
}

/// `P_Ω(A)`: keeps the entries of `a` indexed by `omega` and zeroes the rest.
pub fn mask_project(a: &DenseMatrix, omega: &ObservationSet) -> Result<DenseMatrix> {
    omega.check_shape(a)?;
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    for &(i, j, _) in omega.entries() {
        out.set(i, j, a.get(i, j));
    }
    Ok(out)
}

pub fn masked_frobenius_norm(a: &DenseMatrix, omega: &ObservationSet) -> Result<f64> {
    omega.check_shape(a)?;
    Ok(omega
        .entries()
        .iter()
        .map(|&(i, j, _)| a.get(i, j).powi(2))
        .sum::<f64>()
        .sqrt())
}
