//! Small dense real matrices, cyclic Jacobi eigendecomposition of symmetric
//! matrices and definiteness tests.
//!
//! Everything here is sized for the certification problems in this crate:
//! at most 2(M + 2) ≤ 64 rows, so plain row-major storage and O(n³) sweeps
//! are fine.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`sym_eig`].
pub const MAX_EIG_DIM: usize = 64;

/// Default absolute tolerance for definiteness checks.
pub const DEFAULT_DEF_TOL: f64 = 1e-9;

/// Dense row-major real matrix.
#[derive(Clone)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6e}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl PartialEq for Mat {
    fn eq(&self, o: &Mat) -> bool {
        self.rows == o.rows && self.cols == o.cols && self.data == o.data
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            symmetric: rows == cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let mut m = Mat {
            rows,
            cols,
            data,
            symmetric: false,
        };
        m.symmetric = m.is_exactly_symmetric();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Mat::from_row_major(r, c, rows.concat())
    }

    /// Builds a symmetric matrix, averaging `a[i][j]` and `a[j][i]`.
    pub fn symmetric(n: usize, data: Vec<f64>) -> Result<Self> {
        let m = Mat::from_row_major(n, n, data)?;
        Ok(m.symmetrized())
    }

    /// 2×2 convenience constructor `[[a, b], [c, d]]`.
    pub fn m2(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat::from_row_major(2, 2, vec![a, b, c, d]).expect("2x2")
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

    /// True when the symmetry flag is set, i.e. entries are exactly mirrored.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    fn is_exactly_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        (0..n).all(|i| (i + 1..n).all(|j| self.data[i * n + j] == self.data[j * n + i]))
    }

    /// Returns `(A + Aᵀ)/2` with the symmetry flag set. Panics on non-square input.
    pub fn symmetrized(&self) -> Mat {
        assert!(self.is_square(), "symmetrized() needs a square matrix");
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out.symmetric = true;
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out.symmetric = self.symmetric;
        out
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out.symmetric = out.is_exactly_symmetric();
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.matvec(x)?;
        Ok(x.iter().zip(&ax).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies `block` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.data[(r0 + i) * self.cols + c0 + j] = block.data[i * block.cols + j];
            }
        }
        self.symmetric = self.is_exactly_symmetric();
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self.data[(r0 + i) * self.cols + c0 + j];
            }
        }
        out.symmetric = out.is_exactly_symmetric();
        out
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix shape mismatch"
        );
        let mut out = Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            symmetric: false,
        };
        out.symmetric = out.is_exactly_symmetric();
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        // writes may break symmetry; callers re-symmetrize when they need the flag
        self.symmetric = false;
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix shape mismatch")
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Serialize for Mat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigen-decomposition `S = Q diag(λ) Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Mat,
}

impl EigResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let n = self.eigenvectors.rows();
        (0..n).map(|i| self.eigenvectors[(i, k)]).collect()
    }

    /// Rebuilds `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> Mat {
        let n = self.eigenvalues.len();
        let mut out = Mat::zeros(n, n);
        for (k, lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                let qi = self.eigenvectors[(i, k)] * lam;
                for j in 0..n {
                    out.data[i * n + j] += qi * self.eigenvectors[(j, k)];
                }
            }
        }
        out.symmetrized()
    }
}

fn check_symmetric_input(s: &Mat) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if s.is_symmetric() {
        return Ok(());
    }
    let n = s.rows();
    let scale = s.frobenius_norm().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Dimension(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    s[(i, j)],
                    s[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps rotate away every off-diagonal pair until the off-diagonal
/// Frobenius norm drops below `1e-12 · ‖S‖_F`. Eigenvalues come back ascending.
pub fn sym_eig(s: &Mat) -> Result<EigResult> {
    check_symmetric_input(s)?;
    let n = s.rows();
    if n > MAX_EIG_DIM {
        return Err(Error::Dimension(format!(
            "sym_eig supports dimension <= {MAX_EIG_DIM}, got {n}"
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("sym_eig input has non-finite entries".into()));
    }

    let mut a = s.symmetrized();
    let mut v = Mat::identity(n);
    let norm = s.frobenius_norm();
    let threshold = 1e-12 * norm;

    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.data[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a.data[p * n + p];
                let aqq = a.data[q * n + q];
                // rotation annihilating a[p][q]
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                for k in 0..n {
                    let akp = a.data[k * n + p];
                    let akq = a.data[k * n + q];
                    a.data[k * n + p] = c * akp - sn * akq;
                    a.data[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.data[p * n + k];
                    let aqk = a.data[q * n + k];
                    a.data[p * n + k] = c * apk - sn * aqk;
                    a.data[q * n + k] = sn * apk + c * aqk;
                }
                a.data[p * n + q] = 0.0;
                a.data[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v.data[k * n + p];
                    let vkq = v.data[k * n + q];
                    v.data[k * n + p] = c * vkp - sn * vkq;
                    v.data[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.data[i * n + i].total_cmp(&a.data[j * n + j]));
    let eigenvalues = order.iter().map(|&i| a.data[i * n + i]).collect();
    let mut eigenvectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors.data[row * n + col] = v.data[row * n + src];
        }
    }
    eigenvectors.symmetric = eigenvectors.is_exactly_symmetric();
    Ok(EigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a.data[i * n + j] * a.data[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Outcome of a definiteness test. `margin` is always reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Definiteness {
    pub holds: bool,
    pub margin: f64,
}

/// `S ⪯ 0` up to `tol`: holds iff `λ_max(S) ≤ tol`; margin is `λ_max(S)`.
pub fn is_neg_semidef(s: &Mat, tol: f64) -> Result<Definiteness> {
    let margin = sym_eig(s)?.max();
    Ok(Definiteness {
        holds: margin <= tol,
        margin,
    })
}

/// `S ≻ 0` with at least `tol` to spare: holds iff `λ_min(S) ≥ tol` and
/// `λ_min(S) > 0`; margin is `λ_min(S)`.
pub fn is_pos_def(s: &Mat, tol: f64) -> Result<Definiteness> {
    let margin = sym_eig(s)?.min();
    Ok(Definiteness {
        holds: margin >= tol && margin > 0.0,
        margin,
    })
}

/// Upper-triangular grid of square blocks, `blocks[s][l]` for `s ≤ l`.
///
/// Entries with `s > l` must be `None`; the lower triangle is produced by
/// transposition. Missing off-diagonal blocks are zero.
pub type BlockGrid = Vec<Vec<Option<Mat>>>;

/// Assembles a symmetric matrix from the upper triangle of a block grid.
pub fn block_assemble(blocks: &BlockGrid, n_blocks: usize) -> Result<Mat> {
    if blocks.len() != n_blocks || blocks.iter().any(|row| row.len() != n_blocks) {
        return Err(Error::Assembly(format!(
            "block grid must be {n_blocks}x{n_blocks}"
        )));
    }
    let bs = match blocks.first().and_then(|row| row.first()).and_then(Option::as_ref) {
        Some(b) => b.rows(),
        None if n_blocks == 0 => return Ok(Mat::zeros(0, 0)),
        None => return Err(Error::Assembly("missing diagonal block (0,0)".into())),
    };
    let mut out = Mat::zeros(bs * n_blocks, bs * n_blocks);
    for (s, row) in blocks.iter().enumerate() {
        for (l, block) in row.iter().enumerate() {
            match block {
                None if s == l => {
                    return Err(Error::Assembly(format!("missing diagonal block ({s},{l})")))
                }
                None => {}
                Some(_) if s > l => {
                    return Err(Error::Assembly(format!(
                        "block ({s},{l}) lies below the diagonal; supply its transpose at ({l},{s})"
                    )))
                }
                Some(b) => {
                    if b.rows() != bs || b.cols() != bs {
                        return Err(Error::Assembly(format!(
                            "block ({s},{l}) is {}x{}, expected {bs}x{bs}",
                            b.rows(),
                            b.cols()
                        )));
                    }
                    out.set_block(s * bs, l * bs, b);
                    if s != l {
                        out.set_block(l * bs, s * bs, &b.transpose());
                    }
                }
            }
        }
    }
    Ok(out.symmetrized())
}
