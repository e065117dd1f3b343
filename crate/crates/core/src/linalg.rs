//! Dense kernels shared by the synthesis pipeline and the oracle.
//!
//! Matrices are `faer::Mat<f64>` (column-major), vectors are `faer::Col<f64>`.
//! Every rank decision goes through [`Spectral`], a thresholded singular value
//! decomposition, so the null-space bases, pseudo-inverse solves and
//! certificate ranks across the crate agree on what "zero" means.

use faer::{Col, ColRef, Mat, MatRef};

use crate::error::{Result, SlsError};

pub type DenseMatrix = Mat<f64>;
pub type Vector = Col<f64>;

/// Numerical thresholds used for rank decisions and feasibility checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    rank_tol: f64,
    residual_tol: f64,
}

impl Tolerance {
    pub fn new(rank_tol: f64, residual_tol: f64) -> Result<Self> {
        if !(rank_tol > 0.0 && rank_tol < 1.0) {
            return Err(SlsError::Domain(format!(
                "rank_tol must lie in (0, 1), got {rank_tol}"
            )));
        }
        if !(residual_tol > 0.0 && residual_tol.is_finite()) {
            return Err(SlsError::Domain(format!(
                "residual_tol must be positive, got {residual_tol}"
            )));
        }
        Ok(Self {
            rank_tol,
            residual_tol,
        })
    }

    /// Singular values at or below `rank_tol * sigma_max` count as zero.
    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Absolute threshold for residuals and row norms.
    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            residual_tol: 1e-9,
        }
    }
}

/// Column-major stacking.
pub fn vec(m: MatRef<'_, f64>) -> Vector {
    let rows = m.nrows();
    Col::from_fn(rows * m.ncols(), |k| m[(k % rows, k / rows)])
}

/// Inverse of [`vec`].
pub fn unvec(v: ColRef<'_, f64>, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.nrows() != rows * cols {
        return Err(SlsError::dim(format!(
            "cannot reshape a vector of length {} into {rows}x{cols}",
            v.nrows()
        )));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

pub fn kron(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> DenseMatrix {
    a.kron(b)
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

pub fn all_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

/// Stacks blocks top to bottom. All blocks must share a column count.
pub fn vstack(blocks: &[MatRef<'_, f64>]) -> Result<DenseMatrix> {
    let cols = match blocks.first() {
        Some(b) => b.ncols(),
        None => return Ok(Mat::zeros(0, 0)),
    };
    if let Some(bad) = blocks.iter().find(|b| b.ncols() != cols) {
        return Err(SlsError::dim(format!(
            "vstack: expected {cols} columns, found {}",
            bad.ncols()
        )));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.as_mut()
            .submatrix_mut(r0, 0, b.nrows(), cols)
            .copy_from(b);
        r0 += b.nrows();
    }
    Ok(out)
}

/// Places blocks left to right. All blocks must share a row count.
pub fn hstack(blocks: &[MatRef<'_, f64>]) -> Result<DenseMatrix> {
    let rows = match blocks.first() {
        Some(b) => b.nrows(),
        None => return Ok(Mat::zeros(0, 0)),
    };
    if let Some(bad) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(SlsError::dim(format!(
            "hstack: expected {rows} rows, found {}",
            bad.nrows()
        )));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.as_mut()
            .submatrix_mut(0, c0, rows, b.ncols())
            .copy_from(b);
        c0 += b.ncols();
    }
    Ok(out)
}

/// Thresholded singular value decomposition.
///
/// `v` is always square (`ncols x ncols`) so that its trailing columns span
/// the numerical null space; `u` holds only the left vectors paired with
/// retained singular values.
pub struct Spectral {
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
    v_null: DenseMatrix,
    threshold: f64,
}

impl Spectral {
    /// Rank is decided relative to the largest singular value.
    pub fn new(m: MatRef<'_, f64>, tol: &Tolerance) -> Result<Self> {
        Self::with_scale(m, 0.0, tol)
    }

    /// Rank is decided relative to `max(sigma_max, scale)`. Passing the norm
    /// of the factors that produced `m` keeps pure roundoff from being
    /// counted as rank when `m` is numerically zero.
    pub fn with_scale(m: MatRef<'_, f64>, scale: f64, tol: &Tolerance) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Ok(Self {
                u: Mat::zeros(rows, 0),
                sigma: Vec::new(),
                v: Mat::zeros(cols, 0),
                v_null: Mat::identity(cols, cols),
                threshold: 0.0,
            });
        }
        if !all_finite(m) {
            return Err(SlsError::Numerical(
                "non-finite entry in matrix passed to SVD".into(),
            ));
        }
        let svd = if rows >= cols { m.thin_svd() } else { m.svd() }
            .map_err(|e| SlsError::Numerical(format!("SVD failed: {e:?}")))?;
        let s = svd.S().column_vector();
        let n_sigma = s.nrows();
        let sigma_max = (0..n_sigma).map(|i| s[i]).fold(0.0_f64, f64::max);
        let threshold = tol.rank_tol() * sigma_max.max(scale);

        let keep: Vec<usize> = (0..n_sigma).filter(|&i| s[i] > threshold).collect();
        let drop: Vec<usize> = (0..cols).filter(|i| !keep.contains(i)).collect();
        let u_all = svd.U();
        let v_all = svd.V();
        let u = Mat::from_fn(rows, keep.len(), |i, k| u_all[(i, keep[k])]);
        let v = Mat::from_fn(cols, keep.len(), |i, k| v_all[(i, keep[k])]);
        let v_null = Mat::from_fn(cols, drop.len(), |i, k| v_all[(i, drop[k])]);
        Ok(Self {
            u,
            sigma: keep.iter().map(|&i| s[i]).collect(),
            v,
            v_null,
            threshold,
        })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Retained singular values, in decomposition order.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Orthonormal basis of the numerical null space.
    pub fn null_basis(&self) -> DenseMatrix {
        self.v_null.clone()
    }

    /// Orthonormal basis of the numerical column space.
    pub fn range_basis(&self) -> DenseMatrix {
        self.u.clone()
    }

    /// Orthonormal basis of the numerical row space (as columns).
    pub fn row_space_basis(&self) -> DenseMatrix {
        self.v.clone()
    }

    /// Computes `pinv(M) * z` as `V_r diag(1/sigma_r) U_r^T z`.
    pub fn pinv_apply(&self, z: MatRef<'_, f64>) -> DenseMatrix {
        let mut coeff = self.u.transpose() * z;
        for (k, &s) in self.sigma.iter().enumerate() {
            let inv = 1.0 / s;
            for j in 0..coeff.ncols() {
                coeff[(k, j)] *= inv;
            }
        }
        &self.v * &coeff
    }

    /// Component of `z` outside the numerical range: `(I - U_r U_r^T) z`.
    pub fn range_residual(&self, z: MatRef<'_, f64>) -> DenseMatrix {
        let proj = &self.u * (self.u.transpose() * z);
        z - &proj
    }
}

/// Orthonormal basis of `{v : psi v = 0}`; a matrix with zero columns when
/// the kernel is trivial.
pub fn null_space_basis(psi: MatRef<'_, f64>, tol: &Tolerance) -> Result<DenseMatrix> {
    Ok(Spectral::new(psi, tol)?.null_basis())
}

/// Minimum-Frobenius-norm minimizer of `||gamma M - z||_F`, i.e. `pinv(gamma) z`.
pub fn min_norm_least_squares(
    gamma: MatRef<'_, f64>,
    z: MatRef<'_, f64>,
    tol: &Tolerance,
) -> Result<DenseMatrix> {
    if gamma.nrows() != z.nrows() {
        return Err(SlsError::dim(format!(
            "least squares: operator has {} rows but right-hand side has {}",
            gamma.nrows(),
            z.nrows()
        )));
    }
    Ok(Spectral::new(gamma, tol)?.pinv_apply(z))
}

/// Drops rows with norm at or below `residual_tol` and scales the rest to
/// unit Euclidean norm. A 0-row result is the trivial constraint.
pub fn normalize_nonzero_rows(psi: MatRef<'_, f64>, tol: &Tolerance) -> DenseMatrix {
    let norms: Vec<f64> = (0..psi.nrows()).map(|i| psi.row(i).norm_l2()).collect();
    let kept: Vec<usize> = (0..psi.nrows())
        .filter(|&i| norms[i] > tol.residual_tol())
        .collect();
    Mat::from_fn(kept.len(), psi.ncols(), |k, j| {
        let i = kept[k];
        psi[(i, j)] / norms[i]
    })
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: MatRef<'_, f64>, tol: &Tolerance) -> Result<DenseMatrix> {
    Ok(Spectral::new(m, tol)?.range_basis())
}

/// Symmetric distance between the column spans of `a` and `b`, both assumed
/// to have orthonormal columns: the larger of `||(I - P_b) a||` and
/// `||(I - P_a) b||`.
pub fn subspace_distance(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return f64::INFINITY;
    }
    let resid = |x: MatRef<'_, f64>, y: MatRef<'_, f64>| {
        let proj = y * (y.transpose() * x);
        (x - &proj).norm_l2()
    };
    resid(a, b).max(resid(b, a))
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> DenseMatrix {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// `a^T m a` with the result symmetrized.
pub fn congruence(a: MatRef<'_, f64>, m: MatRef<'_, f64>) -> DenseMatrix {
    let ma = m * a;
    symmetrize((a.transpose() * &ma).as_ref())
}
