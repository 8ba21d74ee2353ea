//! Dense kernel-space linear algebra.
//!
//! Every projector here is evaluated through the Gram form
//! `P_A v = Aᵀ (A Aᵀ)⁻¹ A v`; the `p × p` projector is never materialized,
//! which keeps NTK feature spaces (`p = k·d`) tractable.
//!
//! "Invertible" always means: the smallest eigenvalue of `A Aᵀ` exceeds
//! `1e-10 · max(N, p) · λ_max`. Below that a [`LinalgError::SingularGram`] is
//! returned; nothing in this module regularizes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Row-major indexed dense matrix, `m[(i, j)]` is row `i`, column `j`.
pub type DenseMatrix = DMatrix<f64>;

const RANK_TOLERANCE_FACTOR: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("singular Gram matrix: smallest eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    SingularGram { min_eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// `ε = 1e-10 · max(rows, cols) · λ_max`.
pub fn rank_tolerance(rows: usize, cols: usize, max_eigenvalue: f64) -> f64 {
    RANK_TOLERANCE_FACTOR * rows.max(cols) as f64 * max_eigenvalue.max(0.0)
}

/// `A Aᵀ`, symmetrized so that `result[(i, j)] == result[(j, i)]` bit for bit.
pub fn gram(a: &DenseMatrix) -> DenseMatrix {
    let mut k = a * a.transpose();
    symmetrize(&mut k);
    k
}

pub(crate) fn symmetrize(k: &mut DenseMatrix) {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
}

/// Copy of `a` with row `i` removed.
pub fn remove_row(a: &DenseMatrix, i: usize) -> DenseMatrix {
    a.clone().remove_row(i)
}

fn relative_asymmetry(k: &DenseMatrix) -> f64 {
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..k.nrows() {
        for j in (i + 1)..k.ncols() {
            worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Smallest eigenvalue of a symmetric matrix, from a full dense
/// eigendecomposition.
pub fn min_eigenvalue(k: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(eigen_extremes(k)?.0)
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn eigen_extremes(k: &DenseMatrix) -> Result<(f64, f64), LinalgError> {
    if k.nrows() != k.ncols() {
        return Err(LinalgError::DimensionMismatch {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if k.nrows() == 0 {
        return Ok((0.0, 0.0));
    }
    let asymmetry = relative_asymmetry(k);
    if asymmetry > SYMMETRY_TOLERANCE {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    let mut sym = k.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Cholesky factorization of a kernel matrix together with its spectrum
/// extremes. Solves apply one pass of iterative refinement.
#[derive(Debug, Clone)]
pub struct KernelSolveCache {
    kernel: DenseMatrix,
    chol: Option<Cholesky<f64, Dyn>>,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    tolerance: f64,
}

impl KernelSolveCache {
    /// Factorizes `kernel = Φ Φᵀ`, where `inner_dim` is the feature dimension
    /// `p` of `Φ` (it enters the rank tolerance). A `0 × 0` kernel is accepted
    /// and behaves as the empty system.
    pub fn new(kernel: &DenseMatrix, inner_dim: usize) -> Result<Self, LinalgError> {
        let n = kernel.nrows();
        let (lo, hi) = eigen_extremes(kernel)?;
        let tolerance = rank_tolerance(n, inner_dim, hi);
        if n == 0 {
            return Ok(Self {
                kernel: kernel.clone(),
                chol: None,
                min_eigenvalue: 0.0,
                max_eigenvalue: 0.0,
                tolerance,
            });
        }
        if !(lo > tolerance) {
            return Err(LinalgError::SingularGram {
                min_eigenvalue: lo,
                tolerance,
            });
        }
        let mut sym = kernel.clone();
        symmetrize(&mut sym);
        let chol = Cholesky::new(sym.clone()).ok_or(LinalgError::SingularGram {
            min_eigenvalue: lo,
            tolerance,
        })?;
        Ok(Self {
            kernel: sym,
            chol: Some(chol),
            min_eigenvalue: lo.max(0.0),
            max_eigenvalue: hi,
            tolerance,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn kernel(&self) -> &DenseMatrix {
        &self.kernel
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn condition_estimate(&self) -> f64 {
        if self.min_eigenvalue > 0.0 {
            self.max_eigenvalue / self.min_eigenvalue
        } else {
            f64::INFINITY
        }
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K` (empty for the empty system).
    pub fn factor(&self) -> DenseMatrix {
        match &self.chol {
            Some(c) => c.l(),
            None => DenseMatrix::zeros(0, 0),
        }
    }

    /// `K⁻¹ b` with one refinement step.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.dim(), "right-hand side length");
        let Some(chol) = &self.chol else {
            return DVector::zeros(0);
        };
        let mut x = chol.solve(b);
        let r = b - &self.kernel * &x;
        x += chol.solve(&r);
        x
    }

    /// `K⁻¹ B` column by column, with one refinement step.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.nrows(), self.dim(), "right-hand side rows");
        let Some(chol) = &self.chol else {
            return DenseMatrix::zeros(0, b.ncols());
        };
        let mut x = chol.solve(b);
        let r = b - &self.kernel * &x;
        x += chol.solve(&r);
        x
    }

    /// Diagonal of `K⁻¹`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        let n = self.dim();
        let inv = self.solve_matrix(&DenseMatrix::identity(n, n));
        DVector::from_iterator(n, (0..n).map(|i| inv[(i, i)]))
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), LinalgError> {
    if expected != got {
        return Err(LinalgError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `P_A v = Aᵀ (A Aᵀ)⁻¹ A v`.
pub fn project_rowspace(a: &DenseMatrix, v: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    check_len(a.ncols(), v.len())?;
    let cache = KernelSolveCache::new(&gram(a), a.ncols())?;
    Ok(project_with(a, &cache, v))
}

pub(crate) fn project_with(a: &DenseMatrix, cache: &KernelSolveCache, v: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(v.len());
    }
    let av = a * v;
    a.transpose() * cache.solve(&av)
}

/// `P⊥_A v = v − P_A v`.
pub fn residual_projection(a: &DenseMatrix, v: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    Ok(v - project_rowspace(a, v)?)
}

/// Both sides of the Gram–Schmidt update of a row-space projector:
/// `P_Φ v` and `P_{Φ₋₁} v + u (uᵀ v) / ‖u‖²` with `u = P⊥_{Φ₋₁} φ₁`,
/// where `φ₁` is the first row of `Φ`.
pub fn gram_schmidt_projector_update(
    phi: &DenseMatrix,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), LinalgError> {
    check_len(phi.ncols(), v.len())?;
    let lhs = project_rowspace(phi, v)?;
    let rest = remove_row(phi, 0);
    let first: DVector<f64> = phi.row(0).transpose();
    let rest_cache = KernelSolveCache::new(&gram(&rest), rest.ncols())?;
    let u = &first - project_with(&rest, &rest_cache, &first);
    let rhs = project_with(&rest, &rest_cache, v) + &u * (u.dot(v) / u.norm_squared());
    Ok((lhs, rhs))
}

/// Both sides of the leave-one-out identity `P_{A₋₁} A⁺ v = A₋₁⁺ v₋₁`,
/// with `A⁺ = Aᵀ (A Aᵀ)⁻¹` and `v ∈ ℝᴺ`.
pub fn leave_one_out_project(
    a: &DenseMatrix,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), LinalgError> {
    check_len(a.nrows(), v.len())?;
    let full = KernelSolveCache::new(&gram(a), a.ncols())?;
    let rest = remove_row(a, 0);
    let rest_cache = KernelSolveCache::new(&gram(&rest), rest.ncols())?;

    let pinv_v = a.transpose() * full.solve(v);
    let lhs = project_with(&rest, &rest_cache, &pinv_v);

    let tail = v.rows(1, v.len() - 1).into_owned();
    let rhs = if rest.nrows() == 0 {
        DVector::zeros(a.ncols())
    } else {
        rest.transpose() * rest_cache.solve(&tail)
    };
    Ok((lhs, rhs))
}
