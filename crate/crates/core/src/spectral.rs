//! Dense symmetric spectral primitives.
//!
//! Every entry point symmetrizes its input as `(A + Aᵀ)/2` before
//! decomposing. Eigenvalues are reported in non-increasing order; exact ties
//! keep the order in which the backend produced them, which for diagonal
//! input is the coordinate order. That rule makes rounding deterministic on
//! degenerate spectra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default floor applied to eigenvalues before taking logarithms.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;

/// Eigenvalues sorted non-increasing, with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let weights: DVector<f64> = self.values.map(f);
        recompose(&self.vectors, &weights)
    }

    pub fn recompose(&self) -> DMatrix<f64> {
        self.recompose_with(|v| v)
    }

    /// Sum of the `k` largest eigenvalues.
    pub fn top_sum(&self, k: usize) -> f64 {
        self.values.iter().take(k).sum()
    }

    /// `λ_k − λ_{k+1}` (1-based), or `λ_k` itself when `k = d`.
    pub fn gap_after(&self, k: usize) -> f64 {
        let d = self.dim();
        if k == 0 || k > d {
            return 0.0;
        }
        if k == d {
            return self.values[k - 1];
        }
        self.values[k - 1] - self.values[k]
    }
}

/// A rank-k orthogonal projector `P = V Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    matrix: DMatrix<f64>,
    rank: usize,
}

impl ProjectionMatrix {
    /// Builds `V Vᵀ` from a `d × k` matrix with orthonormal columns.
    pub fn from_orthonormal(basis: &DMatrix<f64>) -> Self {
        let matrix = symmetrize(&(basis * basis.transpose()));
        ProjectionMatrix {
            matrix,
            rank: basis.ncols(),
        }
    }

    /// Wraps an existing matrix, checking idempotence, symmetry and trace.
    pub fn from_matrix(matrix: DMatrix<f64>, tol: f64) -> Result<Self> {
        check_square(&matrix)?;
        let p = symmetrize(&matrix);
        let resid = (&p * &p - &p).norm();
        if resid > tol {
            return Err(Error::InvalidMatrix(format!(
                "not idempotent: ‖P² − P‖_F = {resid:.3e}"
            )));
        }
        let tr = p.trace();
        let rank = tr.round();
        if (tr - rank).abs() > tol || rank < 0.0 {
            return Err(Error::InvalidMatrix(format!(
                "trace {tr} is not an integer rank"
            )));
        }
        Ok(ProjectionMatrix {
            matrix: p,
            rank: rank as usize,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Frobenius inner product `⟨A, B⟩ = Σ a_ij b_ij`.
#[inline]
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// `V · diag(w) · Vᵀ`, symmetrized.
pub fn recompose(vectors: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights.iter()) {
        col *= w;
    }
    symmetrize(&(scaled * vectors.transpose()))
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidMatrix(format!(
            "expected a non-empty square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_rank(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::InvalidRank { k, dim });
    }
    Ok(())
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let d = a.nrows();
    (0..d).all(|j| (0..d).all(|i| i == j || a[(i, j)] == 0.0))
}

/// Eigendecomposition of the symmetric part of `a`.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenPairs> {
    check_square(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let sym = symmetrize(a);
    let d = sym.nrows();

    let (raw_values, raw_vectors) = if is_diagonal(&sym) {
        (sym.diagonal(), DMatrix::identity(d, d))
    } else {
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues, eig.eigenvectors)
    };

    // Stable sort: exact ties keep backend order.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| raw_values[j].total_cmp(&raw_values[i]));

    let values = DVector::from_iterator(d, order.iter().map(|&i| raw_values[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = raw_vectors.column(src).into_owned();
        // Sign convention: the largest-magnitude entry (first on ties) is positive.
        let mut pivot = 0;
        for i in 1..d {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenPairs { values, vectors })
}

/// Projector onto the span of the leading `k` eigenvectors in `pairs`.
pub fn projector_from_pairs(pairs: &EigenPairs, k: usize) -> Result<ProjectionMatrix> {
    check_rank(k, pairs.dim())?;
    let basis = pairs.vectors.columns(0, k).into_owned();
    Ok(ProjectionMatrix::from_orthonormal(&basis))
}

/// Nearest rank-k projector to `a`: `V_k V_kᵀ` over the top-k eigenvectors.
pub fn top_k_projector(a: &DMatrix<f64>, k: usize) -> Result<ProjectionMatrix> {
    check_square(a)?;
    check_rank(k, a.nrows())?;
    projector_from_pairs(&sym_eig(a)?, k)
}

/// Largest eigenvalue; the operator norm for PSD input.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eig(a)?.values[0])
}

/// Largest absolute eigenvalue; the operator norm of an indefinite matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    let values = sym_eig(a)?.values;
    Ok(values[0].abs().max(values[values.len() - 1].abs()))
}

/// Sum of the `k` largest eigenvalues.
pub fn ky_fan_value(a: &DMatrix<f64>, k: usize) -> Result<f64> {
    check_square(a)?;
    check_rank(k, a.nrows())?;
    Ok(sym_eig(a)?.top_sum(k))
}

/// `U · diag(log max(λ_j, floor)) · Uᵀ`.
pub fn log_spectrum(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    Ok(log_spectrum_of(&sym_eig(m)?, floor))
}

/// Matrix logarithm from an existing decomposition.
pub fn log_spectrum_of(pairs: &EigenPairs, floor: f64) -> DMatrix<f64> {
    pairs.recompose_with(|v| v.max(floor).ln())
}
