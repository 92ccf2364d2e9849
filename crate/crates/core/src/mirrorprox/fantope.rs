//! Points of the Fantope `F^k = {M : 0 ⪯ M ⪯ I, tr M = k}` and the entropic
//! mirror step over it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{log_spectrum_of, recompose, sym_eig, symmetrize, EigenPairs};

const EIGEN_TOL: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-10;

const WATERFILL_TOL: f64 = 1e-10;
const WATERFILL_MAX_ITER: usize = 200;
const BRACKET_MAX_EXPANSIONS: usize = 64;

/// A symmetric matrix with eigenvalues in `[0, 1]` and trace `k`.
///
/// Iterates produced by the mirror step carry their eigendecomposition, so
/// the next step can take the matrix logarithm without decomposing again.
#[derive(Debug, Clone)]
pub struct FantopePoint {
    matrix: DMatrix<f64>,
    rank: usize,
    spectrum: Option<EigenPairs>,
}

impl PartialEq for FantopePoint {
    fn eq(&self, other: &Self) -> bool {
        self.rank == other.rank && self.matrix == other.matrix
    }
}

impl FantopePoint {
    /// `(k/d)·I`, the center of the Fantope.
    pub fn uniform(dim: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::InvalidRank { k: rank, dim });
        }
        let level = rank as f64 / dim as f64;
        Ok(FantopePoint {
            matrix: DMatrix::identity(dim, dim) * level,
            rank,
            spectrum: Some(EigenPairs {
                values: DVector::from_element(dim, level),
                vectors: DMatrix::identity(dim, dim),
            }),
        })
    }

    /// Validates `matrix` against the Fantope constraints.
    pub fn from_matrix(matrix: DMatrix<f64>, rank: usize) -> Result<Self> {
        let d = matrix.nrows();
        if rank == 0 || rank > d {
            return Err(Error::InvalidRank { k: rank, dim: d });
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidMatrix(format!(
                "Fantope point is not symmetric (max |M − Mᵀ| = {asym:.3e})"
            )));
        }
        let matrix = symmetrize(&matrix);
        let spectrum = sym_eig(&matrix)?;
        let point = FantopePoint {
            matrix,
            rank,
            spectrum: Some(spectrum),
        };
        point.check()?;
        Ok(point)
    }

    /// `Σ_j ξ_j u_j u_jᵀ` from eigenvalues `ξ` (sorted non-increasing) and
    /// orthonormal columns `u_j`.
    pub(crate) fn from_spectrum(values: DVector<f64>, vectors: DMatrix<f64>, rank: usize) -> Self {
        let matrix = recompose(&vectors, &values);
        FantopePoint {
            matrix,
            rank,
            spectrum: Some(EigenPairs { values, vectors }),
        }
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

    /// The eigendecomposition, computing it if it is not cached.
    pub fn spectrum(&self) -> Result<std::borrow::Cow<'_, EigenPairs>> {
        match &self.spectrum {
            Some(s) => Ok(std::borrow::Cow::Borrowed(s)),
            None => Ok(std::borrow::Cow::Owned(sym_eig(&self.matrix)?)),
        }
    }

    /// `log M` with eigenvalues floored at `floor`.
    pub fn log_matrix(&self, floor: f64) -> Result<DMatrix<f64>> {
        Ok(log_spectrum_of(&*self.spectrum()?, floor))
    }

    /// Checks eigenvalues in `[−1e-8, 1+1e-8]`, trace within `1e-6` of `k`
    /// and symmetry within `1e-10`.
    pub fn check(&self) -> Result<()> {
        let spectrum = self.spectrum()?;
        let max = spectrum.values[0];
        let min = spectrum.values[spectrum.dim() - 1];
        if min < -EIGEN_TOL || max > 1.0 + EIGEN_TOL {
            return Err(Error::InvalidMatrix(format!(
                "Fantope eigenvalues outside [0, 1]: [{min:.3e}, {max:.12}]"
            )));
        }
        let tr = self.matrix.trace();
        if (tr - self.rank as f64).abs() > TRACE_TOL {
            return Err(Error::InvalidMatrix(format!(
                "Fantope trace {tr} differs from k = {}",
                self.rank
            )));
        }
        let asym = (&self.matrix - self.matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidMatrix(format!(
                "Fantope point asymmetric by {asym:.3e}"
            )));
        }
        Ok(())
    }
}

fn clipped_sum(lambda: &[f64], nu: f64) -> f64 {
    lambda.iter().map(|&l| (l + nu).exp().min(1.0)).sum()
}

/// Solves `Σ_j min{exp(λ_j + ν), 1} = k` for `ν` and returns `(ν, ξ)` with
/// `ξ_j = min{exp(λ_j + ν), 1}`.
///
/// The left side is continuous and non-decreasing in `ν`, strictly increasing
/// while any coordinate is unclipped, and ranges over `(0, d)`. Bisection
/// locates the clip set; ν is then refined in closed form on that set.
pub fn waterfill_nu(lambda: &[f64], k: usize) -> Result<(f64, Vec<f64>)> {
    let d = lambda.len();
    if k == 0 || k >= d {
        return Err(Error::InvalidArgument(format!(
            "water-filling needs 1 <= k < d, got k = {k}, d = {d}"
        )));
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue in water-filling".into()));
    }
    let target = k as f64;
    let max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);

    let mut lo = (target / d as f64).ln() - max - 1.0;
    let mut hi = -min + target.ln() + 1.0;
    let mut width = (hi - lo).max(1.0);
    let mut expansions = 0;
    while clipped_sum(lambda, lo) > target {
        lo -= width;
        width *= 2.0;
        expansions += 1;
        if expansions > BRACKET_MAX_EXPANSIONS {
            return Err(Error::Numerical("water-filling lower bracket failed".into()));
        }
    }
    while clipped_sum(lambda, hi) < target {
        hi += width;
        width *= 2.0;
        expansions += 1;
        if expansions > BRACKET_MAX_EXPANSIONS {
            return Err(Error::Numerical("water-filling upper bracket failed".into()));
        }
    }

    let mut nu = 0.5 * (lo + hi);
    for _ in 0..WATERFILL_MAX_ITER {
        nu = 0.5 * (lo + hi);
        let s = clipped_sum(lambda, nu);
        if (s - target).abs() <= WATERFILL_TOL {
            break;
        }
        if s > target {
            hi = nu;
        } else {
            lo = nu;
        }
    }

    if let Some(refined) = refine_nu(lambda, k, nu) {
        if (clipped_sum(lambda, refined) - target).abs()
            <= (clipped_sum(lambda, nu) - target).abs()
        {
            nu = refined;
        }
    }

    let xi: Vec<f64> = lambda.iter().map(|&l| (l + nu).exp().min(1.0)).collect();
    let err = (xi.iter().sum::<f64>() - target).abs();
    if !(err <= WATERFILL_TOL * (1.0 + target)) {
        return Err(Error::Numerical(format!(
            "water-filling residual {err:.3e} after bisection"
        )));
    }
    Ok((nu, xi))
}

/// Closed-form ν given the clip set implied by the bisection estimate:
/// `ν = log(k − |C|) − log Σ_{j∉C} exp(λ_j)`. Returns `None` when the clip
/// set is inconsistent with the refined value.
fn refine_nu(lambda: &[f64], k: usize, nu: f64) -> Option<f64> {
    let clipped = lambda.iter().filter(|&&l| l + nu >= 0.0).count();
    if clipped >= k {
        return None;
    }
    let free_max = lambda
        .iter()
        .filter(|&&l| l + nu < 0.0)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !free_max.is_finite() {
        return None;
    }
    let lse = free_max
        + lambda
            .iter()
            .filter(|&&l| l + nu < 0.0)
            .map(|&l| (l - free_max).exp())
            .sum::<f64>()
            .ln();
    let refined = ((k - clipped) as f64).ln() - lse;
    let consistent = lambda.iter().all(|&l| {
        let inside = l + nu >= 0.0;
        if inside {
            l + refined >= -1e-12
        } else {
            l + refined <= 1e-12
        }
    });
    consistent.then_some(refined)
}

/// One entropic mirror step on the Fantope:
/// eigendecompose `log M_base + η_M·G = U diag(λ) Uᵀ` and return
/// `Σ_j min{exp(λ_j + ν), 1} u_j u_jᵀ`.
pub fn fantope_mirror_update(
    base: &FantopePoint,
    grad: &DMatrix<f64>,
    eta_m: f64,
    log_floor: f64,
) -> Result<FantopePoint> {
    let d = base.dim();
    if grad.nrows() != d || grad.ncols() != d {
        return Err(Error::Shape(format!(
            "gradient is {}×{}, Fantope point is {d}×{d}",
            grad.nrows(),
            grad.ncols()
        )));
    }
    let k = base.rank();
    if k == d {
        return FantopePoint::uniform(d, k);
    }
    let dual = base.log_matrix(log_floor)? + grad * eta_m;
    let pairs = sym_eig(&dual)?;
    let (_, xi) = waterfill_nu(pairs.values.as_slice(), k)?;
    Ok(FantopePoint::from_spectrum(
        DVector::from_vec(xi),
        pairs.vectors,
        k,
    ))
}
