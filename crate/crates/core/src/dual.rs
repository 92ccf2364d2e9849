//! The dual route: minimize `φ(ω) = Σ_{i≤k} λ_i(Σ̂(ω))` over the simplex by
//! entropic mirror descent with the Ky Fan subgradient, then check whether
//! the eigengap at the solution certifies that the Fantope relaxation is
//! exact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mirrorprox::{simplex_mirror_update, SimplexWeights, DEFAULT_GAP_TOL};
use crate::moments::{mixture, SecondMomentSet};
use crate::spectral::{inner, projector_from_pairs, sym_eig, EigenPairs, ProjectionMatrix};

/// Step rule for the mirror-descent iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualStep {
    /// The same `η` at every iteration.
    Constant(f64),
    /// `η_t = c / (ρ_max·√(t+1))`.
    InverseSqrt(f64),
}

impl DualStep {
    fn at(self, t: usize, rho: f64) -> f64 {
        match self {
            DualStep::Constant(eta) => eta,
            DualStep::InverseSqrt(c) => c / (rho * ((t + 1) as f64).sqrt()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualOptions {
    /// `None` selects [`default_dual_step`].
    pub step: Option<DualStep>,
    /// Eigengap threshold for the tightness flag. `None` selects
    /// [`default_dual_gap_tol`].
    pub gap_tol: Option<f64>,
    /// Record `φ(ωᵗ)` every this many iterations (`None`: `max(1, T/50)`).
    pub trace_stride: Option<usize>,
    pub check_iterates: bool,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            step: None,
            gap_tol: None,
            trace_stride: None,
            check_iterates: cfg!(debug_assertions),
        }
    }
}

/// Default step rule: `η_t = 2 / (ρ_max·√(t+1))`.
pub fn default_dual_step() -> DualStep {
    DualStep::InverseSqrt(2.0)
}

/// Default eigengap threshold after `T` dual iterations:
/// `max(1e-6, 2·ρ_max/√T)`. The averaged iterate of a subgradient method is
/// only resolved to `O(ρ_max/√T)`, so smaller gaps are indistinguishable from
/// a tie.
pub fn default_dual_gap_tol(rho_max: f64, iterations: usize) -> f64 {
    DEFAULT_GAP_TOL.max(2.0 * rho_max / (iterations.max(1) as f64).sqrt())
}

/// Eigengap test at a weight vector.
#[derive(Debug, Clone)]
pub struct Tightness {
    pub eigengap: f64,
    pub tight: bool,
    /// Top-k projector of `Σ̂(ω)`.
    pub candidate: ProjectionMatrix,
}

#[derive(Debug, Clone)]
pub struct DualReport {
    /// `ω̂_T = (1/T) Σ_{t<T} ωᵗ`.
    pub omega_avg: SimplexWeights,
    /// `(t, φ(ωᵗ))`.
    pub phi_trace: Vec<(usize, f64)>,
    pub phi_at_avg: f64,
    pub eigengap: f64,
    pub tight: bool,
    pub gap_tol: f64,
    pub m_candidate: ProjectionMatrix,
    pub step: DualStep,
    pub iterations: usize,
}

fn check_weights(m: &SecondMomentSet, omega: &SimplexWeights, k: usize) -> Result<()> {
    if omega.len() != m.count() {
        return Err(Error::Shape(format!(
            "{} weights for {} sources",
            omega.len(),
            m.count()
        )));
    }
    if k == 0 || k > m.dim() {
        return Err(Error::InvalidRank { k, dim: m.dim() });
    }
    Ok(())
}

/// `φ(ω)`: sum of the `k` largest eigenvalues of `Σ̂(ω)`.
pub fn phi(m: &SecondMomentSet, omega: &SimplexWeights, k: usize) -> Result<f64> {
    check_weights(m, omega, k)?;
    Ok(sym_eig(&m.mixture(omega.as_slice()))?.top_sum(k))
}

fn subgrad_from(matrices: &[DMatrix<f64>], pairs: &EigenPairs, k: usize) -> Vec<f64> {
    let basis = pairs.vectors.columns(0, k);
    matrices
        .iter()
        .map(|a| {
            let av = a * basis;
            inner(&av, &basis.into_owned())
        })
        .collect()
}

/// `g_l = ⟨Σ̂⁽ˡ⁾, V Vᵀ⟩` with `V` the top-k eigenvectors of `Σ̂(ω)`.
pub fn phi_subgrad(m: &SecondMomentSet, omega: &SimplexWeights, k: usize) -> Result<Vec<f64>> {
    check_weights(m, omega, k)?;
    let pairs = sym_eig(&m.mixture(omega.as_slice()))?;
    Ok(subgrad_from(m.matrices(), &pairs, k))
}

/// Eigengap `λ_k − λ_{k+1}` of `Σ̂(ω)` and the matching top-k projector.
pub fn tightness_check(
    m: &SecondMomentSet,
    omega: &SimplexWeights,
    k: usize,
    gap_tol: f64,
) -> Result<Tightness> {
    check_weights(m, omega, k)?;
    if !(gap_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("gap_tol must be positive, got {gap_tol}")));
    }
    let pairs = sym_eig(&m.mixture(omega.as_slice()))?;
    let eigengap = pairs.gap_after(k);
    Ok(Tightness {
        eigengap,
        tight: k == m.dim() || eigengap > gap_tol,
        candidate: projector_from_pairs(&pairs, k)?,
    })
}

/// Mirror descent on `φ` from the uniform weights; returns the averaged
/// iterate and its tightness diagnostics.
pub fn dual_solve(m: &SecondMomentSet, k: usize, iterations: usize, opts: &DualOptions) -> Result<DualReport> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iteration count T must be at least 1".into()));
    }
    if k == 0 || k > m.dim() {
        return Err(Error::InvalidRank { k, dim: m.dim() });
    }
    let rho = m.rho_max();
    let step = opts.step.unwrap_or_else(default_dual_step);
    let (DualStep::Constant(eta) | DualStep::InverseSqrt(eta)) = step;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("dual step must be positive, got {eta}")));
    }
    // An all-zero instance has φ ≡ 0; any weights are optimal.
    let rho_for_step = if rho > 0.0 { rho } else { 1.0 };
    let gap_tol = opts
        .gap_tol
        .unwrap_or_else(|| default_dual_gap_tol(rho, iterations));
    let stride = opts.trace_stride.unwrap_or((iterations / 50).max(1)).max(1);

    let sources = m.count();
    let mut omega = SimplexWeights::uniform(sources);
    let mut sum = vec![0.0; sources];
    let mut phi_trace = Vec::new();
    for t in 0..iterations {
        for (s, w) in sum.iter_mut().zip(omega.as_slice()) {
            *s += w;
        }
        let pairs = sym_eig(&m.mixture(omega.as_slice()))?;
        if t % stride == 0 || t + 1 == iterations {
            phi_trace.push((t, pairs.top_sum(k)));
        }
        let g = subgrad_from(m.matrices(), &pairs, k);
        omega = simplex_mirror_update(&omega, &g, step.at(t, rho_for_step))?;
        if opts.check_iterates {
            omega
                .check()
                .map_err(|e| Error::Numerical(format!("dual iterate {t} left the simplex: {e}")))?;
        }
    }

    let omega_avg = SimplexWeights::normalized(sum)?;
    let check = tightness_check(m, &omega_avg, k, gap_tol)?;
    let phi_at_avg = phi(m, &omega_avg, k)?;
    Ok(DualReport {
        omega_avg,
        phi_trace,
        phi_at_avg,
        eigengap: check.eigengap,
        tight: check.tight,
        gap_tol,
        m_candidate: check.candidate,
        step,
        iterations,
    })
}

/// `⟨Σ̂(ω), P⟩`.
pub fn mixture_payoff(m: &SecondMomentSet, omega: &SimplexWeights, p: &ProjectionMatrix) -> f64 {
    inner(&mixture(m.matrices(), omega.as_slice()), p.matrix())
}
