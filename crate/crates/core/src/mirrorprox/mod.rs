//! Mirror-Prox over `F^k × Δ^L` for the relaxed StablePCA saddle problem
//!
//! ```text
//! max_{M ∈ F^k} min_{ω ∈ Δ^L} Σ_l ω_l ⟨Σ̂⁽ˡ⁾, M⟩
//! ```
//!
//! Each iteration takes an entropic mirror step from `(Mᵗ, ωᵗ)` using the
//! gradients at `(Mᵗ, ωᵗ)` to reach the midpoint, then a second step from the
//! same base using the gradients at the midpoint. The midpoints are averaged,
//! the average is rounded to the nearest rank-k projector, and the loss from
//! rounding is reported as the certificate `τ`.

mod fantope;
mod simplex;
mod steps;

pub use fantope::{fantope_mirror_update, waterfill_nu, FantopePoint};
pub use simplex::{simplex_mirror_update, SimplexWeights};
pub use steps::{default_step_sizes, log_clamp, step_sizes_for, StepSizes, LOG_RATIO_FLOOR};

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{mixture, SecondMomentSet};
use crate::parallel::Execution;
use crate::spectral::{
    inner, projector_from_pairs, spectral_radius, sym_eig, ProjectionMatrix, DEFAULT_LOG_FLOOR,
};

/// Default eigengap threshold for the tightness flag.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

/// Work below this many matrix entries (`L·d²`) is not worth fanning out.
const PARALLEL_PAYOFF_THRESHOLD: usize = 1 << 15;

/// Knobs for [`solve`]. The defaults reproduce the fixed-horizon protocol.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Explicit step sizes; `None` derives them from the instance.
    pub steps: Option<StepSizes>,
    /// Multiplier applied to the derived (or explicit) steps.
    pub eta_scale: f64,
    /// Evaluate the duality gap of the running average every this many
    /// iterations. `None` means `max(1, T/50)`.
    pub gap_stride: Option<usize>,
    /// Stop once the monitored gap falls to this value.
    pub gap_tolerance: Option<f64>,
    pub log_floor: f64,
    /// Eigengap threshold for the tightness flag at `ω̂_T`.
    pub tight_tol: f64,
    /// Validate every iterate against the Fantope and simplex constraints.
    pub check_iterates: bool,
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            steps: None,
            eta_scale: 1.0,
            gap_stride: None,
            gap_tolerance: None,
            log_floor: DEFAULT_LOG_FLOOR,
            tight_tol: DEFAULT_GAP_TOL,
            check_iterates: cfg!(debug_assertions),
            exec: Execution::default(),
        }
    }
}

/// Which half of an iteration an observed iterate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Midpoint,
    Full,
}

/// An iterate handed to a solve observer.
#[derive(Debug, Clone, Copy)]
pub struct IterateView<'a> {
    pub iteration: usize,
    pub stage: Stage,
    pub m: &'a FantopePoint,
    pub omega: &'a SimplexWeights,
}

/// Everything [`solve`] produces.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Averaged midpoints `M̂_T`.
    pub m_avg: FantopePoint,
    /// Averaged midpoint weights `ω̂_T`.
    pub omega_avg: SimplexWeights,
    /// Nearest rank-k projector to `M̂_T`.
    pub p_rounded: ProjectionMatrix,
    /// `min_l ⟨Σ⁽ˡ⁾, M̂_T⟩ − min_l ⟨Σ⁽ˡ⁾, P̂_T⟩` on the solved matrices.
    pub tau: f64,
    /// `min_l ⟨Σ⁽ˡ⁾, M̂_T⟩` on the solved matrices.
    pub relaxed_value: f64,
    /// Duality gap of `(M̂_T, ω̂_T)`.
    pub gap: f64,
    /// `(iteration, gap of the running average)`, iterations counted from 1.
    pub gap_trace: Vec<(usize, f64)>,
    /// `⟨Σ̂⁽ˡ⁾, P̂_T⟩` per source on the reporting matrices.
    pub per_source_ev: Vec<f64>,
    pub worst_case_ev: f64,
    /// `λ_k − λ_{k+1}` of `Σ(ω̂_T)`.
    pub eigengap: f64,
    /// `eigengap > tight_tol`; always true when `k = d`.
    pub tight: bool,
    /// Steps actually used; `None` on the classical shortcut.
    pub steps: Option<StepSizes>,
    pub iterations: usize,
    /// True when the classical reduction answered without iterating.
    pub classical: bool,
    pub wall_time: Duration,
}

/// Solves the relaxed StablePCA problem for `m` with `T` iterations.
pub fn solve(m: &SecondMomentSet, k: usize, iterations: usize, opts: &SolveOptions) -> Result<SolveReport> {
    solve_observed(m.matrices(), m.matrices(), k, iterations, opts, &mut |_| {})
}

/// [`solve`] on arbitrary symmetric matrices, calling `observer` with every
/// midpoint and full iterate. `report` supplies the matrices for the
/// per-source explained variances (usually the same list).
pub fn solve_observed(
    matrices: &[DMatrix<f64>],
    report: &[DMatrix<f64>],
    k: usize,
    iterations: usize,
    opts: &SolveOptions,
    observer: &mut dyn FnMut(IterateView<'_>),
) -> Result<SolveReport> {
    let start = Instant::now();
    validate(matrices, report, k, iterations)?;
    let sources = matrices.len();
    let d = matrices[0].nrows();

    let identical = matrices.windows(2).all(|w| w[0] == w[1]);
    if sources == 1 || k == d || identical {
        return classical_solution(matrices, report, k, opts.tight_tol, start);
    }

    let steps = match opts.steps {
        Some(s) => s,
        None => {
            let mut rho = 0.0f64;
            for a in matrices {
                rho = rho.max(spectral_radius(a)?);
            }
            step_sizes_for(rho, sources, d, k)?
        }
    }
    .scaled(opts.eta_scale);

    let stride = opts.gap_stride.unwrap_or((iterations / 50).max(1)).max(1);
    let exec = if sources * d * d >= PARALLEL_PAYOFF_THRESHOLD {
        opts.exec
    } else {
        Execution::Sequential
    };
    let payoffs = |point: &FantopePoint| -> Vec<f64> {
        exec.map_slice(matrices, |a| inner(a, point.matrix()))
    };

    let mut m = FantopePoint::uniform(d, k)?;
    let mut omega = SimplexWeights::uniform(sources);
    let mut m_sum = DMatrix::<f64>::zeros(d, d);
    let mut omega_sum = vec![0.0; sources];
    let mut gap_trace = Vec::new();
    let mut done = 0;

    for t in 0..iterations {
        // Midpoint from gradients at (Mᵗ, ωᵗ).
        let grad_m = mixture(matrices, omega.as_slice());
        let pay = payoffs(&m);
        let m_half = fantope_mirror_update(&m, &grad_m, steps.eta_m, opts.log_floor)?;
        let omega_half = simplex_mirror_update(&omega, &pay, steps.eta_omega)?;
        if opts.check_iterates {
            check_iterate(&m_half, &omega_half, t, Stage::Midpoint)?;
        }
        observer(IterateView {
            iteration: t,
            stage: Stage::Midpoint,
            m: &m_half,
            omega: &omega_half,
        });

        // Full step from the same base with gradients at the midpoint.
        let grad_half = mixture(matrices, omega_half.as_slice());
        let pay_half = payoffs(&m_half);
        let m_next = fantope_mirror_update(&m, &grad_half, steps.eta_m, opts.log_floor)?;
        let omega_next = simplex_mirror_update(&omega, &pay_half, steps.eta_omega)?;
        if opts.check_iterates {
            check_iterate(&m_next, &omega_next, t, Stage::Full)?;
        }
        observer(IterateView {
            iteration: t,
            stage: Stage::Full,
            m: &m_next,
            omega: &omega_next,
        });

        m_sum += m_half.matrix();
        for (s, w) in omega_sum.iter_mut().zip(omega_half.as_slice()) {
            *s += w;
        }
        m = m_next;
        omega = omega_next;
        done = t + 1;

        if done % stride == 0 || done == iterations {
            let avg_m = &m_sum / done as f64;
            let avg_w: Vec<f64> = omega_sum.iter().map(|s| s / done as f64).collect();
            let gap = gap_of(matrices, &avg_m, &avg_w, k)?;
            gap_trace.push((done, gap));
            if opts.gap_tolerance.is_some_and(|tol| gap <= tol) {
                break;
            }
        }
    }

    let m_avg = FantopePoint::from_matrix(m_sum / done as f64, k)?;
    let omega_avg = SimplexWeights::normalized(omega_sum)?;
    let p_rounded = projector_from_pairs(&*m_avg.spectrum()?, k)?;
    finish(
        matrices,
        report,
        k,
        Finished {
            m_avg,
            omega_avg,
            p_rounded,
            gap_trace,
            steps: Some(steps),
            iterations: done,
            classical: false,
            tight_tol: opts.tight_tol,
            start,
        },
    )
}

fn validate(matrices: &[DMatrix<f64>], report: &[DMatrix<f64>], k: usize, iterations: usize) -> Result<()> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iteration count T must be at least 1".into()));
    }
    if matrices.is_empty() {
        return Err(Error::Shape("no source matrices".into()));
    }
    if report.len() != matrices.len() {
        return Err(Error::Shape("reporting matrices do not match sources".into()));
    }
    let d = matrices[0].nrows();
    if matrices
        .iter()
        .chain(report)
        .any(|a| a.nrows() != d || a.ncols() != d)
    {
        return Err(Error::Shape(format!("all matrices must be {d}×{d}")));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, dim: d });
    }
    Ok(())
}

fn check_iterate(m: &FantopePoint, omega: &SimplexWeights, t: usize, stage: Stage) -> Result<()> {
    m.check()
        .and_then(|_| omega.check())
        .map_err(|e| Error::Numerical(format!("iterate {t} ({stage:?}) left the feasible set: {e}")))
}

struct Finished {
    m_avg: FantopePoint,
    omega_avg: SimplexWeights,
    p_rounded: ProjectionMatrix,
    gap_trace: Vec<(usize, f64)>,
    steps: Option<StepSizes>,
    iterations: usize,
    classical: bool,
    tight_tol: f64,
    start: Instant,
}

fn finish(matrices: &[DMatrix<f64>], report: &[DMatrix<f64>], k: usize, f: Finished) -> Result<SolveReport> {
    let relaxed_value = worst_payoff(matrices, f.m_avg.matrix());
    let rounded_value = worst_payoff(matrices, f.p_rounded.matrix());
    let per_source_ev: Vec<f64> = report.iter().map(|a| inner(a, f.p_rounded.matrix())).collect();
    let worst_case_ev = per_source_ev.iter().copied().fold(f64::INFINITY, f64::min);
    let eigengap = tightness_gap(matrices, f.omega_avg.as_slice(), k)?;
    let tight = k == matrices[0].nrows() || eigengap > f.tight_tol;
    // The classical reduction is an exact saddle point.
    let gap = if f.classical {
        0.0
    } else {
        gap_of(matrices, f.m_avg.matrix(), f.omega_avg.as_slice(), k)?
    };
    Ok(SolveReport {
        tau: relaxed_value - rounded_value,
        relaxed_value,
        gap,
        gap_trace: f.gap_trace,
        per_source_ev,
        worst_case_ev,
        eigengap,
        tight,
        steps: f.steps,
        iterations: f.iterations,
        classical: f.classical,
        m_avg: f.m_avg,
        omega_avg: f.omega_avg,
        p_rounded: f.p_rounded,
        wall_time: f.start.elapsed(),
    })
}

fn tightness_gap(matrices: &[DMatrix<f64>], omega: &[f64], k: usize) -> Result<f64> {
    Ok(sym_eig(&mixture(matrices, omega))?.gap_after(k))
}

/// Exact answer when the minimax collapses to classical PCA: one source,
/// identical sources, or `k = d`.
fn classical_solution(
    matrices: &[DMatrix<f64>],
    report: &[DMatrix<f64>],
    k: usize,
    tight_tol: f64,
    start: Instant,
) -> Result<SolveReport> {
    let sources = matrices.len();
    let d = matrices[0].nrows();
    let omega = if k == d && sources > 1 {
        // With M = I the adversary picks the smallest trace.
        let mut best = 0;
        for (l, a) in matrices.iter().enumerate() {
            if a.trace() < matrices[best].trace() {
                best = l;
            }
        }
        SimplexWeights::vertex(sources, best)
    } else {
        SimplexWeights::uniform(sources)
    };
    let pairs = sym_eig(&matrices[0])?;
    let p = projector_from_pairs(&pairs, k)?;
    let m_avg = FantopePoint::from_matrix(p.matrix().clone(), k)?;
    finish(
        matrices,
        report,
        k,
        Finished {
            m_avg,
            omega_avg: omega,
            p_rounded: p,
            gap_trace: vec![(0, 0.0)],
            steps: None,
            iterations: 0,
            classical: true,
            tight_tol,
            start,
        },
    )
}

fn worst_payoff(matrices: &[DMatrix<f64>], m: &DMatrix<f64>) -> f64 {
    matrices
        .iter()
        .map(|a| inner(a, m))
        .fold(f64::INFINITY, f64::min)
}

fn gap_of(matrices: &[DMatrix<f64>], m: &DMatrix<f64>, omega: &[f64], k: usize) -> Result<f64> {
    let top = sym_eig(&mixture(matrices, omega))?.top_sum(k);
    Ok(top - worst_payoff(matrices, m))
}

/// Rounding loss `min_l ⟨Σ̂⁽ˡ⁾, M⟩ − min_l ⟨Σ̂⁽ˡ⁾, P⟩`. May be negative.
pub fn certificate(m: &SecondMomentSet, relaxed: &FantopePoint, rounded: &ProjectionMatrix) -> Result<f64> {
    check_dim(m, relaxed.dim())?;
    check_dim(m, rounded.dim())?;
    Ok(worst_payoff(m.matrices(), relaxed.matrix()) - worst_payoff(m.matrices(), rounded.matrix()))
}

/// `Σ_{i≤k} λ_i(Σ̂(ω)) − min_l ⟨Σ̂⁽ˡ⁾, M⟩`, nonnegative on `F^k × Δ^L`.
pub fn duality_gap(m: &SecondMomentSet, point: &FantopePoint, omega: &SimplexWeights, k: usize) -> Result<f64> {
    check_dim(m, point.dim())?;
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
    gap_of(m.matrices(), point.matrix(), omega.as_slice(), k)
}

fn check_dim(m: &SecondMomentSet, d: usize) -> Result<()> {
    if d != m.dim() {
        return Err(Error::Shape(format!("matrix dimension {d} does not match instance dimension {}", m.dim())));
    }
    Ok(())
}
