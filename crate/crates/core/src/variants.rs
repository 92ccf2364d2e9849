//! SquaredPCA and FairPCA as StablePCA on shifted matrices.
//!
//! Both variants subtract a per-source multiple of the identity: the full
//! trace over `k` for SquaredPCA (worst-case reconstruction error) and the
//! top-k eigenvalue sum over `k` for FairPCA (worst-case regret). On the
//! Fantope `⟨c·I, M⟩ = c·k`, so the shift turns each objective into an
//! explained-variance game on indefinite matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mirrorprox::{solve_observed, SolveOptions, SolveReport};
use crate::moments::SecondMomentSet;
use crate::spectral::{inner, sym_eig, ProjectionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum VariantKind {
    #[default]
    Stable,
    Squared,
    Fair,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [VariantKind::Stable, VariantKind::Squared, VariantKind::Fair];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Stable => "stable",
            VariantKind::Squared => "squared",
            VariantKind::Fair => "fair",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stable" => Ok(VariantKind::Stable),
            "squared" => Ok(VariantKind::Squared),
            "fair" => Ok(VariantKind::Fair),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?} (expected stable, squared or fair)"
            ))),
        }
    }
}

/// The constant `c` subtracted as `c·I` from one source.
pub fn shift_constant(a: &DMatrix<f64>, k: usize, v: VariantKind) -> Result<f64> {
    let d = a.nrows();
    if k == 0 || k > d {
        return Err(Error::InvalidRank { k, dim: d });
    }
    Ok(match v {
        VariantKind::Stable => 0.0,
        VariantKind::Squared => a.trace() / k as f64,
        VariantKind::Fair => sym_eig(a)?.top_sum(k) / k as f64,
    })
}

/// Shifted copies of every source matrix. The results are generally
/// indefinite.
pub fn shift_matrices(m: &SecondMomentSet, k: usize, v: VariantKind) -> Result<Vec<DMatrix<f64>>> {
    if k == 0 || k > m.dim() {
        return Err(Error::InvalidRank { k, dim: m.dim() });
    }
    m.matrices()
        .iter()
        .map(|a| {
            let c = shift_constant(a, k, v)?;
            let mut out = a.clone();
            for i in 0..out.nrows() {
                out[(i, i)] -= c;
            }
            Ok(out)
        })
        .collect()
}

/// Solves the variant. `tau`, `gap` and the traces refer to the shifted
/// objective; `per_source_ev` and `worst_case_ev` use the original matrices.
pub fn solve_variant(
    m: &SecondMomentSet,
    k: usize,
    iterations: usize,
    v: VariantKind,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if v == VariantKind::Stable {
        return solve_observed(m.matrices(), m.matrices(), k, iterations, opts, &mut |_| {});
    }
    let shifted = shift_matrices(m, k, v)?;
    solve_observed(&shifted, m.matrices(), k, iterations, opts, &mut |_| {})
}

/// Per-source regret `⟨Σ⁽ˡ⁾, I − P⟩ − Σ_{i>k} λ_i⁽ˡ⁾`, which equals the top-k
/// eigenvalue sum minus `⟨Σ⁽ˡ⁾, P⟩`.
pub fn regret(m: &SecondMomentSet, p: &ProjectionMatrix) -> Result<Vec<f64>> {
    let k = p.rank();
    m.matrices()
        .iter()
        .map(|a| {
            let pairs = sym_eig(a)?;
            let tail: f64 = pairs.values.iter().skip(k).sum();
            Ok(a.trace() - inner(a, p.matrix()) - tail)
        })
        .collect()
}

/// Per-source reconstruction error `⟨Σ⁽ˡ⁾, I − P⟩`.
pub fn reconstruction_error(m: &SecondMomentSet, p: &ProjectionMatrix) -> Vec<f64> {
    m.matrices()
        .iter()
        .map(|a| a.trace() - inner(a, p.matrix()))
        .collect()
}
