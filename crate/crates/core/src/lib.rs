//! Distributionally robust multi-source PCA.
//!
//! Given second-moment matrices from `L` sources, find the rank-k projector
//! that maximizes the worst-case explained variance over all mixtures of the
//! sources. The crate provides the Fantope-relaxed Mirror-Prox solver with a
//! rounding certificate ([`mirrorprox`]), the dual eigenvalue-sum route
//! ([`dual`]), the SquaredPCA/FairPCA reductions ([`variants`]), and seeded
//! simulation scenarios with their metrics ([`simulate`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod moments;
pub mod mirrorprox;
pub mod parallel;
pub mod simulate;
pub mod spectral;
pub mod variants;

pub use dual::{dual_solve, DualOptions, DualReport};
pub use error::{Error, Result};
pub use mirrorprox::{solve, FantopePoint, SimplexWeights, SolveOptions, SolveReport, StepSizes};
pub use moments::{SecondMomentSet, SourceSamples};
pub use parallel::Execution;
pub use spectral::{EigenPairs, ProjectionMatrix};
pub use variants::{solve_variant, VariantKind};
