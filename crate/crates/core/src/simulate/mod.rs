//! Seeded synthetic data for the two-feature geometry example and the
//! shared-plus-specific factor model, the evaluation metrics, and the
//! scenario sweeps built from them.
//!
//! Every random stream comes from a ChaCha8 generator seeded by
//! [`derive_seed`], so a (seed, source, replication) triple always yields the
//! same data regardless of thread scheduling.

mod metrics;
mod scenarios;

pub use metrics::{
    angle_to_axis_deg, capture_error, leading_direction, ood_eval, pooled_pca, recovery_error,
    worst_case_explained_variance,
};
pub use scenarios::{
    bench_timing, certificate_grid, certificate_table, convergence, factor_comparison, settings,
    wishart_instance, write_rows_csv, BenchConfig, BenchRow, CertificateGridConfig, ConvergenceConfig, FactorConfig,
    Method, MetricRow, SettingsConfig,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::moments::SourceSamples;

/// Stream tags that keep independent draws apart.
pub(crate) mod stream {
    pub const TWO_FEATURE: u64 = 1;
    pub const SHARED: u64 = 2;
    pub const SOURCE: u64 = 3;
    pub const REPLICATION: u64 = 4;
    pub const INSTANCE: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices into a new seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for the stream at `path` under `base`.
pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// `rows × cols` matrix of independent `N(0, sd²)` entries.
pub fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormalizes the columns of `g` by QR with signs fixed so the
/// diagonal of R is positive.
fn orthonormalize(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-distributed `d × r` orthonormal frame.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize) -> DMatrix<f64> {
    orthonormalize(normal_matrix(rng, d, r, 1.0))
}

/// Random `d × r` orthonormal frame orthogonal to the columns of `basis`.
pub fn random_frame_orthogonal_to<R: Rng + ?Sized>(
    rng: &mut R,
    basis: &DMatrix<f64>,
    r: usize,
) -> DMatrix<f64> {
    let d = basis.nrows();
    let project = |g: DMatrix<f64>| {
        let coef = basis.tr_mul(&g);
        g - basis * coef
    };
    // Projecting twice removes the rounding left by the first pass.
    let q = orthonormalize(project(project(normal_matrix(rng, d, r, 1.0))));
    orthonormalize(project(q))
}

/// The two-feature example: `X₁ ~ N(0, var_x1)`, `X₂ = β_l X₁ + ε`,
/// `ε ~ N(0, σ_l²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFeatureSpec {
    pub setting: u8,
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub var_x1: f64,
    /// Per-source noise standard deviations.
    pub noise_sd: Vec<f64>,
    pub seed: u64,
}

impl TwoFeatureSpec {
    /// Settings 1–3 with the common noise variance 0.04.
    pub fn setting(setting: u8, seed: u64) -> Result<Self> {
        let (sizes, betas) = match setting {
            1 => (vec![300, 300, 1200], vec![0.2, -0.4, -1.0]),
            2 => (vec![500; 3], vec![0.2, -0.4, -1.0]),
            3 => (vec![500; 3], vec![-0.5, 1.0, 0.6]),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "setting must be 1, 2 or 3, got {other}"
                )))
            }
        };
        Ok(TwoFeatureSpec {
            setting,
            sizes,
            betas,
            var_x1: 3.0,
            noise_sd: vec![0.2; 3],
            seed,
        })
    }

    /// The same setting with noise standard deviations 1, 0.6 and 0.3, used
    /// to contrast StablePCA with SquaredPCA and FairPCA.
    pub fn heteroscedastic(setting: u8, seed: u64) -> Result<Self> {
        Ok(TwoFeatureSpec {
            noise_sd: vec![1.0, 0.6, 0.3],
            ..TwoFeatureSpec::setting(setting, seed)?
        })
    }

    fn validate(&self) -> Result<()> {
        let l = self.sizes.len();
        if l == 0 || self.betas.len() != l || self.noise_sd.len() != l {
            return Err(Error::InvalidArgument(
                "sizes, betas and noise_sd must have one entry per source".into(),
            ));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("every source needs at least one sample".into()));
        }
        if !(self.var_x1 > 0.0) || self.noise_sd.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("variances must be nonnegative".into()));
        }
        Ok(())
    }
}

pub fn gen_two_feature_sources(spec: &TwoFeatureSpec) -> Result<SourceSamples> {
    spec.validate()?;
    let sd1 = spec.var_x1.sqrt();
    let data = (0..spec.sizes.len())
        .map(|l| {
            let mut rng = rng_for(spec.seed, &[stream::TWO_FEATURE, l as u64]);
            let mut x = DMatrix::zeros(spec.sizes[l], 2);
            for i in 0..spec.sizes[l] {
                let x1 = sd1 * rng.sample::<f64, _>(StandardNormal);
                let eps = spec.noise_sd[l] * rng.sample::<f64, _>(StandardNormal);
                x[(i, 0)] = x1;
                x[(i, 1)] = spec.betas[l] * x1 + eps;
            }
            x
        })
        .collect();
    let labels = (1..=spec.sizes.len()).map(|l| format!("source{l}")).collect();
    SourceSamples::new(labels, data)
}

/// `X = (Λ_sh, α_l Λ_sp⁽ˡ⁾) Z + ε` with `Z ~ N(0, I)`, `ε ~ N(0, noise_var·I)`
/// and `α_l ~ U(alpha_range)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelSpec {
    pub d: usize,
    pub sources: usize,
    pub n: usize,
    pub shared_rank: usize,
    pub specific_rank: usize,
    pub alpha_range: (f64, f64),
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for FactorModelSpec {
    fn default() -> Self {
        FactorModelSpec {
            d: 40,
            sources: 4,
            n: 2000,
            shared_rank: 3,
            specific_rank: 5,
            alpha_range: (0.2, 3.0),
            noise_var: 0.25,
            seed: 0,
        }
    }
}

impl FactorModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shared_rank + self.specific_rank > self.d {
            return Err(Error::InvalidArgument(format!(
                "shared rank {} plus specific rank {} exceeds d = {}",
                self.shared_rank, self.specific_rank, self.d
            )));
        }
        if self.n == 0 || self.sources == 0 || self.shared_rank == 0 {
            return Err(Error::InvalidArgument(
                "n, the source count and the shared rank must be positive".into(),
            ));
        }
        let (lo, hi) = self.alpha_range;
        if !(lo < hi) || !(self.noise_var >= 0.0) {
            return Err(Error::InvalidArgument(
                "need alpha low < high and a nonnegative noise variance".into(),
            ));
        }
        Ok(())
    }

    /// The shared loadings; a function of `seed` and `d` only.
    pub fn shared_loadings(&self) -> DMatrix<f64> {
        random_frame(&mut rng_for(self.seed, &[stream::SHARED]), self.d, self.shared_rank)
    }
}

/// One source of the factor model.
#[derive(Debug, Clone)]
pub struct FactorSource {
    pub samples: DMatrix<f64>,
    pub specific: DMatrix<f64>,
    pub alpha: f64,
}

/// A full factor-model draw.
#[derive(Debug, Clone)]
pub struct FactorDraw {
    pub samples: SourceSamples,
    pub shared: DMatrix<f64>,
    pub specifics: Vec<DMatrix<f64>>,
    pub alphas: Vec<f64>,
    pub noise_var: f64,
}

impl FactorDraw {
    /// `Λ_sh Λ_shᵀ + α_l² Λ_sp Λ_spᵀ + noise_var·I`.
    pub fn population_moment(&self, l: usize) -> DMatrix<f64> {
        population_moment(&self.shared, &self.specifics[l], self.alphas[l], self.noise_var)
    }

    pub fn population_moments(&self) -> Vec<DMatrix<f64>> {
        (0..self.alphas.len()).map(|l| self.population_moment(l)).collect()
    }
}

pub(crate) fn population_moment(
    shared: &DMatrix<f64>,
    specific: &DMatrix<f64>,
    alpha: f64,
    noise_var: f64,
) -> DMatrix<f64> {
    let d = shared.nrows();
    shared * shared.transpose()
        + specific * specific.transpose() * (alpha * alpha)
        + DMatrix::identity(d, d) * noise_var
}

/// Draws source `index` of the stream seeded by `seed` around fixed shared
/// loadings.
pub(crate) fn draw_factor_source(
    spec: &FactorModelSpec,
    shared: &DMatrix<f64>,
    seed: u64,
    index: usize,
) -> FactorSource {
    let mut rng = rng_for(seed, &[stream::SOURCE, index as u64]);
    let (lo, hi) = spec.alpha_range;
    let alpha = rng.random_range(lo..hi);
    let specific = random_frame_orthogonal_to(&mut rng, shared, spec.specific_rank);
    let z = normal_matrix(&mut rng, spec.n, spec.shared_rank + spec.specific_rank, 1.0);
    let noise = normal_matrix(&mut rng, spec.n, spec.d, spec.noise_var.sqrt());
    let mut loadings = DMatrix::zeros(spec.d, spec.shared_rank + spec.specific_rank);
    loadings.columns_mut(0, spec.shared_rank).copy_from(shared);
    loadings
        .columns_mut(spec.shared_rank, spec.specific_rank)
        .copy_from(&(&specific * alpha));
    let samples = z * loadings.transpose() + noise;
    FactorSource { samples, specific, alpha }
}

pub fn gen_factor_sources(spec: &FactorModelSpec) -> Result<FactorDraw> {
    spec.validate()?;
    let shared = spec.shared_loadings();
    let drawn: Vec<FactorSource> = (0..spec.sources)
        .map(|l| draw_factor_source(spec, &shared, spec.seed, l))
        .collect();
    let labels = (1..=spec.sources).map(|l| format!("source{l}")).collect();
    let mut data = Vec::with_capacity(drawn.len());
    let mut specifics = Vec::with_capacity(drawn.len());
    let mut alphas = Vec::with_capacity(drawn.len());
    for s in drawn {
        data.push(s.samples);
        specifics.push(s.specific);
        alphas.push(s.alpha);
    }
    Ok(FactorDraw {
        samples: SourceSamples::new(labels, data)?,
        shared,
        specifics,
        alphas,
        noise_var: spec.noise_var,
    })
}
