//! Per-source second-moment matrices: the problem instance shared by every
//! solver.

mod load;

pub use load::{load_moment_matrices, load_sources, HeaderMode, SourceLayout};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::spectral::{operator_norm, sym_eig, symmetrize};

const SYMMETRY_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-8;

/// Raw observations, one `n_l × d` matrix per source (rows are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSamples {
    labels: Vec<String>,
    data: Vec<DMatrix<f64>>,
    dim: usize,
}

impl SourceSamples {
    pub fn new(labels: Vec<String>, data: Vec<DMatrix<f64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("no sources".into()));
        }
        if labels.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} sources",
                labels.len(),
                data.len()
            )));
        }
        let dim = data[0].ncols();
        if dim == 0 {
            return Err(Error::Shape("zero feature columns".into()));
        }
        for (label, x) in labels.iter().zip(&data) {
            if x.ncols() != dim {
                return Err(Error::Shape(format!(
                    "source {label} has {} columns, expected {dim}",
                    x.ncols()
                )));
            }
            if x.nrows() == 0 {
                return Err(Error::Shape(format!("source {label} has no rows")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMatrix(format!(
                    "source {label} has a non-finite entry"
                )));
            }
        }
        Ok(SourceSamples { labels, data, dim })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &[DMatrix<f64>] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len()
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.data.iter().map(|x| x.nrows()).collect()
    }

    /// All rows stacked in source order.
    pub fn pooled(&self) -> DMatrix<f64> {
        let total: usize = self.data.iter().map(|x| x.nrows()).sum();
        let mut out = DMatrix::zeros(total, self.dim);
        let mut offset = 0;
        for x in &self.data {
            out.rows_mut(offset, x.nrows()).copy_from(x);
            offset += x.nrows();
        }
        out
    }
}

/// The `L` symmetric PSD matrices `Σ̂⁽ˡ⁾` plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentSet {
    matrices: Vec<DMatrix<f64>>,
    labels: Vec<String>,
    dim: usize,
    rho_max: f64,
    sample_sizes: Option<Vec<usize>>,
}

impl SecondMomentSet {
    /// Validates and wraps per-source matrices. Inputs are symmetrized.
    pub fn new(
        labels: Vec<String>,
        matrices: Vec<DMatrix<f64>>,
        sample_sizes: Option<Vec<usize>>,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Shape("no sources".into()));
        }
        if labels.len() != matrices.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} matrices",
                labels.len(),
                matrices.len()
            )));
        }
        if let Some(n) = &sample_sizes {
            if n.len() != matrices.len() {
                return Err(Error::Shape("sample size list length mismatch".into()));
            }
        }
        let dim = matrices[0].nrows();
        let mut sym = Vec::with_capacity(matrices.len());
        let mut rho_max = 0.0f64;
        for (label, m) in labels.iter().zip(&matrices) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Shape(format!(
                    "matrix {label} is {}×{}, expected {dim}×{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let asym = (m - m.transpose()).amax();
            let scale = 1.0 + m.amax();
            if asym > SYMMETRY_TOL * scale {
                return Err(Error::InvalidMatrix(format!(
                    "matrix {label} is not symmetric (max |A − Aᵀ| = {asym:.3e})"
                )));
            }
            let s = symmetrize(m);
            let pairs = sym_eig(&s)?;
            let top = pairs.values[0];
            let bottom = pairs.values[dim - 1];
            if bottom < -PSD_TOL * (1.0 + top.abs()) {
                return Err(Error::InvalidMatrix(format!(
                    "matrix {label} is not PSD (min eigenvalue {bottom:.3e})"
                )));
            }
            rho_max = rho_max.max(top);
            sym.push(s);
        }
        Ok(SecondMomentSet {
            matrices: sym,
            labels,
            dim,
            rho_max,
            sample_sizes,
        })
    }

    /// Unlabelled convenience constructor (`s1`, `s2`, ...).
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let labels = (1..=matrices.len()).map(|i| format!("s{i}")).collect();
        Self::new(labels, matrices, None)
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn sample_sizes(&self) -> Option<&[usize]> {
        self.sample_sizes.as_deref()
    }

    /// `Σ_l ω_l Σ̂⁽ˡ⁾`.
    pub fn mixture(&self, weights: &[f64]) -> DMatrix<f64> {
        mixture(&self.matrices, weights)
    }

    /// A copy with every matrix multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> SecondMomentSet {
        SecondMomentSet {
            matrices: self.matrices.iter().map(|m| m * c).collect(),
            labels: self.labels.clone(),
            dim: self.dim,
            rho_max: self.rho_max * c,
            sample_sizes: self.sample_sizes.clone(),
        }
    }
}

/// `Σ_l w_l A_l` over any list of equally sized matrices.
pub fn mixture(matrices: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let d = matrices[0].nrows();
    let mut out = DMatrix::zeros(d, d);
    for (m, &w) in matrices.iter().zip(weights) {
        if w != 0.0 {
            out += m * w;
        }
    }
    out
}

/// `(1/n) XᵀX` of a single `n × d` sample matrix, optionally centered.
pub fn second_moment(x: &DMatrix<f64>, center: bool) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let m = if center {
        let means = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &means;
        }
        c.tr_mul(&c)
    } else {
        x.tr_mul(x)
    };
    symmetrize(&(m / n))
}

/// Per-source second moments `Σ̂⁽ˡ⁾ = (1/n_l) Σ_i x_i x_iᵀ`.
pub fn compute_second_moment(samples: &SourceSamples, center: bool) -> Result<SecondMomentSet> {
    compute_second_moment_with(samples, center, Execution::default())
}

pub fn compute_second_moment_with(
    samples: &SourceSamples,
    center: bool,
    exec: Execution,
) -> Result<SecondMomentSet> {
    let matrices = exec.map_slice(samples.data(), |x| second_moment(x, center));
    SecondMomentSet::new(
        samples.labels().to_vec(),
        matrices,
        Some(samples.sample_sizes()),
    )
}

/// Divides every matrix by `rho_max`; returns the rescaled set and the scale.
pub fn rescale_by_max_opnorm(m: &SecondMomentSet) -> Result<(SecondMomentSet, f64)> {
    let scale = m.rho_max();
    if !(scale > 0.0) {
        return Err(Error::DegenerateInstance(
            "all second-moment matrices are zero".into(),
        ));
    }
    let mut out = m.scaled(1.0 / scale);
    // Recompute rather than trust the product for the stored maximum.
    let mut rho = 0.0f64;
    for a in out.matrices() {
        rho = rho.max(operator_norm(a)?);
    }
    out.rho_max = rho;
    Ok((out, scale))
}
