use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Mixture weights on the probability simplex `Δ^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn uniform(count: usize) -> Self {
        SimplexWeights(vec![1.0 / count as f64; count])
    }

    /// The vertex `e_index`.
    pub fn vertex(count: usize, index: usize) -> Self {
        let mut w = vec![0.0; count];
        w[index] = 1.0;
        SimplexWeights(w)
    }

    /// Validates nonnegativity and unit sum (within `1e-12`).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let w = SimplexWeights(weights);
        w.check()?;
        Ok(w)
    }

    /// Normalizes a nonnegative vector onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite, nonnegative and not all zero".into(),
            ));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(SimplexWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if let Some(w) = self.0.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative or non-finite weight {w}")));
        }
        let total: f64 = self.0.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(())
    }
}

/// Entropic mirror step on the simplex:
/// `ω_l ∝ ω_base,l · exp(−η_ω · payoff_l)`, normalized in the log domain.
pub fn simplex_mirror_update(
    base: &SimplexWeights,
    payoffs: &[f64],
    eta_omega: f64,
) -> Result<SimplexWeights> {
    if payoffs.len() != base.len() {
        return Err(Error::Shape(format!(
            "{} payoffs for {} weights",
            payoffs.len(),
            base.len()
        )));
    }
    let logits: Vec<f64> = base
        .as_slice()
        .iter()
        .zip(payoffs)
        .map(|(&w, &p)| w.ln() - eta_omega * p)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(format!(
            "simplex update produced a non-finite maximum logit {max}"
        )));
    }
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
    Ok(SimplexWeights(out))
}
