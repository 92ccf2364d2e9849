use crate::error::{Error, Result};
use crate::moments::SecondMomentSet;

/// Floor on `log(d/k)` so the step sizes stay finite as `d → k`.
pub const LOG_RATIO_FLOOR: f64 = 0.05;

/// Step sizes for the `M` and `ω` mirror steps, plus their common scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub eta: f64,
    pub eta_m: f64,
    pub eta_omega: f64,
}

impl StepSizes {
    /// Explicit steps; both must be positive and finite.
    pub fn new(eta_m: f64, eta_omega: f64) -> Result<Self> {
        for (name, v) in [("eta_M", eta_m), ("eta_omega", eta_omega)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(StepSizes {
            eta: eta_m.max(eta_omega),
            eta_m,
            eta_omega,
        })
    }

    /// All three values multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        StepSizes {
            eta: self.eta * factor,
            eta_m: self.eta_m * factor,
            eta_omega: self.eta_omega * factor,
        }
    }
}

/// `max(log x, 0.05)`.
pub fn log_clamp(x: f64) -> f64 {
    x.ln().max(LOG_RATIO_FLOOR)
}

/// `η = (1/(4ρ))·sqrt(log L / (k·log(d/k)))`, `η_M = η / log L`,
/// `η_ω = η / (k·log(d/k))`, with `log(d/k)` clamped below at 0.05.
pub fn step_sizes_for(rho: f64, sources: usize, dim: usize, k: usize) -> Result<StepSizes> {
    if sources < 2 {
        return Err(Error::DegenerateInstance(
            "a single source reduces to classical PCA".into(),
        ));
    }
    if k == 0 || k >= dim {
        return Err(Error::DegenerateInstance(format!(
            "k = {k} with d = {dim} leaves no freedom for the Fantope step"
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::DegenerateInstance(format!(
            "maximum operator norm must be positive, got {rho}"
        )));
    }
    let log_l = (sources as f64).ln();
    let spread = k as f64 * log_clamp(dim as f64 / k as f64);
    let eta = (log_l / spread).sqrt() / (4.0 * rho);
    Ok(StepSizes {
        eta,
        eta_m: eta / log_l,
        eta_omega: eta / spread,
    })
}

/// Step sizes for a second-moment instance, from its `rho_max`.
pub fn default_step_sizes(m: &SecondMomentSet, k: usize) -> Result<StepSizes> {
    step_sizes_for(m.rho_max(), m.count(), m.dim(), k)
}
