use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// Per-receive-antenna linear SNR. Its inverse is the LS estimation MSE of
/// that antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefVector {
    pub mu: Vec<f64>,
}

impl BeliefVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some(i) = mu.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Contract(format!(
                "belief for antenna {i} must be positive and finite, got {}",
                mu[i]
            )));
        }
        Ok(Self { mu })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu_db(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 10.0 * m.log10()).collect()
    }

    /// Expected LS mean-square error per antenna, `1 / mu`.
    pub fn mse(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / m).collect()
    }
}

/// `mu_i = signal_power_i / noise_var`.
pub fn compute_belief(noise_var: f64, signal_power: &[f64]) -> Result<BeliefVector> {
    if !(noise_var > 0.0) {
        return Err(Error::Contract(format!("noise variance must be positive, got {noise_var}")));
    }
    if let Some(p) = signal_power.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::Contract(format!("signal power must be positive, got {p}")));
    }
    BeliefVector::new(signal_power.iter().map(|p| p / noise_var).collect())
}

/// Mean `|G|^2` per receive antenna over streams, subcarriers and symbols.
pub fn per_antenna_power(g: &ComplexGrid) -> Vec<f64> {
    let n_r = g.shape()[0];
    let per = g.len() / n_r.max(1);
    (0..n_r)
        .map(|r| g.data()[r * per..(r + 1) * per].iter().map(|c| c.norm_sqr()).sum::<f64>() / per as f64)
        .collect()
}

/// Belief from the true equivalent channel and the simulator's noise level.
pub fn genie_belief(g: &ComplexGrid, noise_var: f64) -> Result<BeliefVector> {
    compute_belief(noise_var, &per_antenna_power(g))
}
