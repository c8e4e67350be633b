use rand::RngCore;

use super::{draw_categorical, gaussian_log_density, Decoded, Latent, PriorElbo, PriorModel};
use crate::error::{Error, Result};

/// Isotropic Gaussian mixture with exact posterior responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigmas: Vec<f64>,
}

impl GaussianMixture {
    /// `weights` are normalized here; they must be nonnegative with a positive sum.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, sigmas: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || sigmas.len() != k {
            return Err(Error::config(
                "mixture needs equally many (>= 1) weights, means and deviations",
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::config(
                "mixture means must share a positive dimension",
            ));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::config("mixture weights must be nonnegative"));
        }
        if sigmas.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::config("mixture deviations must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::config(
                "mixture weights must have a positive finite sum",
            ));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            sigmas,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Posterior probability of each component given `x0`.
    pub fn responsibilities(&self, x0: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.weights.len())
            .map(|k| {
                if self.weights[k] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    self.weights[k].ln() + gaussian_log_density(x0, &self.means[k], self.sigmas[k])
                }
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        unnorm.into_iter().map(|u| u / total).collect()
    }
}

impl PriorModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn embedding_dim(&self) -> usize {
        self.dim()
    }

    fn num_latents(&self) -> usize {
        self.weights.len()
    }

    fn sample_z(&self, rng: &mut dyn RngCore) -> Latent {
        Latent(draw_categorical(&self.weights, rng))
    }

    fn posterior_z(&self, x0: &[f64], rng: &mut dyn RngCore) -> Latent {
        Latent(draw_categorical(&self.responsibilities(x0), rng))
    }

    fn decode(&self, z: Latent) -> Decoded {
        Decoded {
            mu: self.means[z.0].clone(),
            sigma: self.sigmas[z.0],
        }
    }

    fn z_embedding(&self, z: Latent) -> Vec<f64> {
        self.means[z.0].clone()
    }

    fn prior_elbo(&self, x0: &[f64]) -> PriorElbo {
        let resp = self.responsibilities(x0);
        let mut reconstruction = 0.0;
        let mut kl = 0.0;
        for (k, &r) in resp.iter().enumerate() {
            if r > 0.0 {
                reconstruction += r * gaussian_log_density(x0, &self.means[k], self.sigmas[k]);
                kl += r * (r / self.weights[k]).ln();
            }
        }
        PriorElbo { reconstruction, kl }
    }
}
