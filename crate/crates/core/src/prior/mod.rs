//! Latent-variable Gaussian priors: a sampler for `z`, a posterior `z | x0`, and a
//! decoder giving the mean and isotropic deviation of `x0 | z`.

mod mixture;
mod trivial;
mod vqvae;

use std::f64::consts::PI;

use rand::RngCore;

use crate::nn::Tensor2;

pub use mixture::GaussianMixture;
pub use trivial::StandardNormal;
pub use vqvae::{VqVae, VqVaeConfig, VqVaeLog};

/// Index of a discrete latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Latent(pub usize);

/// Decoder statistics `N(mu, sigma^2 I)` for one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

/// ELBO-style diagnostic for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorElbo {
    /// Expected Gaussian log-likelihood of the point under the decoder.
    pub reconstruction: f64,
    /// KL from the posterior over latents to the latent prior.
    pub kl: f64,
}

impl PriorElbo {
    pub fn value(&self) -> f64 {
        self.reconstruction - self.kl
    }
}

pub trait PriorModel: Send + Sync {
    /// Dimension of data points.
    fn dim(&self) -> usize;

    /// Width of the latent representation fed to the denoising network (may be 0).
    fn embedding_dim(&self) -> usize;

    /// Number of distinct latents.
    fn num_latents(&self) -> usize;

    fn sample_z(&self, rng: &mut dyn RngCore) -> Latent;

    fn posterior_z(&self, x0: &[f64], rng: &mut dyn RngCore) -> Latent;

    fn decode(&self, z: Latent) -> Decoded;

    fn z_embedding(&self, z: Latent) -> Vec<f64>;

    fn prior_elbo(&self, x0: &[f64]) -> PriorElbo;

    /// Posterior draws for every row of `x0`.
    fn posterior_batch(&self, x0: &Tensor2, rng: &mut dyn RngCore) -> Vec<Latent> {
        (0..x0.rows())
            .map(|r| self.posterior_z(x0.row(r), rng))
            .collect()
    }
}

/// `log N(x | mu, sigma^2 I)`.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], sigma: f64) -> f64 {
    let n = x.len() as f64;
    let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * n * (2.0 * PI).ln() - n * sigma.ln() - sq / (2.0 * sigma * sigma)
}

/// Draws an index from unnormalized nonnegative `weights`.
pub(crate) fn draw_categorical(weights: &[f64], rng: &mut dyn RngCore) -> usize {
    use rand::Rng;
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return k;
            }
            u -= w;
            last_positive = k;
        }
    }
    last_positive
}
