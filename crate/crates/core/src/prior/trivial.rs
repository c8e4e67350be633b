use rand::RngCore;

use super::{gaussian_log_density, Decoded, Latent, PriorElbo, PriorModel};

/// Single latent decoding to `N(0, I)`. Running the residual machinery on top of it
/// gives plain DDPM and v-prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardNormal {
    pub dim: usize,
}

impl StandardNormal {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl PriorModel for StandardNormal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embedding_dim(&self) -> usize {
        0
    }

    fn num_latents(&self) -> usize {
        1
    }

    fn sample_z(&self, _rng: &mut dyn RngCore) -> Latent {
        Latent(0)
    }

    fn posterior_z(&self, _x0: &[f64], _rng: &mut dyn RngCore) -> Latent {
        Latent(0)
    }

    fn decode(&self, _z: Latent) -> Decoded {
        Decoded {
            mu: vec![0.0; self.dim],
            sigma: 1.0,
        }
    }

    fn z_embedding(&self, _z: Latent) -> Vec<f64> {
        Vec::new()
    }

    fn prior_elbo(&self, x0: &[f64]) -> PriorElbo {
        PriorElbo {
            reconstruction: gaussian_log_density(x0, &vec![0.0; x0.len()], 1.0),
            kl: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_latent_decodes_to_standard_normal() {
        let p = StandardNormal::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample_z(&mut rng), Latent(0));
        assert_eq!(p.posterior_z(&[3.0, -1.0], &mut rng), Latent(0));
        assert_eq!(
            p.decode(Latent(0)),
            Decoded {
                mu: vec![0.0, 0.0],
                sigma: 1.0
            }
        );
        assert!(p.z_embedding(Latent(0)).is_empty());
    }

    #[test]
    fn elbo_is_standard_normal_log_density() {
        let p = StandardNormal::new(2);
        let x = [0.3, -1.2];
        let want = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (0.09 + 1.44);
        assert!((p.prior_elbo(&x).value() - want).abs() < 1e-14);
    }
}
