//! Closed-form residual-prior diffusion: the forward marginal centred on the prior
//! mean, the reverse posterior, noise/velocity reparameterizations, the auxiliary
//! network inputs, losses, and a single ancestral step.
//!
//! Every function is pure; noise is always passed in by the caller.

use crate::error::{Error, Result};
use crate::prior::Decoded;
use crate::schedule::StepCoeffs;

/// Default stabilizer added to `sqrt(1 - alpha_bar)` in the auxiliary inputs.
pub const DEFAULT_DELTA: f64 = 0.01;
/// Default reverse deviation at the final step.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;

/// `x_t = sqrt(ab) x0 + (1 - sqrt(ab)) mu + sqrt(1 - ab) sigma eps`.
pub fn forward_sample(x0: &[f64], eps0: &[f64], prior: &Decoded, c: &StepCoeffs) -> Vec<f64> {
    let s = c.alpha_bar.sqrt();
    let n = (1.0 - c.alpha_bar).sqrt() * prior.sigma;
    x0.iter()
        .zip(eps0)
        .zip(&prior.mu)
        .map(|((x, e), m)| s * x + (1.0 - s) * m + n * e)
        .collect()
}

/// Mean and per-coordinate variance of `x_t | x0, z`.
pub fn marginal_params(x0: &[f64], prior: &Decoded, c: &StepCoeffs) -> (Vec<f64>, f64) {
    let s = c.alpha_bar.sqrt();
    let mean = x0
        .iter()
        .zip(&prior.mu)
        .map(|(x, m)| s * x + (1.0 - s) * m)
        .collect();
    (mean, (1.0 - c.alpha_bar) * prior.sigma * prior.sigma)
}

/// Mean and per-coordinate variance of the one-step kernel `x_t | x_{t-1}, z`.
pub fn step_kernel(x_prev: &[f64], prior: &Decoded, c: &StepCoeffs) -> (Vec<f64>, f64) {
    let s = c.alpha.sqrt();
    let mean = x_prev
        .iter()
        .zip(&prior.mu)
        .map(|(x, m)| s * x + (1.0 - s) * m)
        .collect();
    (mean, c.beta * prior.sigma * prior.sigma)
}

/// Gaussian posterior `x_{t-1} | x_t, x0, z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub mu_tilde: Vec<f64>,
    pub beta_tilde: f64,
    /// Coefficient of the prior mean in `mu_tilde`.
    pub nu: f64,
}

impl PosteriorParams {
    pub fn sigma(&self) -> f64 {
        self.beta_tilde.sqrt()
    }
}

/// Coefficients `(a, b, nu)` of `mu_tilde = a x_t + b x0 + nu mu`.
pub fn posterior_coefficients(c: &StepCoeffs) -> (f64, f64, f64) {
    let denom = 1.0 - c.alpha_bar;
    let a = c.alpha.sqrt() * (1.0 - c.alpha_bar_prev) / denom;
    let b = c.beta * c.alpha_bar_prev.sqrt() / denom;
    let nu = (1.0 - c.alpha.sqrt()) * (1.0 - c.alpha_bar_prev.sqrt()) / (1.0 + c.alpha_bar.sqrt());
    (a, b, nu)
}

/// Posterior variance factor `(1 - a)(1 - ab_prev)/(1 - ab) * sigma^2`.
pub fn posterior_variance(prior_sigma: f64, c: &StepCoeffs) -> f64 {
    c.beta * (1.0 - c.alpha_bar_prev) / (1.0 - c.alpha_bar) * prior_sigma * prior_sigma
}

/// Posterior for steps `t >= 2`; the last step has a degenerate posterior and uses
/// the fixed small deviation instead.
pub fn posterior_params(
    x_t: &[f64],
    x0: &[f64],
    prior: &Decoded,
    c: &StepCoeffs,
) -> Result<PosteriorParams> {
    if c.is_final() || c.t == 0 {
        return Err(Error::config(format!(
            "posterior is degenerate at step {}; use the fixed final deviation",
            c.t
        )));
    }
    let (a, b, nu) = posterior_coefficients(c);
    let mu_tilde = x_t
        .iter()
        .zip(x0)
        .zip(&prior.mu)
        .map(|((xt, x), m)| a * xt + b * x + nu * m)
        .collect();
    Ok(PosteriorParams {
        mu_tilde,
        beta_tilde: posterior_variance(prior.sigma, c),
        nu,
    })
}

/// Reverse mean from a noise prediction.
pub fn mu_from_eps(x_t: &[f64], eps: &[f64], prior: &Decoded, c: &StepCoeffs) -> Vec<f64> {
    let sa = c.alpha.sqrt();
    let k_eps = c.beta / (1.0 - c.alpha_bar).sqrt() * prior.sigma;
    x_t.iter()
        .zip(eps)
        .zip(&prior.mu)
        .map(|((x, e), m)| (x - (1.0 - sa) * m - k_eps * e) / sa)
        .collect()
}

/// Reverse mean from a modified-velocity prediction.
pub fn mu_from_v(x_t: &[f64], v: &[f64], prior: &Decoded, c: &StepCoeffs) -> Vec<f64> {
    let sa = c.alpha.sqrt();
    let k_v = c.beta * c.alpha_bar_prev.sqrt() / (1.0 - c.alpha_bar).sqrt() * prior.sigma;
    x_t.iter()
        .zip(v)
        .zip(&prior.mu)
        .map(|((x, vv), m)| sa * x + (1.0 - sa) * m - k_v * vv)
        .collect()
}

/// `(x_t - mu) / ((sqrt(1 - ab) + delta) sigma)`, the auxiliary input for noise prediction.
pub fn aux_eps(x_t: &[f64], prior: &Decoded, c: &StepCoeffs, delta: f64) -> Vec<f64> {
    let scale = 1.0 / (((1.0 - c.alpha_bar).sqrt() + delta) * prior.sigma);
    x_t.iter()
        .zip(&prior.mu)
        .map(|(x, m)| (x - m) * scale)
        .collect()
}

/// `sqrt(ab) (x_t - mu) / ((sqrt(1 - ab) + delta) sigma)`, the auxiliary input for
/// velocity prediction.
pub fn aux_v(x_t: &[f64], prior: &Decoded, c: &StepCoeffs, delta: f64) -> Vec<f64> {
    let scale = c.alpha_bar.sqrt() / (((1.0 - c.alpha_bar).sqrt() + delta) * prior.sigma);
    x_t.iter()
        .zip(&prior.mu)
        .map(|(x, m)| (x - m) * scale)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTargets {
    /// Derivative of `x_t` along the signal weight `sqrt(ab)`.
    pub v: Vec<f64>,
    /// Normalized velocity `sqrt(ab) eps - sqrt(1 - ab) (x0 - mu) / sigma`.
    pub v_hat: Vec<f64>,
}

pub fn velocity_targets(
    x0: &[f64],
    eps0: &[f64],
    prior: &Decoded,
    c: &StepCoeffs,
) -> VelocityTargets {
    let sab = c.alpha_bar.sqrt();
    let snab = (1.0 - c.alpha_bar).sqrt();
    let mut v = Vec::with_capacity(x0.len());
    let mut v_hat = Vec::with_capacity(x0.len());
    for ((x, e), m) in x0.iter().zip(eps0).zip(&prior.mu) {
        v.push(x - m - sab / snab * prior.sigma * e);
        v_hat.push(sab * e - snab * (x - m) / prior.sigma);
    }
    VelocityTargets { v, v_hat }
}

/// Recovers `x0` from `x_t` and the unnormalized velocity.
pub fn x0_from_velocity(x_t: &[f64], v: &[f64], prior: &Decoded, c: &StepCoeffs) -> Vec<f64> {
    let sab = c.alpha_bar.sqrt();
    x_t.iter()
        .zip(v)
        .zip(&prior.mu)
        .map(|((x, vv), m)| (1.0 - c.alpha_bar) * vv + sab * x + (1.0 - sab) * m)
        .collect()
}

/// Posterior mean written through the unnormalized velocity.
pub fn mu_tilde_from_velocity(x_t: &[f64], v: &[f64], prior: &Decoded, c: &StepCoeffs) -> Vec<f64> {
    let sa = c.alpha.sqrt();
    let k = c.beta * c.alpha_bar_prev.sqrt();
    x_t.iter()
        .zip(v)
        .zip(&prior.mu)
        .map(|((x, vv), m)| sa * x + (1.0 - sa) * m + k * vv)
        .collect()
}

/// `(x - mu) / sigma`; exact forward draws follow the standard diffusion form here.
pub fn residual_coords(x: &[f64], prior: &Decoded) -> Vec<f64> {
    x.iter()
        .zip(&prior.mu)
        .map(|(v, m)| (v - m) / prior.sigma)
        .collect()
}

/// Squared Euclidean distance between target and prediction.
pub fn loss_simple(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Mean of [`loss_simple`] over paired rows.
pub fn loss_simple_batch(targets: &[Vec<f64>], preds: &[Vec<f64>]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    targets
        .iter()
        .zip(preds)
        .map(|(t, p)| loss_simple(t, p))
        .sum::<f64>()
        / targets.len() as f64
}

/// Likelihood weight on the squared noise error at step `c`.
pub fn eps_loss_weight(prior_sigma: f64, c: &StepCoeffs, sigma_min: f64) -> f64 {
    let s2 = prior_sigma * prior_sigma;
    if c.is_final() {
        c.beta * s2 / (2.0 * sigma_min * sigma_min * c.alpha)
    } else {
        let beta_tilde = posterior_variance(prior_sigma, c);
        c.beta.powi(2) * s2 / (2.0 * beta_tilde * c.alpha * (1.0 - c.alpha_bar))
    }
}

pub fn loss_weighted_eps(
    eps0: &[f64],
    pred: &[f64],
    prior_sigma: f64,
    c: &StepCoeffs,
    sigma_min: f64,
) -> f64 {
    eps_loss_weight(prior_sigma, c, sigma_min) * loss_simple(eps0, pred)
}

/// What the network predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction<'a> {
    Eps(&'a [f64]),
    V(&'a [f64]),
}

/// Deviation of the reverse step: the posterior deviation, or `sigma_min` at the last step.
pub fn reverse_sigma(prior_sigma: f64, c: &StepCoeffs, sigma_min: f64) -> f64 {
    if c.is_final() {
        sigma_min
    } else {
        posterior_variance(prior_sigma, c).sqrt()
    }
}

/// One ancestral step `x_{t-1} = mu_theta + sigma_t * noise`.
pub fn reverse_step(
    x_t: &[f64],
    prediction: Prediction<'_>,
    prior: &Decoded,
    c: &StepCoeffs,
    noise: &[f64],
    sigma_min: f64,
) -> Vec<f64> {
    let mean = match prediction {
        Prediction::Eps(e) => mu_from_eps(x_t, e, prior, c),
        Prediction::V(v) => mu_from_v(x_t, v, prior, c),
    };
    let s = reverse_sigma(prior.sigma, c, sigma_min);
    mean.iter().zip(noise).map(|(m, z)| m + s * z).collect()
}

/// `KL(N(m1, s1^2 I) || N(m2, s2^2 I))` in `m1.len()` dimensions.
pub fn kl_gaussians_isotropic(m1: &[f64], s1: f64, m2: &[f64], s2: f64) -> f64 {
    let n = m1.len() as f64;
    let sq: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    n * (s2 / s1).ln() + (n * s1 * s1 + sq) / (2.0 * s2 * s2) - 0.5 * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Schedule, StepSequence};

    fn dec(mu: &[f64], sigma: f64) -> Decoded {
        Decoded {
            mu: mu.to_vec(),
            sigma,
        }
    }

    fn coeffs(t: usize, alpha: f64, alpha_bar_prev: f64) -> StepCoeffs {
        StepCoeffs {
            t,
            alpha,
            beta: 1.0 - alpha,
            alpha_bar: alpha * alpha_bar_prev,
            alpha_bar_prev,
        }
    }

    #[test]
    fn forward_at_no_noise_is_identity() {
        let c = StepCoeffs {
            t: 0,
            alpha: 1.0,
            beta: 0.0,
            alpha_bar: 1.0,
            alpha_bar_prev: 1.0,
        };
        let x = forward_sample(&[0.3, -2.0], &[5.0, 7.0], &dec(&[1.0, 1.0], 3.0), &c);
        assert_eq!(x, vec![0.3, -2.0]);
        let (m, v) = marginal_params(&[0.3, -2.0], &dec(&[1.0, 1.0], 3.0), &c);
        assert_eq!((m, v), (vec![0.3, -2.0], 0.0));
    }

    #[test]
    fn forward_hand_value() {
        let c = StepCoeffs::from_alpha_bars(5, 0.5, 0.25);
        let x = forward_sample(&[1.0, 0.0], &[0.0, 1.0], &dec(&[0.0, 0.0], 1.0), &c);
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!((x[1] - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_end_concentrates_on_prior_mean() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let c = s.coeffs(200);
        let mu = [0.4, -0.7];
        let x0 = [3.0, 2.0];
        let x = forward_sample(&x0, &[0.0, 0.0], &dec(&mu, 0.5), &c);
        let resid = ((x0[0] - mu[0]).powi(2) + (x0[1] - mu[1]).powi(2)).sqrt();
        let dist = ((x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2)).sqrt();
        assert!(dist <= c.alpha_bar.sqrt() * resid + 1e-15);
    }

    #[test]
    fn posterior_variance_hand_value() {
        let c = coeffs(3, 0.9, 0.5);
        let p = posterior_params(&[0.0], &[0.0], &dec(&[0.0], 2.0), &c).unwrap();
        assert!((p.beta_tilde - 4.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn posterior_refuses_final_step() {
        let c = coeffs(1, 0.9, 1.0);
        assert!(posterior_params(&[0.0], &[0.0], &dec(&[0.0], 1.0), &c).is_err());
    }

    #[test]
    fn prior_mean_coefficient_completes_affine_weights() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        for t in 2..=200 {
            let (a, b, nu) = posterior_coefficients(&s.coeffs(t));
            assert!((a + b + nu - 1.0).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn trivial_prior_posterior_is_textbook() {
        let c = coeffs(4, 0.8, 0.6);
        let (xt, x0) = ([0.7, -0.1], [0.2, 0.4]);
        let p = posterior_params(&xt, &x0, &dec(&[0.0, 0.0], 1.0), &c).unwrap();
        for i in 0..2 {
            let want = (0.8f64.sqrt() * 0.4 * xt[i] + 0.2 * 0.6f64.sqrt() * x0[i]) / (1.0 - 0.48);
            assert!((p.mu_tilde[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_noise_prediction_mean() {
        let c = coeffs(4, 0.81, 0.6);
        let m = mu_from_eps(&[0.9, -1.8], &[0.0, 0.0], &dec(&[0.0, 0.0], 1.3), &c);
        assert!((m[0] - 1.0).abs() < 1e-14 && (m[1] + 2.0).abs() < 1e-14);
        let v = mu_from_v(&[0.9, -1.8], &[0.0, 0.0], &dec(&[1.0, 1.0], 1.3), &c);
        assert!((v[0] - (0.9 * 0.9 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn aux_vanishes_at_prior_mean() {
        let c = coeffs(4, 0.8, 0.6);
        let d = dec(&[0.3, 0.3], 0.7);
        assert_eq!(aux_eps(&[0.3, 0.3], &d, &c, 0.01), vec![0.0, 0.0]);
        assert_eq!(aux_v(&[0.3, 0.3], &d, &c, 0.01), vec![0.0, 0.0]);
    }

    #[test]
    fn aux_gap_hand_values() {
        let sigma = 1.7;
        let d = dec(&[0.0, 0.0], sigma);
        let x0 = [sigma, 0.0];
        for eps in [[0.3, -1.2], [2.0, 0.5]] {
            let c = StepCoeffs::from_alpha_bars(5, 0.9, 0.5);
            let xt = forward_sample(&x0, &eps, &d, &c);
            let w = aux_eps(&xt, &d, &c, 0.0);
            assert!((loss_simple(&eps, &w) - 1.0).abs() < 1e-12);

            let c = StepCoeffs::from_alpha_bars(5, 0.9, 0.75);
            let xt = forward_sample(&x0, &eps, &d, &c);
            let w = aux_v(&xt, &d, &c, 0.0);
            let vt = velocity_targets(&x0, &eps, &d, &c);
            assert!((loss_simple(&vt.v_hat, &w) - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_hand_value_and_recovery() {
        let c = StepCoeffs::from_alpha_bars(5, 0.9, 0.25);
        let sigma = 0.6;
        let mu = [0.1, -0.3];
        let u = [0.5, -1.0];
        let w = [1.5, 0.2];
        let x0 = [mu[0] + sigma * u[0], mu[1] + sigma * u[1]];
        let d = dec(&mu, sigma);
        let vt = velocity_targets(&x0, &w, &d, &c);
        for i in 0..2 {
            let want = 0.5 * w[i] - 0.75f64.sqrt() * u[i];
            assert!((vt.v_hat[i] - want).abs() < 1e-14);
            let linked = -(0.75f64).sqrt() * vt.v[i] / sigma;
            assert!((vt.v_hat[i] - linked).abs() < 1e-14);
        }
        let xt = forward_sample(&x0, &w, &d, &c);
        let back = x0_from_velocity(&xt, &vt.v, &d, &c);
        for i in 0..2 {
            assert!((back[i] - x0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_coordinates() {
        let d = dec(&[0.5, 0.5], 2.0);
        assert_eq!(residual_coords(&[0.5, 0.5], &d), vec![0.0, 0.0]);
        let t = dec(&[0.0, 0.0], 1.0);
        assert_eq!(residual_coords(&[0.25, -3.0], &t), vec![0.25, -3.0]);
    }

    #[test]
    fn simple_loss_values() {
        assert_eq!(loss_simple(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(loss_simple(&[1.0, 2.0], &[2.0, 2.0]), 1.0);
        let targets = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let preds = vec![vec![1.0, 0.0], vec![1.0, 3.0]];
        assert_eq!(loss_simple_batch(&targets, &preds), 2.5);
    }

    #[test]
    fn weighted_loss_hand_value() {
        let c = coeffs(3, 0.9, 0.5);
        let w = loss_weighted_eps(&[1.0, 0.0], &[0.0, 0.0], 2.0, &c, 1e-3);
        assert!((w - 1.0 / 9.0).abs() < 1e-14);
        let trivial = eps_loss_weight(1.0, &c, 1e-3);
        assert!((trivial - 0.1 / (2.0 * 0.9 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn final_step_uses_sigma_min() {
        let c = coeffs(1, 0.99, 1.0);
        for sigma in [0.3, 5.0] {
            assert_eq!(reverse_sigma(sigma, &c, 1e-3), 1e-3);
        }
        let out = reverse_step(
            &[0.0],
            Prediction::Eps(&[0.0]),
            &dec(&[0.0], 1.0),
            &c,
            &[1.0],
            1e-3,
        );
        assert!((out[0] - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn kl_values() {
        assert_eq!(
            kl_gaussians_isotropic(&[1.0, 2.0], 0.5, &[1.0, 2.0], 0.5),
            0.0
        );
        assert!((kl_gaussians_isotropic(&[0.0, 0.0], 1.0, &[1.0, 0.0], 1.0) - 0.5).abs() < 1e-15);
    }
}
