//! Randomized numerical checks of the closed-form diffusion identities and of the
//! network gradients. Everything is seeded, so a report is reproducible.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal as Gaussian;

use crate::diffusion::{
    aux_eps, aux_v, forward_sample, kl_gaussians_isotropic, marginal_params, mu_from_eps,
    mu_from_v, posterior_params, residual_coords, reverse_step, step_kernel, velocity_targets,
    Prediction,
};
use crate::error::Result;
use crate::nn::{Activation, Mlp, Tensor2};
use crate::prior::Decoded;
use crate::schedule::{Schedule, ScheduleSpec, StepCoeffs, StepSequence};

/// Signature of a reverse-mean function, swappable so the checks can be exercised on
/// deliberately broken implementations.
pub type MeanFromNoise = fn(&[f64], &[f64], &Decoded, &StepCoeffs) -> Vec<f64>;

/// Largest residual, in prior deviations, covered by the terminal KL check.
pub const KL_RESIDUAL_BOUND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub max_error: f64,
    pub status: Status,
}

impl Check {
    fn measured(name: &str, tolerance: f64, max_error: f64) -> Self {
        let status = if max_error <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.to_string(),
            tolerance,
            max_error,
            status,
        }
    }

    fn skipped(name: &str, tolerance: f64, reason: &str) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            max_error: f64::NAN,
            status: Status::Skipped(reason.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for c in &self.checks {
            match &c.status {
                Status::Pass => writeln!(
                    w,
                    "PASS  {:<44} max error {:.3e} (tolerance {:.0e})",
                    c.name, c.max_error, c.tolerance
                )?,
                Status::Fail => writeln!(
                    w,
                    "FAIL  {:<44} max error {:.3e} (tolerance {:.0e})",
                    c.name, c.max_error, c.tolerance
                )?,
                Status::Skipped(why) => writeln!(w, "SKIP  {:<44} {why}", c.name)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Verifier {
    pub seed: u64,
    /// Random draws per identity.
    pub draws: usize,
    /// Stabilizer used for the auxiliary inputs; the exact identities need 0.
    pub delta: f64,
    pub mu_from_eps: MeanFromNoise,
}

impl Default for Verifier {
    fn default() -> Self {
        Self {
            seed: 0,
            draws: 10_000,
            delta: 0.0,
            mu_from_eps,
        }
    }
}

/// One random state of the forward process.
struct Draw {
    x0: Vec<f64>,
    prior: Decoded,
    c: StepCoeffs,
    eps: Vec<f64>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(Gaussian)).collect()
}

fn draw(rng: &mut ChaCha8Rng, schedule: &Schedule, dim: usize, min_t: usize) -> Draw {
    let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sigma = rng.random_range(0.1..2.0);
    let r = gaussian_vec(rng, dim);
    let x0 = mu.iter().zip(&r).map(|(m, v)| m + sigma * v).collect();
    let t = rng.random_range(min_t..=schedule.steps());
    Draw {
        x0,
        prior: Decoded { mu, sigma },
        c: schedule.coeffs(t),
        eps: gaussian_vec(rng, dim),
    }
}

fn sq_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

impl Verifier {
    pub fn run(&self) -> Result<Report> {
        let schedule = ScheduleSpec::log_linear_default().build()?;
        let mut report = Report::default();
        let checks = [
            Self::noise_aux_gap as fn(&Self, &Schedule, &mut ChaCha8Rng) -> Check,
            Self::velocity_aux_gap,
            Self::noise_mean,
            Self::velocity_mean,
            Self::composed_marginal,
            Self::posterior_quadrature,
            Self::residual_forward,
            Self::textbook_reduction,
            Self::terminal_kl,
            Self::telescoping,
            Self::mlp_gradients,
        ];
        for (i, check) in checks.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(i as u64);
            report.checks.push(check(self, &schedule, &mut rng));
        }
        Ok(report)
    }

    fn noise_aux_gap(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let name = "eps - omega_eps vs residual";
        if self.delta > 0.0 {
            return Check::skipped(name, 1e-9, "stabilized, skipped");
        }
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws {
            let d = draw(rng, schedule, 2, 1);
            let x_t = forward_sample(&d.x0, &d.eps, &d.prior, &d.c);
            let omega = aux_eps(&x_t, &d.prior, &d.c, 0.0);
            let lhs = sq_norm_diff(&d.eps, &omega);
            let rhs = d.c.alpha_bar * sq_norm_diff(&d.x0, &d.prior.mu)
                / ((1.0 - d.c.alpha_bar) * d.prior.sigma * d.prior.sigma);
            worst = worst.max((lhs - rhs).abs());
        }
        Check::measured(name, 1e-9, worst)
    }

    fn velocity_aux_gap(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let name = "v_hat - omega_v vs residual";
        if self.delta > 0.0 {
            return Check::skipped(name, 1e-9, "stabilized, skipped");
        }
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws {
            let d = draw(rng, schedule, 2, 1);
            let x_t = forward_sample(&d.x0, &d.eps, &d.prior, &d.c);
            let omega = aux_v(&x_t, &d.prior, &d.c, 0.0);
            let v_hat = velocity_targets(&d.x0, &d.eps, &d.prior, &d.c).v_hat;
            let lhs = sq_norm_diff(&v_hat, &omega);
            let rhs = sq_norm_diff(&d.x0, &d.prior.mu)
                / ((1.0 - d.c.alpha_bar) * d.prior.sigma * d.prior.sigma);
            worst = worst.max((lhs - rhs).abs());
        }
        Check::measured(name, 1e-9, worst)
    }

    fn noise_mean(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws {
            let d = draw(rng, schedule, 2, 2);
            let x_t = forward_sample(&d.x0, &d.eps, &d.prior, &d.c);
            let post = posterior_params(&x_t, &d.x0, &d.prior, &d.c).expect("t >= 2");
            let mean = (self.mu_from_eps)(&x_t, &d.eps, &d.prior, &d.c);
            worst = worst.max(max_abs_diff(&mean, &post.mu_tilde));
        }
        Check::measured("mu_from_eps vs mu_tilde", 1e-10, worst)
    }

    fn velocity_mean(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws {
            let d = draw(rng, schedule, 2, 2);
            let x_t = forward_sample(&d.x0, &d.eps, &d.prior, &d.c);
            let post = posterior_params(&x_t, &d.x0, &d.prior, &d.c).expect("t >= 2");
            let v_hat = velocity_targets(&d.x0, &d.eps, &d.prior, &d.c).v_hat;
            let mean = mu_from_v(&x_t, &v_hat, &d.prior, &d.c);
            worst = worst.max(max_abs_diff(&mean, &post.mu_tilde));
        }
        Check::measured("mu_from_v vs mu_tilde", 1e-10, worst)
    }

    /// Pushes the mean and variance through the one-step kernels and compares with
    /// the closed-form marginal at every step.
    fn composed_marginal(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws.div_ceil(200).max(1) {
            let d = draw(rng, schedule, 2, 1);
            let mut mean = d.x0.clone();
            let mut var = 0.0;
            for t in 1..=schedule.steps() {
                let c = schedule.coeffs(t);
                let (m, kernel_var) = step_kernel(&mean, &d.prior, &c);
                mean = m;
                var = c.alpha * var + kernel_var;
                let (closed_mean, closed_var) = marginal_params(&d.x0, &d.prior, &c);
                for (a, b) in mean.iter().zip(&closed_mean) {
                    worst = worst.max((a - b).abs() / b.abs().max(1e-300));
                }
                worst = worst.max((var - closed_var).abs() / closed_var);
            }
        }
        Check::measured("marginal vs composed kernels", 1e-10, worst)
    }

    /// Mean and variance of the normalized product of the step kernel and the
    /// previous marginal, by Simpson quadrature in one dimension.
    fn posterior_quadrature(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let d = draw(rng, schedule, 1, 2);
            let prev = schedule.coeffs(d.c.t - 1);
            let (m_prev, v_prev) = marginal_params(&d.x0, &d.prior, &prev);
            let x_prev = m_prev[0] + v_prev.sqrt() * rng.sample::<f64, _>(Gaussian);
            let (m_k, v_k) = step_kernel(&[x_prev], &d.prior, &d.c);
            let x_t = m_k[0] + v_k.sqrt() * rng.sample::<f64, _>(Gaussian);

            let sa = d.c.alpha.sqrt();
            let width = v_prev.sqrt().min(v_k.sqrt() / sa);
            let log_weight = |x: f64| {
                let k = x_t - (sa * x + (1.0 - sa) * d.prior.mu[0]);
                let p = x - m_prev[0];
                -k * k / (2.0 * v_k) - p * p / (2.0 * v_prev)
            };
            let (mean, var) = simpson_moments(
                log_weight,
                x_prev - 14.0 * width,
                x_prev + 14.0 * width,
                8000,
            );
            let post = posterior_params(&[x_t], &d.x0, &d.prior, &d.c).expect("t >= 2");
            worst = worst
                .max((mean - post.mu_tilde[0]).abs() / width)
                .max((var - post.beta_tilde).abs() / post.beta_tilde);
        }
        Check::measured("posterior vs Gaussian product quadrature", 1e-6, worst)
    }

    fn residual_forward(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for _ in 0..self.draws {
            let d = draw(rng, schedule, 2, 1);
            let x_t = forward_sample(&d.x0, &d.eps, &d.prior, &d.c);
            let y_t = residual_coords(&x_t, &d.prior);
            let y0 = residual_coords(&d.x0, &d.prior);
            let standard: Vec<f64> = y0
                .iter()
                .zip(&d.eps)
                .map(|(y, e)| d.c.alpha_bar.sqrt() * y + (1.0 - d.c.alpha_bar).sqrt() * e)
                .collect();
            worst = worst.max(max_abs_diff(&y_t, &standard));
        }
        Check::measured("residual coordinates forward form", 1e-12, worst)
    }

    /// Standard normal prior against the usual zero-mean, unit-variance formulas,
    /// compared bit for bit.
    fn textbook_reduction(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let prior = Decoded {
            mu: vec![0.0; 2],
            sigma: 1.0,
        };
        let mut mismatches = 0usize;
        for _ in 0..self.draws {
            let t = rng.random_range(2..=schedule.steps());
            let (ab, ab_prev, alpha, beta) = (
                schedule.alpha_bar(t),
                schedule.alpha_bar(t - 1),
                schedule.alpha(t),
                schedule.beta(t),
            );
            let c = schedule.coeffs(t);
            let x0 = gaussian_vec(rng, 2);
            let eps = gaussian_vec(rng, 2);
            let z = gaussian_vec(rng, 2);

            let x_t = forward_sample(&x0, &eps, &prior, &c);
            let ref_x_t: Vec<f64> = x0
                .iter()
                .zip(&eps)
                .map(|(x, e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e)
                .collect();

            let post = posterior_params(&x_t, &x0, &prior, &c).expect("t >= 2");
            let coef_x0 = beta * ab_prev.sqrt() / (1.0 - ab);
            let coef_xt = (1.0 - ab_prev) * alpha.sqrt() / (1.0 - ab);
            let ref_mean: Vec<f64> = x0
                .iter()
                .zip(&ref_x_t)
                .map(|(x, xt)| coef_x0 * x + coef_xt * xt)
                .collect();
            let ref_var = beta * (1.0 - ab_prev) / (1.0 - ab);

            let step = reverse_step(&x_t, Prediction::Eps(&eps), &prior, &c, &z, 1e-3);
            let ref_step: Vec<f64> = ref_x_t
                .iter()
                .zip(&eps)
                .zip(&z)
                .map(|((x, e), n)| {
                    (x - beta / (1.0 - ab).sqrt() * e) / alpha.sqrt() + ref_var.sqrt() * n
                })
                .collect();

            if x_t != ref_x_t
                || post.mu_tilde != ref_mean
                || post.beta_tilde != ref_var
                || step != ref_step
            {
                mismatches += 1;
            }
        }
        Check::measured("trivial prior vs textbook DDPM", 0.0, mismatches as f64)
    }

    fn terminal_kl(&self, schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let name = "terminal KL certificate";
        let last = schedule.coeffs(schedule.steps());
        if last.alpha_bar > 1.1e-4 {
            return Check::measured(name, 1e-3, f64::INFINITY);
        }
        let mut worst: f64 = 0.0;
        for k in 0..self.draws {
            let d = draw(rng, schedule, 2, 1);
            // directions are random; radii sweep up to the bound, endpoint included
            let dir = gaussian_vec(rng, 2);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = KL_RESIDUAL_BOUND * d.prior.sigma * (k % 101) as f64 / 100.0;
            let x0: Vec<f64> = d
                .prior
                .mu
                .iter()
                .zip(&dir)
                .map(|(m, v)| m + radius * v / norm)
                .collect();
            let (mean, var) = marginal_params(&x0, &d.prior, &last);
            worst = worst.max(kl_gaussians_isotropic(
                &mean,
                var.sqrt(),
                &d.prior.mu,
                d.prior.sigma,
            ));
        }
        Check::measured(name, 1e-3, worst)
    }

    fn telescoping(&self, schedule: &Schedule, _rng: &mut ChaCha8Rng) -> Check {
        let mut worst: f64 = 0.0;
        for count in [3, 10, 50, schedule.steps()] {
            let reduced = schedule.reduce(count).expect("count within range");
            let mut product = 1.0;
            for position in 1..=reduced.len() {
                product *= reduced.effective_alpha(position);
                let target = schedule.alpha_bar(reduced.kept()[position - 1]);
                worst = worst.max((product - target).abs() / target);
            }
        }
        Check::measured("reduced schedule telescoping", 1e-12, worst)
    }

    fn mlp_gradients(&self, _schedule: &Schedule, rng: &mut ChaCha8Rng) -> Check {
        let worst = (0..5).map(|_| mlp_gradient_error(rng)).fold(0.0, f64::max);
        Check::measured("mlp gradient vs finite differences", 1e-4, worst)
    }
}

/// Largest relative gap between backpropagated and central-difference gradients of
/// `sum(w * net(x))` on a random 8x8 instance.
pub fn mlp_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let mut net = Mlp::new(8, &[8, 8], 8, Activation::Gelu, rng).expect("valid widths");
    let x = Tensor2::from_vec(8, 8, gaussian_vec(rng, 64)).expect("shape");
    let w = Tensor2::from_vec(8, 8, gaussian_vec(rng, 64)).expect("shape");
    let objective = |net: &Mlp| -> f64 {
        let out = net.forward(&x).expect("shape");
        out.as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };
    net.forward_train(&x).expect("shape");
    let grads = net.backward(&w).expect("trace recorded");
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (block, grad) in analytic.iter().enumerate() {
        for (i, g) in grad.iter().enumerate() {
            let original = net.params()[block][i];
            net.params_mut()[block][i] = original + h;
            let up = objective(&net);
            net.params_mut()[block][i] = original - h;
            let down = objective(&net);
            net.params_mut()[block][i] = original;
            let numeric = (up - down) / (2.0 * h);
            let scale = g.abs().max(numeric.abs());
            let err = if scale < 1e-6 {
                (g - numeric).abs()
            } else {
                (g - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// Mean and variance of the density proportional to `exp(log_weight)` on `[lo, hi]`.
fn simpson_moments(
    log_weight: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    intervals: usize,
) -> (f64, f64) {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let logs: Vec<f64> = xs.iter().map(|&x| log_weight(x)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1) = (0.0, 0.0);
    let mut weights = Vec::with_capacity(n + 1);
    for (i, (&x, &l)) in xs.iter().zip(&logs).enumerate() {
        let k = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let wgt = k * (l - top).exp();
        weights.push(wgt);
        z += wgt;
        m1 += wgt * x;
    }
    let mean = m1 / z;
    let var = xs
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / z;
    (mean, var)
}
