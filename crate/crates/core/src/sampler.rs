//! Ancestral generation from a trained predictor, with optional trajectory capture.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal as Gaussian;

use crate::diffusion::{reverse_step, Prediction, DEFAULT_SIGMA_MIN};
use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::predictor::{Mode, Predictor};
use crate::prior::{Decoded, Latent, PriorModel};
use crate::schedule::StepSequence;

/// Rows per network call.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    /// Must equal the mode the predictor was trained with.
    pub mode: Mode,
    pub count: usize,
    pub seed: u64,
    /// Deviation of the final reverse step.
    pub sigma_min: f64,
    pub record_trajectories: bool,
    /// Replaces every Gaussian draw (initial state and reverse noise) with zero.
    pub zero_noise: bool,
}

impl SampleConfig {
    pub fn new(mode: Mode, count: usize, seed: u64) -> Self {
        Self {
            mode,
            count,
            seed,
            sigma_min: DEFAULT_SIGMA_MIN,
            record_trajectories: false,
            zero_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    /// Final states, one row per sample.
    pub points: Tensor2,
    pub latents: Vec<Latent>,
    /// State after each reverse step, starting with the initial draw; `steps + 1` entries.
    pub trajectories: Option<Vec<Tensor2>>,
}

impl Samples {
    /// Columns: sample, step, x, y. Step 0 is the initial draw.
    pub fn write_trajectories_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "sample,step,x,y")?;
        let Some(traj) = &self.trajectories else {
            return Ok(());
        };
        for i in 0..self.points.rows() {
            for (step, states) in traj.iter().enumerate() {
                let row = states.row(i);
                writeln!(w, "{i},{step},{},{}", row[0], row[1])?;
            }
        }
        Ok(())
    }

    pub fn save_trajectories_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_trajectories_csv(&mut w)
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Independent random stream for sample `i`, so results do not depend on chunking.
fn sample_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn draw_noise(rng: &mut ChaCha8Rng, out: &mut [f64], zero: bool) {
    for v in out {
        *v = if zero { 0.0 } else { rng.sample(Gaussian) };
    }
}

/// Draws `z ~ p(z)` and `x_T ~ N(mu(z), sigma(z)^2 I)` for every sample.
pub fn sample_initial(prior: &dyn PriorModel, count: usize, seed: u64) -> (Tensor2, Vec<Latent>) {
    let mut rngs: Vec<ChaCha8Rng> = (0..count).map(|i| sample_rng(seed, i)).collect();
    let latents: Vec<Latent> = rngs.iter_mut().map(|r| prior.sample_z(r)).collect();
    let x = initial_states(prior, &latents, &mut rngs, false);
    (x, latents)
}

fn initial_states(
    prior: &dyn PriorModel,
    latents: &[Latent],
    rngs: &mut [ChaCha8Rng],
    zero: bool,
) -> Tensor2 {
    let dim = prior.dim();
    let mut x = Tensor2::zeros(latents.len(), dim);
    for (i, (z, rng)) in latents.iter().zip(rngs.iter_mut()).enumerate() {
        let d = prior.decode(*z);
        let row = x.row_mut(i);
        draw_noise(rng, row, zero);
        for (v, m) in row.iter_mut().zip(&d.mu) {
            *v = m + d.sigma * *v;
        }
    }
    x
}

/// Full reverse process with latents drawn from the prior.
pub fn generate(
    predictor: &Predictor,
    prior: &dyn PriorModel,
    steps: &dyn StepSequence,
    config: &SampleConfig,
) -> Result<Samples> {
    let mut rngs: Vec<ChaCha8Rng> = (0..config.count)
        .map(|i| sample_rng(config.seed, i))
        .collect();
    let latents: Vec<Latent> = rngs.iter_mut().map(|r| prior.sample_z(r)).collect();
    run(predictor, prior, steps, config, latents, rngs)
}

/// Reverse process with every sample sharing latent `z`; only the noise differs.
pub fn generate_fixed_z(
    predictor: &Predictor,
    prior: &dyn PriorModel,
    steps: &dyn StepSequence,
    z: Latent,
    config: &SampleConfig,
) -> Result<Samples> {
    if z.0 >= prior.num_latents() {
        return Err(Error::config(format!(
            "latent {} out of range (prior has {})",
            z.0,
            prior.num_latents()
        )));
    }
    let rngs: Vec<ChaCha8Rng> = (0..config.count)
        .map(|i| sample_rng(config.seed, i))
        .collect();
    run(predictor, prior, steps, config, vec![z; config.count], rngs)
}

fn check_compatible(
    predictor: &Predictor,
    prior: &dyn PriorModel,
    steps: &dyn StepSequence,
    config: &SampleConfig,
) -> Result<()> {
    if predictor.mode != config.mode {
        return Err(Error::config(format!(
            "predictor was trained as {} but sampling requested {}",
            predictor.mode, config.mode
        )));
    }
    let l = predictor.layout;
    if l.data_dim != prior.dim() || l.z_dim != prior.embedding_dim() {
        return Err(Error::config(format!(
            "predictor expects data dim {} and latent embedding {}, prior gives {} and {}",
            l.data_dim,
            l.z_dim,
            prior.dim(),
            prior.embedding_dim()
        )));
    }
    if steps.horizon() != predictor.horizon() {
        return Err(Error::config(format!(
            "step sequence horizon {} differs from the training horizon {}",
            steps.horizon(),
            predictor.horizon()
        )));
    }
    if steps.is_empty() {
        return Err(Error::config("step sequence is empty"));
    }
    Ok(())
}

fn run(
    predictor: &Predictor,
    prior: &dyn PriorModel,
    steps: &dyn StepSequence,
    config: &SampleConfig,
    latents: Vec<Latent>,
    mut rngs: Vec<ChaCha8Rng>,
) -> Result<Samples> {
    check_compatible(predictor, prior, steps, config)?;
    let count = config.count;
    let dim = prior.dim();
    let width = predictor.layout.width();
    let decoded: Vec<(Decoded, Vec<f64>)> = latents
        .iter()
        .map(|z| (prior.decode(*z), prior.z_embedding(*z)))
        .collect();

    let mut x = initial_states(prior, &latents, &mut rngs, config.zero_noise);
    let mut trajectories = config.record_trajectories.then(|| vec![x.clone()]);
    let mut noise = vec![0.0; dim];

    for position in (1..=steps.len()).rev() {
        let c = steps.coeffs(position);
        let mut next = Tensor2::zeros(count, dim);
        for start in (0..count).step_by(CHUNK) {
            let end = (start + CHUNK).min(count);
            let mut inputs = Tensor2::zeros(end - start, width);
            for (j, (d, emb)) in decoded[start..end].iter().enumerate() {
                predictor.write_input(x.row(start + j), &c, emb, d, inputs.row_mut(j))?;
            }
            let out = predictor.net.forward(&inputs)?;
            for i in start..end {
                let (d, _) = &decoded[i];
                let pred = out.row(i - start);
                let prediction = if config.mode.predicts_velocity() {
                    Prediction::V(pred)
                } else {
                    Prediction::Eps(pred)
                };
                draw_noise(&mut rngs[i], &mut noise, config.zero_noise);
                let stepped = reverse_step(x.row(i), prediction, d, &c, &noise, config.sigma_min);
                next.row_mut(i).copy_from_slice(&stepped);
            }
        }
        x = next;
        if let Some(t) = trajectories.as_mut() {
            t.push(x.clone());
        }
    }
    Ok(Samples {
        points: x,
        latents,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, Mlp};
    use crate::predictor::AuxInput;
    use crate::prior::{GaussianMixture, StandardNormal};
    use crate::schedule::{Schedule, ScheduleSpec};

    fn predictor(mode: Mode, aux: AuxInput, z_dim: usize, seed: u64) -> Predictor {
        Predictor::new(
            mode,
            aux,
            0.01,
            ScheduleSpec::log_linear_default(),
            2,
            z_dim,
            16,
            &[16, 16],
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    fn zero_predictor(mode: Mode) -> Predictor {
        let mut p = predictor(mode, AuxInput::None, 0, 0);
        let layers: Vec<Dense> = p
            .net
            .layers()
            .iter()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect();
        p.net = Mlp::from_layers(layers, Activation::Gelu).unwrap();
        p
    }

    fn schedule() -> Schedule {
        ScheduleSpec::log_linear_default().build().unwrap()
    }

    #[test]
    fn zero_predictor_without_noise_follows_closed_form() {
        let p = zero_predictor(Mode::Ddpm);
        let prior = StandardNormal::new(2);
        let s = schedule();
        let mut cfg = SampleConfig::new(Mode::Ddpm, 3, 1);
        cfg.zero_noise = true;
        cfg.record_trajectories = true;
        // with zero noise x_T = 0 and the recursion stays at 0; start elsewhere instead
        let out = generate(&p, &prior, &s, &cfg).unwrap();
        assert!(out.points.as_slice().iter().all(|v| *v == 0.0));

        let mut x = vec![0.3, -0.2];
        let d = Decoded {
            mu: vec![0.0, 0.0],
            sigma: 1.0,
        };
        let mut expected = x.clone();
        for t in (1..=s.steps()).rev() {
            let c = s.step(t).unwrap();
            x = reverse_step(&x, Prediction::Eps(&[0.0, 0.0]), &d, &c, &[0.0, 0.0], 1e-3);
            for e in expected.iter_mut() {
                *e /= c.alpha.sqrt();
            }
            for (a, b) in x.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
        assert!(x[0].abs() > 0.3 * 10.0, "norm should grow: {x:?}");
    }

    #[test]
    fn zero_count_is_empty() {
        let p = predictor(Mode::Ddpm, AuxInput::None, 0, 0);
        let out = generate(
            &p,
            &StandardNormal::new(2),
            &schedule(),
            &SampleConfig::new(Mode::Ddpm, 0, 0),
        )
        .unwrap();
        assert_eq!(out.points.rows(), 0);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let p = predictor(Mode::RpdEps, AuxInput::Omega, 2, 3);
        let prior = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![-1.0, 0.0], vec![2.0, 1.0]],
            vec![0.2, 0.4],
        )
        .unwrap();
        let cfg = SampleConfig::new(Mode::RpdEps, 20, 9);
        let reduced = schedule().reduce(10).unwrap();
        let a = generate(&p, &prior, &reduced, &cfg).unwrap();
        let b = generate(&p, &prior, &reduced, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn samples_do_not_depend_on_count() {
        let p = predictor(Mode::RpdV, AuxInput::Omega, 2, 4);
        let prior = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.0], vec![1.0, 1.0]],
            vec![0.3, 0.3],
        )
        .unwrap();
        let reduced = schedule().reduce(5).unwrap();
        let few = generate(&p, &prior, &reduced, &SampleConfig::new(Mode::RpdV, 3, 2)).unwrap();
        let many = generate(&p, &prior, &reduced, &SampleConfig::new(Mode::RpdV, 7, 2)).unwrap();
        assert_eq!(few.points.as_slice(), &many.points.as_slice()[..6]);
    }

    #[test]
    fn full_reduction_matches_parent_schedule() {
        let p = predictor(Mode::Ddpm, AuxInput::None, 0, 5);
        let prior = StandardNormal::new(2);
        let s = schedule();
        let cfg = SampleConfig::new(Mode::Ddpm, 16, 11);
        let a = generate(&p, &prior, &s, &cfg).unwrap();
        let b = generate(&p, &prior, &s.reduce(s.steps()).unwrap(), &cfg).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn trajectory_length_is_steps_plus_one() {
        let p = predictor(Mode::Ddpm, AuxInput::None, 0, 6);
        let mut cfg = SampleConfig::new(Mode::Ddpm, 4, 0);
        cfg.record_trajectories = true;
        let reduced = schedule().reduce(7).unwrap();
        let out = generate(&p, &StandardNormal::new(2), &reduced, &cfg).unwrap();
        let traj = out.trajectories.as_ref().unwrap();
        assert_eq!(traj.len(), 8);
        assert_eq!(traj.last().unwrap(), &out.points);
        let mut buf = Vec::new();
        out.write_trajectories_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 8);
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let p = predictor(Mode::Ddpm, AuxInput::None, 0, 0);
        let r = generate(
            &p,
            &StandardNormal::new(2),
            &schedule(),
            &SampleConfig::new(Mode::Vpred, 1, 0),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn embedding_mismatch_is_config_error() {
        let p = predictor(Mode::RpdEps, AuxInput::Omega, 2, 0);
        let r = generate(
            &p,
            &StandardNormal::new(2),
            &schedule(),
            &SampleConfig::new(Mode::RpdEps, 1, 0),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn fixed_component_without_noise_gives_identical_samples() {
        let p = predictor(Mode::RpdEps, AuxInput::Omega, 2, 7);
        let prior = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.0], vec![1.0, 1.0]],
            vec![0.3, 0.3],
        )
        .unwrap();
        let mut cfg = SampleConfig::new(Mode::RpdEps, 5, 1);
        cfg.zero_noise = true;
        let out = generate_fixed_z(&p, &prior, &schedule(), Latent(1), &cfg).unwrap();
        for i in 1..5 {
            assert_eq!(out.points.row(i), out.points.row(0));
        }
        assert!(generate_fixed_z(&p, &prior, &schedule(), Latent(2), &cfg).is_err());
    }

    #[test]
    fn trivial_prior_fixed_z_matches_generate() {
        let p = predictor(Mode::Vpred, AuxInput::None, 0, 8);
        let prior = StandardNormal::new(2);
        let cfg = SampleConfig::new(Mode::Vpred, 6, 4);
        let s = schedule().reduce(20).unwrap();
        let a = generate(&p, &prior, &s, &cfg).unwrap();
        let b = generate_fixed_z(&p, &prior, &s, Latent(0), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
