//! Training loops for noise- and velocity-prediction with a fixed prior.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal as Gaussian;

use crate::diffusion::{forward_sample, velocity_targets};
use crate::error::{Error, Result};
use crate::nn::{Adam, Tensor2};
use crate::predictor::{AuxInput, Mode, Predictor, DEFAULT_HIDDEN, DEFAULT_TIME_DIM};
use crate::prior::{Decoded, Latent, PriorModel, StandardNormal};
use crate::schedule::ScheduleSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    pub aux: AuxInput,
    pub delta: f64,
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    /// Iterations per [`LogRecord`].
    pub log_interval: usize,
    /// Where periodic and last-good checkpoints go.
    pub checkpoint_dir: Option<PathBuf>,
    /// 0 disables periodic checkpoints.
    pub checkpoint_interval: usize,
}

impl TrainConfig {
    /// Full-length 2D setup: 60000 iterations for the residual modes, 120000 for baselines.
    pub fn full(mode: Mode) -> Self {
        let iterations = if mode.is_baseline() { 120_000 } else { 60_000 };
        Self::with_iterations(mode, iterations)
    }

    /// Shortened setup for quick comparisons: 8000 / 16000 iterations.
    pub fn desk(mode: Mode) -> Self {
        let iterations = if mode.is_baseline() { 16_000 } else { 8_000 };
        Self::with_iterations(mode, iterations)
    }

    fn with_iterations(mode: Mode, iterations: usize) -> Self {
        Self {
            mode,
            iterations,
            batch: 1278,
            learning_rate: 1e-3,
            seed: 0,
            schedule: ScheduleSpec::log_linear_default(),
            aux: if mode.is_baseline() {
                AuxInput::None
            } else {
                AuxInput::Omega
            },
            delta: crate::diffusion::DEFAULT_DELTA,
            hidden: DEFAULT_HIDDEN.to_vec(),
            time_dim: DEFAULT_TIME_DIM,
            log_interval: 100,
            checkpoint_dir: None,
            checkpoint_interval: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.log_interval == 0 {
            return Err(Error::config("log interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    /// Mean loss over the iterations since the previous record.
    pub loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Batch loss at every iteration, index 0 is iteration 1.
    pub losses: Vec<f64>,
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// Mean loss over iterations `from..=to` (1-based, inclusive).
    pub fn mean_loss(&self, from: usize, to: usize) -> Option<f64> {
        if from == 0 || from > to || to > self.losses.len() {
            return None;
        }
        let window = &self.losses[from - 1..to];
        Some(window.iter().sum::<f64>() / window.len() as f64)
    }

    /// Columns: iteration, loss, wall_seconds.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "iteration,loss,wall_seconds")?;
        for r in &self.records {
            writeln!(w, "{},{},{:.3}", r.iteration, r.loss, r.wall_seconds)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-latent decoder outputs, filled on first use.
struct LatentCache {
    decoded: Vec<Option<(Decoded, Vec<f64>)>>,
}

impl LatentCache {
    fn new(prior: &dyn PriorModel) -> Self {
        Self {
            decoded: vec![None; prior.num_latents()],
        }
    }

    fn get(&mut self, prior: &dyn PriorModel, z: Latent) -> &(Decoded, Vec<f64>) {
        self.decoded[z.0].get_or_insert_with(|| (prior.decode(z), prior.z_embedding(z)))
    }
}

/// Cycles through reshuffled permutations of the data indices.
struct BatchCursor {
    order: Vec<usize>,
    next: usize,
}

impl BatchCursor {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            next: n,
        }
    }

    fn fill<R: Rng>(&mut self, out: &mut [usize], rng: &mut R) {
        for slot in out {
            if self.next == self.order.len() {
                self.order.shuffle(rng);
                self.next = 0;
            }
            *slot = self.order[self.next];
            self.next += 1;
        }
    }
}

/// Trains a fresh predictor on rows of `data` against a fixed prior.
pub fn train(
    data: &Tensor2,
    prior: &dyn PriorModel,
    config: &TrainConfig,
) -> Result<(Predictor, TrainLog)> {
    train_observed(data, prior, config, &mut |_| {})
}

/// Baseline run on the standard normal prior with no latent or auxiliary inputs.
pub fn train_baseline(data: &Tensor2, config: &TrainConfig) -> Result<(Predictor, TrainLog)> {
    if !config.mode.is_baseline() {
        return Err(Error::config(format!(
            "baseline training needs mode ddpm or vpred, got {}",
            config.mode
        )));
    }
    train(data, &StandardNormal::new(data.cols()), config)
}

/// As [`train`], calling `observer` with every log record as it is produced.
pub fn train_observed(
    data: &Tensor2,
    prior: &dyn PriorModel,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<(Predictor, TrainLog)> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(Error::config("training data is empty"));
    }
    if data.cols() != prior.dim() {
        return Err(Error::config(format!(
            "data has {} columns but the prior models {} dimensions",
            data.cols(),
            prior.dim()
        )));
    }
    let schedule = config.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut predictor = Predictor::new(
        config.mode,
        config.aux,
        config.delta,
        config.schedule,
        data.cols(),
        prior.embedding_dim(),
        config.time_dim,
        &config.hidden,
        &mut rng,
    )?;
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let dim = data.cols();
    let width = predictor.layout.width();
    let batch = config.batch;
    let horizon = schedule.steps();
    let velocity = config.mode.predicts_velocity();

    let mut adam = Adam::new(config.learning_rate);
    let mut cache = LatentCache::new(prior);
    let mut cursor = BatchCursor::new(data.rows());
    let mut picks = vec![0usize; batch];
    let mut x0_batch = Tensor2::zeros(batch, dim);
    let mut inputs = Tensor2::zeros(batch, width);
    let mut targets = Tensor2::zeros(batch, dim);
    let mut eps = vec![0.0; dim];
    let mut log = TrainLog::default();
    let mut interval_sum = 0.0;
    let start = Instant::now();

    for iteration in 1..=config.iterations {
        cursor.fill(&mut picks, &mut rng);
        for (r, &i) in picks.iter().enumerate() {
            x0_batch.row_mut(r).copy_from_slice(data.row(i));
        }
        let latents = prior.posterior_batch(&x0_batch, &mut rng);
        for (r, z) in latents.into_iter().enumerate() {
            let t = rng.random_range(1..=horizon);
            for e in eps.iter_mut() {
                *e = rng.sample(Gaussian);
            }
            let c = schedule.step(t)?;
            let (decoded, embedding) = cache.get(prior, z);
            let x0 = x0_batch.row(r);
            let x_t = forward_sample(x0, &eps, decoded, &c);
            predictor.write_input(&x_t, &c, embedding, decoded, inputs.row_mut(r))?;
            if velocity {
                let v = velocity_targets(x0, &eps, decoded, &c);
                targets.row_mut(r).copy_from_slice(&v.v_hat);
            } else {
                targets.row_mut(r).copy_from_slice(&eps);
            }
        }

        let preds = predictor.net.forward_train(&inputs)?;
        let mut upstream = Tensor2::zeros(batch, dim);
        let mut sq = 0.0;
        let scale = 2.0 / batch as f64;
        for ((g, p), y) in upstream
            .as_mut_slice()
            .iter_mut()
            .zip(preds.as_slice())
            .zip(targets.as_slice())
        {
            let d = p - y;
            sq += d * d;
            *g = scale * d;
        }
        let loss = sq / batch as f64;
        let grads = predictor.net.backward(&upstream)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(abort(&predictor, config, iteration, loss));
        }
        adam.step(predictor.net.params_mut(), &grads.slices())
            .map_err(|_| abort(&predictor, config, iteration, loss))?;

        log.losses.push(loss);
        interval_sum += loss;
        let since = iteration - log.records.last().map_or(0, |r| r.iteration);
        if since == config.log_interval || iteration == config.iterations {
            let record = LogRecord {
                iteration,
                loss: interval_sum / since as f64,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            observer(&record);
            log.records.push(record);
            interval_sum = 0.0;
        }
        if let Some(dir) = &config.checkpoint_dir {
            if config.checkpoint_interval > 0 && iteration % config.checkpoint_interval == 0 {
                predictor.save(&dir.join(format!("predictor-{iteration:06}.txt")))?;
            }
        }
    }
    Ok((predictor, log))
}

/// Builds the training error, saving the pre-step parameters when a checkpoint directory is set.
fn abort(predictor: &Predictor, config: &TrainConfig, iteration: usize, loss: f64) -> Error {
    let mut message = format!("non-finite loss or gradient (loss = {loss})");
    if let Some(dir) = &config.checkpoint_dir {
        let path = dir.join("last-good.txt");
        match predictor.save(&path) {
            Ok(()) => message.push_str(&format!(
                "; last good parameters saved to {}",
                path.display()
            )),
            Err(e) => message.push_str(&format!("; saving last good parameters failed: {e}")),
        }
    }
    Error::Training { iteration, message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::GaussianMixture;

    fn small(mode: Mode, iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch: 64,
            hidden: vec![32, 32],
            log_interval: 50,
            ..TrainConfig::desk(mode)
        }
    }

    fn cloud(n: usize, seed: u64) -> Tensor2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..2 * n)
            .map(|_| rng.sample::<f64, _>(Gaussian) * 0.5 + 1.0)
            .collect();
        Tensor2::from_vec(n, 2, v).unwrap()
    }

    fn point_prior(p: [f64; 2]) -> GaussianMixture {
        GaussianMixture::new(vec![1.0], vec![p.to_vec()], vec![0.5]).unwrap()
    }

    #[test]
    fn zero_iterations_returns_initial_network() {
        let data = cloud(10, 0);
        let cfg = small(Mode::Ddpm, 0);
        let (p, log) = train_baseline(&data, &cfg).unwrap();
        let fresh = Predictor::new(
            Mode::Ddpm,
            AuxInput::None,
            cfg.delta,
            cfg.schedule,
            2,
            0,
            cfg.time_dim,
            &cfg.hidden,
            &mut ChaCha8Rng::seed_from_u64(cfg.seed),
        )
        .unwrap();
        assert_eq!(p, fresh);
        assert!(log.losses.is_empty() && log.records.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = cloud(50, 1);
        let prior = point_prior([1.0, 1.0]);
        let cfg = small(Mode::RpdV, 30);
        let (a, la) = train(&data, &prior, &cfg).unwrap();
        let (b, lb) = train(&data, &prior, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.losses, lb.losses);
    }

    #[test]
    fn residual_eps_on_trivial_prior_matches_ddpm() {
        let data = cloud(40, 2);
        let ddpm = small(Mode::Ddpm, 20);
        let rpd = TrainConfig {
            mode: Mode::RpdEps,
            aux: AuxInput::None,
            ..ddpm.clone()
        };
        let (_, a) = train_baseline(&data, &ddpm).unwrap();
        let (_, b) = train(&data, &StandardNormal::new(2), &rpd).unwrap();
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn velocity_baseline_matches_residual_velocity_on_trivial_prior() {
        let data = cloud(40, 3);
        let vpred = small(Mode::Vpred, 20);
        let rpd = TrainConfig {
            mode: Mode::RpdV,
            aux: AuxInput::None,
            ..vpred.clone()
        };
        let (_, a) = train_baseline(&data, &vpred).unwrap();
        let (_, b) = train(&data, &StandardNormal::new(2), &rpd).unwrap();
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn records_are_increasing_and_nonnegative() {
        let data = cloud(30, 4);
        let cfg = small(Mode::Ddpm, 120);
        let (_, log) = train_baseline(&data, &cfg).unwrap();
        let its: Vec<usize> = log.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![50, 100, 120]);
        assert!(log.losses.iter().all(|l| *l >= 0.0));
        let last = log.mean_loss(101, 120).unwrap();
        assert!((log.records[2].loss - last).abs() < 1e-12);
    }

    #[test]
    fn baseline_rejects_residual_mode() {
        let data = cloud(5, 5);
        assert!(matches!(
            train_baseline(&data, &small(Mode::RpdEps, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prior_embedding_on_baseline_mode_is_config_error() {
        let data = cloud(5, 6);
        let prior = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(train(&data, &prior, &small(Mode::Ddpm, 1)).is_err());
    }

    fn zero_residual_run(mode: Mode) -> f64 {
        let p = [0.7, -0.3];
        let data = Tensor2::from_rows(&[p.to_vec()]).unwrap();
        let cfg = TrainConfig {
            iterations: 2000,
            batch: 128,
            hidden: vec![32, 32],
            log_interval: 100,
            ..TrainConfig::desk(mode)
        };
        let (_, log) = train(&data, &point_prior(p), &cfg).unwrap();
        log.mean_loss(1901, 2000).unwrap()
    }

    #[test]
    fn zero_residual_noise_target_is_learned() {
        let loss = zero_residual_run(Mode::RpdEps);
        assert!(loss < 1e-2, "{loss}");
    }

    #[test]
    fn zero_residual_velocity_target_is_learned() {
        let loss = zero_residual_run(Mode::RpdV);
        assert!(loss < 1e-2, "{loss}");
    }

    #[test]
    fn nan_data_aborts_with_last_good_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let data = Tensor2::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        let cfg = TrainConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..small(Mode::Ddpm, 5)
        };
        match train_baseline(&data, &cfg) {
            Err(Error::Training { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("expected training error, got {other:?}"),
        }
        assert!(Predictor::load(&dir.path().join("last-good.txt")).is_ok());
    }
}
