use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{draw_categorical, gaussian_log_density, Decoded, Latent, PriorElbo, PriorModel};
use crate::error::{Error, Result};
use crate::nn::{write_row, Activation, Adam, Mlp, Tensor2, TextReader};

const VARIANCE_FLOOR: f64 = 0.1;
const EMA_SIZE_EPS: f64 = 1e-5;
/// Codes whose EMA cluster size falls below this are reseeded.
const DEAD_CODE_SIZE: f64 = 0.03;
const CHECKPOINT_MAGIC: &str = "rpd-vqvae v1";

#[derive(Debug, Clone, PartialEq)]
pub struct VqVaeConfig {
    pub codes: usize,
    pub code_dim: usize,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    /// The decoder variance stays at 1 for this many initial iterations.
    pub variance_frozen_iters: usize,
    pub learning_rate: f64,
    /// Mini-batch size; `None` uses the whole set every iteration.
    pub batch: Option<usize>,
    pub commitment: f64,
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for VqVaeConfig {
    fn default() -> Self {
        Self {
            codes: 16,
            code_dim: 2,
            hidden: vec![16, 32, 16],
            iterations: 15_000,
            variance_frozen_iters: 10_000,
            learning_rate: 1e-3,
            batch: None,
            commitment: 0.25,
            ema_decay: 0.99,
            seed: 0,
        }
    }
}

impl VqVaeConfig {
    /// Shorter run that keeps the two-thirds frozen-variance split.
    pub fn desk(seed: u64) -> Self {
        Self {
            iterations: 5_000,
            variance_frozen_iters: 3_333,
            seed,
            ..Self::default()
        }
    }
}

/// Per-iteration training diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VqVaeLog {
    pub loss: Vec<f64>,
    pub reconstruction_mse: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Vector-quantized autoencoder with EMA codebook updates and a single learned
/// decoder deviation. The posterior is the nearest code of the encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct VqVae {
    encoder: Mlp,
    decoder: Mlp,
    codebook: Tensor2,
    ema_size: Vec<f64>,
    ema_sum: Tensor2,
    /// Raw parameter `r`; the decoder variance is `0.1 + softplus(r)`.
    variance_raw: f64,
    frequencies: Vec<f64>,
    warnings: Vec<String>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Raw parameter giving decoder variance `v` (requires `v > 0.1`).
fn raw_for_variance(v: f64) -> f64 {
    (v - VARIANCE_FLOOR).exp_m1().ln()
}

impl VqVae {
    /// Untrained model; the codebook is seeded from encodings of `data` when given.
    pub fn init(dim: usize, config: &VqVaeConfig, data: Option<&Tensor2>) -> Result<Self> {
        if config.codes == 0 || config.code_dim == 0 || dim == 0 {
            return Err(Error::config(
                "VQVAE needs positive code count, code and data dimensions",
            ));
        }
        if !(0.0..1.0).contains(&config.ema_decay) {
            return Err(Error::config("EMA decay must lie in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = Mlp::new(
            dim,
            &config.hidden,
            config.code_dim,
            Activation::Gelu,
            &mut rng,
        )?;
        let decoder = Mlp::new(
            config.code_dim,
            &config.hidden,
            dim,
            Activation::Gelu,
            &mut rng,
        )?;
        let codebook = match data {
            Some(x) if x.rows() > 0 => {
                let encoded = encoder.forward(x)?;
                kmeans_pp_seed(&encoded, config.codes, &mut rng)
            }
            _ => {
                let mut c = Tensor2::zeros(config.codes, config.code_dim);
                for v in c.as_mut_slice() {
                    *v = rng.random_range(-1.0..1.0);
                }
                c
            }
        };
        Ok(Self {
            encoder,
            decoder,
            ema_sum: codebook.clone(),
            codebook,
            ema_size: vec![1.0; config.codes],
            variance_raw: raw_for_variance(1.0),
            frequencies: vec![1.0 / config.codes as f64; config.codes],
            warnings: Vec::new(),
        })
    }

    /// Trains on the rows of `data` and records code usage frequencies.
    pub fn train(data: &Tensor2, config: &VqVaeConfig) -> Result<(Self, VqVaeLog)> {
        if data.rows() == 0 {
            return Err(Error::config("cannot train a VQVAE on an empty set"));
        }
        let mut model = Self::init(data.cols(), config, Some(data))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
        let mut adam = Adam::new(config.learning_rate);
        let mut variance_adam = Adam::new(config.learning_rate);
        let mut log = VqVaeLog::default();
        let n = data.rows();
        let batch_size = config.batch.unwrap_or(n).clamp(1, n);

        for iter in 0..config.iterations {
            let batch = if batch_size == n {
                data.clone()
            } else {
                let mut b = Tensor2::zeros(batch_size, data.cols());
                for r in 0..batch_size {
                    let i = rng.random_range(0..n);
                    b.row_mut(r).copy_from_slice(data.row(i));
                }
                b
            };
            let learn_variance = iter >= config.variance_frozen_iters;
            let stats = model
                .train_step(
                    &batch,
                    config,
                    &mut adam,
                    &mut variance_adam,
                    learn_variance,
                )
                .map_err(|e| match e {
                    Error::Training { message, .. } => Error::Training {
                        iteration: iter + 1,
                        message: format!("VQVAE: {message}"),
                    },
                    other => other,
                })?;
            log.loss.push(stats.0);
            log.reconstruction_mse.push(stats.1);
            log.sigma.push(model.sigma());
        }
        model.refresh_frequencies(data)?;
        model.check_collapse(data);
        Ok((model, log))
    }

    /// One gradient + EMA step; returns (loss, reconstruction MSE).
    fn train_step(
        &mut self,
        batch: &Tensor2,
        config: &VqVaeConfig,
        adam: &mut Adam,
        variance_adam: &mut Adam,
        learn_variance: bool,
    ) -> Result<(f64, f64)> {
        let n = batch.rows();
        let nf = n as f64;
        let dim = batch.cols() as f64;
        let encoded = self.encoder.forward_train(batch)?;
        let codes = self.assign(&encoded);
        let quantized = self.gather(&codes);
        let recon = self.decoder.forward_train(&quantized)?;

        let variance = self.variance();
        let mut sq_err = 0.0;
        let mut d_recon = Tensor2::zeros(n, batch.cols());
        for ((g, r), x) in d_recon
            .as_mut_slice()
            .iter_mut()
            .zip(recon.as_slice())
            .zip(batch.as_slice())
        {
            let diff = r - x;
            sq_err += diff * diff;
            *g = diff / (variance * nf);
        }
        let mut commit = 0.0;
        for (e, q) in encoded.as_slice().iter().zip(quantized.as_slice()) {
            commit += (e - q) * (e - q);
        }
        let loss = sq_err / (2.0 * variance * nf)
            + 0.5 * dim * variance.ln()
            + config.commitment * commit / nf;
        if !loss.is_finite() {
            return Err(Error::Training {
                iteration: 0,
                message: format!("non-finite loss {loss}"),
            });
        }

        let dec_grads = self.decoder.backward(&d_recon)?;
        // straight-through: the decoder's input gradient flows to the encoder output
        let mut d_encoded = dec_grads.input.clone();
        for ((g, e), q) in d_encoded
            .as_mut_slice()
            .iter_mut()
            .zip(encoded.as_slice())
            .zip(quantized.as_slice())
        {
            *g += 2.0 * config.commitment * (e - q) / nf;
        }
        let enc_grads = self.encoder.backward(&d_encoded)?;

        let mut grads: Vec<&[f64]> = enc_grads.slices();
        grads.extend(dec_grads.slices());
        let mut params = self.encoder.params_mut();
        params.extend(self.decoder.params_mut());
        adam.step(params, &grads)?;

        if learn_variance {
            let d_variance = -sq_err / (2.0 * variance * variance * nf) + 0.5 * dim / variance;
            let d_raw = d_variance * sigmoid(self.variance_raw);
            let mut raw = [self.variance_raw];
            variance_adam.step(vec![&mut raw[..]], &[&[d_raw]])?;
            self.variance_raw = raw[0];
        }

        self.ema_update(&encoded, &codes, config.ema_decay);
        Ok((loss, sq_err / nf))
    }

    fn ema_update(&mut self, encoded: &Tensor2, codes: &[usize], decay: f64) {
        let k = self.codebook.rows();
        let d = self.codebook.cols();
        let mut counts = vec![0.0; k];
        let mut sums = Tensor2::zeros(k, d);
        for (r, &c) in codes.iter().enumerate() {
            counts[c] += 1.0;
            for (s, e) in sums.row_mut(c).iter_mut().zip(encoded.row(r)) {
                *s += e;
            }
        }
        for (c, &n) in counts.iter().enumerate() {
            self.ema_size[c] = decay * self.ema_size[c] + (1.0 - decay) * n;
            for j in 0..d {
                let v = decay * self.ema_sum.get(c, j) + (1.0 - decay) * sums.get(c, j);
                self.ema_sum.set(c, j, v);
            }
            if self.ema_size[c] > EMA_SIZE_EPS {
                for j in 0..d {
                    self.codebook
                        .set(c, j, self.ema_sum.get(c, j) / self.ema_size[c]);
                }
            }
        }
        self.restart_dead_codes(encoded, codes);
    }

    /// Moves starved codes onto the worst-quantized encodings of the batch.
    fn restart_dead_codes(&mut self, encoded: &Tensor2, codes: &[usize]) {
        let dead: Vec<usize> = (0..self.codebook.rows())
            .filter(|&c| self.ema_size[c] < DEAD_CODE_SIZE)
            .collect();
        if dead.is_empty() {
            return;
        }
        let mut errors: Vec<(f64, usize)> = codes
            .iter()
            .enumerate()
            .map(|(r, &c)| (sq_dist(encoded.row(r), self.codebook.row(c)), r))
            .collect();
        errors.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (c, (err, r)) in dead.into_iter().zip(errors) {
            if err <= 0.0 {
                break;
            }
            self.codebook.row_mut(c).copy_from_slice(encoded.row(r));
            self.ema_sum.row_mut(c).copy_from_slice(encoded.row(r));
            self.ema_size[c] = 1.0;
        }
    }

    /// Nearest codebook row (Euclidean) for every row of `encoded`; ties go to the lower index.
    pub fn assign(&self, encoded: &Tensor2) -> Vec<usize> {
        (0..encoded.rows())
            .map(|r| nearest_row(&self.codebook, encoded.row(r)))
            .collect()
    }

    fn gather(&self, codes: &[usize]) -> Tensor2 {
        let d = self.codebook.cols();
        let mut out = Tensor2::zeros(codes.len(), d);
        for (r, &c) in codes.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.codebook.row(c));
        }
        out
    }

    pub fn encode(&self, x: &Tensor2) -> Result<Tensor2> {
        self.encoder.forward(x)
    }

    /// Deterministic code assignment for every row of `x`.
    pub fn quantize(&self, x: &Tensor2) -> Result<Vec<usize>> {
        Ok(self.assign(&self.encode(x)?))
    }

    /// Decoder means for every code, one row each.
    pub fn decoded_means(&self) -> Tensor2 {
        self.decoder
            .forward(&self.codebook)
            .expect("codebook width matches decoder input")
    }

    fn refresh_frequencies(&mut self, data: &Tensor2) -> Result<()> {
        let codes = self.quantize(data)?;
        let mut counts = vec![0.0; self.codebook.rows()];
        for c in codes {
            counts[c] += 1.0;
        }
        let n = data.rows() as f64;
        self.frequencies = counts.into_iter().map(|c| c / n).collect();
        Ok(())
    }

    fn check_collapse(&mut self, data: &Tensor2) {
        let first = data.row(0);
        if (1..data.rows()).all(|r| data.row(r) == first) {
            self.warnings
                .push("all training points are identical; the codebook has collapsed".into());
        }
        let used = self.frequencies.iter().filter(|f| **f > 0.0).count();
        if used <= 1 && self.codebook.rows() > 1 {
            self.warnings.push(format!(
                "only {used} of {} codes are in use",
                self.codebook.rows()
            ));
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn codebook(&self) -> &Tensor2 {
        &self.codebook
    }

    pub fn ema_size(&self) -> &[f64] {
        &self.ema_size
    }

    pub fn ema_sum(&self) -> &Tensor2 {
        &self.ema_sum
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Replaces the usage frequencies used by [`PriorModel::sample_z`].
    pub fn set_frequencies(&mut self, frequencies: Vec<f64>) -> Result<()> {
        if frequencies.len() != self.codebook.rows()
            || frequencies.iter().any(|f| f.is_nan() || *f < 0.0)
            || frequencies.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config(
                "frequencies must be nonnegative, one per code, positive sum",
            ));
        }
        let total: f64 = frequencies.iter().sum();
        self.frequencies = frequencies.into_iter().map(|f| f / total).collect();
        Ok(())
    }

    pub fn variance_raw(&self) -> f64 {
        self.variance_raw
    }

    pub fn set_variance_raw(&mut self, raw: f64) {
        self.variance_raw = raw;
    }

    /// Decoder variance, never below 0.1.
    pub fn variance(&self) -> f64 {
        VARIANCE_FLOOR + softplus(self.variance_raw)
    }

    pub fn sigma(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Writes the checkpoint:
    ///
    /// ```text
    /// rpd-vqvae v1
    /// codes <K> <d>
    /// <K lines of d codebook values>
    /// variance_raw <r>
    /// frequencies <K values>
    /// encoder
    /// <mlp block>
    /// decoder
    /// <mlp block>
    /// ```
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "codes {} {}", self.codebook.rows(), self.codebook.cols())?;
        for r in 0..self.codebook.rows() {
            write_row(w, self.codebook.row(r))?;
        }
        writeln!(w, "variance_raw {}", self.variance_raw)?;
        write!(w, "frequencies ")?;
        write_row(w, &self.frequencies)?;
        writeln!(w, "encoder")?;
        self.encoder.write_text(w)?;
        writeln!(w, "decoder")?;
        self.decoder.write_text(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = TextReader::new(std::io::BufReader::new(file), path);
        Self::read_text(&mut reader)
    }

    pub fn read_text<R: BufRead>(r: &mut TextReader<R>) -> Result<Self> {
        let magic = r.expect_line()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.error(format!("expected `{CHECKPOINT_MAGIC}`, found `{magic}`")));
        }
        let dims = r.expect_key("codes")?;
        let mut parts = dims.split_whitespace();
        let k: usize = r.parse_field(parts.next(), "code count")?;
        let d: usize = r.parse_field(parts.next(), "code dimension")?;
        let mut book = Vec::with_capacity(k * d);
        for _ in 0..k {
            book.extend(r.read_row(d)?);
        }
        let codebook = Tensor2::from_vec(k, d, book)?;
        let raw_text = r.expect_key("variance_raw")?;
        let variance_raw: f64 = r.parse_field(Some(raw_text.trim()), "variance_raw")?;
        let freq_text = r.expect_key("frequencies")?;
        let frequencies: Vec<f64> = freq_text
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| r.error("bad frequency value"))?;
        if frequencies.len() != k {
            return Err(r.error(format!(
                "expected {k} frequencies, found {}",
                frequencies.len()
            )));
        }
        r.expect_key("encoder")?;
        let encoder = Mlp::read_text(r)?;
        r.expect_key("decoder")?;
        let decoder = Mlp::read_text(r)?;
        if encoder.output_dim() != d
            || decoder.input_dim() != d
            || encoder.input_dim() != decoder.output_dim()
        {
            return Err(r.error("encoder/decoder widths do not match the codebook"));
        }
        Ok(Self {
            encoder,
            decoder,
            ema_sum: codebook.clone(),
            ema_size: vec![1.0; k],
            codebook,
            variance_raw,
            frequencies,
            warnings: Vec::new(),
        })
    }
}

fn nearest_row(book: &Tensor2, point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..book.rows() {
        let d: f64 = book
            .row(c)
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, then proportional to squared distance.
fn kmeans_pp_seed(points: &Tensor2, k: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let n = points.rows();
    let d = points.cols();
    let mut centres = Tensor2::zeros(k, d);
    let first = rng.random_range(0..n);
    centres.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centres.row(0)))
        .collect();
    for c in 1..k {
        let pick = if dist.iter().sum::<f64>() > 0.0 {
            draw_categorical(&dist, rng)
        } else {
            rng.random_range(0..n)
        };
        centres.row_mut(c).copy_from_slice(points.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(points.row(i), centres.row(c)));
        }
    }
    centres
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl PriorModel for VqVae {
    fn dim(&self) -> usize {
        self.decoder.output_dim()
    }

    fn embedding_dim(&self) -> usize {
        self.codebook.cols()
    }

    fn num_latents(&self) -> usize {
        self.codebook.rows()
    }

    fn sample_z(&self, rng: &mut dyn RngCore) -> Latent {
        Latent(draw_categorical(&self.frequencies, rng))
    }

    fn posterior_z(&self, x0: &[f64], _rng: &mut dyn RngCore) -> Latent {
        let x = Tensor2::from_vec(1, x0.len(), x0.to_vec()).expect("single row");
        Latent(self.quantize(&x).expect("point width matches encoder")[0])
    }

    fn posterior_batch(&self, x0: &Tensor2, _rng: &mut dyn RngCore) -> Vec<Latent> {
        self.quantize(x0)
            .expect("point width matches encoder")
            .into_iter()
            .map(Latent)
            .collect()
    }

    fn decode(&self, z: Latent) -> Decoded {
        let code = Tensor2::from_vec(1, self.codebook.cols(), self.codebook.row(z.0).to_vec())
            .expect("single row");
        let mu = self
            .decoder
            .forward(&code)
            .expect("codebook width matches decoder input")
            .into_vec();
        Decoded {
            mu,
            sigma: self.sigma(),
        }
    }

    fn z_embedding(&self, z: Latent) -> Vec<f64> {
        self.codebook.row(z.0).to_vec()
    }

    /// Reconstruction under the nearest code; the KL of a point-mass posterior
    /// against the usage-frequency prior is `-log p(code)`.
    fn prior_elbo(&self, x0: &[f64]) -> PriorElbo {
        let x = Tensor2::from_vec(1, x0.len(), x0.to_vec()).expect("single row");
        let z = Latent(self.quantize(&x).expect("point width matches encoder")[0]);
        let decoded = self.decode(z);
        PriorElbo {
            reconstruction: gaussian_log_density(x0, &decoded.mu, decoded.sigma),
            kl: -self.frequencies[z.0].ln(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters(per: usize, seed: u64) -> (Tensor2, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<[f64; 2]> = (0..16)
            .map(|i| [(i % 4) as f64 * 2.0 - 3.0, (i / 4) as f64 * 2.0 - 3.0])
            .collect();
        let mut rows = Vec::new();
        for c in &centres {
            for _ in 0..per {
                rows.push([
                    c[0] + rng.random_range(-0.01..0.01),
                    c[1] + rng.random_range(-0.01..0.01),
                ]);
            }
        }
        (Tensor2::from_rows(&rows).unwrap(), centres)
    }

    #[test]
    fn zero_iterations_leaves_unit_variance() {
        let (data, _) = clusters(4, 0);
        let cfg = VqVaeConfig {
            iterations: 0,
            ..VqVaeConfig::default()
        };
        let (model, log) = VqVae::train(&data, &cfg).unwrap();
        assert!((model.sigma() - 1.0).abs() < 1e-12);
        assert!(log.loss.is_empty());
    }

    #[test]
    fn variance_floor_holds_for_any_raw_value() {
        let (data, _) = clusters(1, 0);
        let mut m = VqVae::init(2, &VqVaeConfig::default(), Some(&data)).unwrap();
        for raw in [-1e6, -50.0, -1.0, 0.0, 3.0, 1e3] {
            m.set_variance_raw(raw);
            assert!(m.variance() >= 0.1);
            assert!(m.sigma() >= 0.1);
        }
    }

    #[test]
    fn separated_clusters_get_distinct_codes() {
        let (data, centres) = clusters(20, 3);
        let cfg = VqVaeConfig {
            iterations: 3000,
            variance_frozen_iters: 2000,
            seed: 11,
            ..VqVaeConfig::default()
        };
        let (model, _) = VqVae::train(&data, &cfg).unwrap();
        let centre_t = Tensor2::from_rows(&centres).unwrap();
        let codes = model.quantize(&centre_t).unwrap();
        let mut distinct = codes.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 16, "codes {codes:?}");
        let means = model.decoded_means();
        for (c, &k) in centres.iter().zip(&codes) {
            let err = sq_dist(c, means.row(k)).sqrt();
            assert!(err < 0.2, "reconstruction error {err}");
        }
        let total: f64 = model.frequencies().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_flag_collapse() {
        let data = Tensor2::from_rows(&vec![[0.5, 0.5]; 30]).unwrap();
        let cfg = VqVaeConfig {
            iterations: 20,
            ..VqVaeConfig::default()
        };
        let (model, _) = VqVae::train(&data, &cfg).unwrap();
        assert!(!model.warnings().is_empty());
    }

    #[test]
    fn assignment_is_exhaustive_nearest() {
        let (data, _) = clusters(3, 5);
        let m = VqVae::init(2, &VqVaeConfig::default(), Some(&data)).unwrap();
        let enc = m.encode(&data).unwrap();
        for (r, &c) in m.assign(&enc).iter().enumerate() {
            let d = sq_dist(enc.row(r), m.codebook().row(c));
            for k in 0..16 {
                assert!(d <= sq_dist(enc.row(r), m.codebook().row(k)));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let (data, _) = clusters(2, 6);
        let cfg = VqVaeConfig {
            iterations: 5,
            ..VqVaeConfig::default()
        };
        let (model, _) = VqVae::train(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.txt");
        model.save(&path).unwrap();
        let back = VqVae::load(&path).unwrap();
        assert_eq!(back.codebook(), model.codebook());
        assert_eq!(back.frequencies(), model.frequencies());
        assert_eq!(back.variance_raw(), model.variance_raw());
        assert_eq!(back.decode(Latent(3)), model.decode(Latent(3)));
    }
}
