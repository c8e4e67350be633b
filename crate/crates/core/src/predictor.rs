//! The time-conditioned denoising network and its input layout.

use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::diffusion::{aux_eps, aux_v};
use crate::error::{Error, Result};
use crate::nn::{write_time_embedding, Activation, Mlp, TextReader};
use crate::prior::Decoded;
use crate::schedule::{ScheduleSpec, StepCoeffs};

const CHECKPOINT_MAGIC: &str = "rpd-predictor v1";

/// Default hidden widths of the denoising network.
pub const DEFAULT_HIDDEN: [usize; 5] = [64, 128, 256, 126, 64];
pub const DEFAULT_TIME_DIM: usize = 16;

/// Training/inference parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Residual prior, noise prediction.
    RpdEps,
    /// Residual prior, normalized-velocity prediction.
    RpdV,
    /// Noise prediction on a standard normal prior.
    Ddpm,
    /// Velocity prediction on a standard normal prior.
    Vpred,
}

impl Mode {
    pub fn predicts_velocity(self) -> bool {
        matches!(self, Mode::RpdV | Mode::Vpred)
    }

    /// Baselines run on the standard normal prior with no auxiliary input.
    pub fn is_baseline(self) -> bool {
        matches!(self, Mode::Ddpm | Mode::Vpred)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::RpdEps => "rpd-eps",
            Mode::RpdV => "rpd-v",
            Mode::Ddpm => "ddpm",
            Mode::Vpred => "vpred",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpd-eps" => Ok(Mode::RpdEps),
            "rpd-v" => Ok(Mode::RpdV),
            "ddpm" => Ok(Mode::Ddpm),
            "vpred" => Ok(Mode::Vpred),
            _ => Err(Error::config(format!(
                "unknown mode `{s}` (expected rpd-eps, rpd-v, ddpm or vpred)"
            ))),
        }
    }
}

/// What fills the auxiliary input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxInput {
    None,
    /// The prior-normalized state matching the prediction target.
    Omega,
    /// The prior mean itself (ablation).
    PriorMean,
}

impl AuxInput {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxInput::None => "none",
            AuxInput::Omega => "omega",
            AuxInput::PriorMean => "mu",
        }
    }
}

impl std::fmt::Display for AuxInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuxInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AuxInput::None),
            "omega" => Ok(AuxInput::Omega),
            "mu" => Ok(AuxInput::PriorMean),
            _ => Err(Error::config(format!(
                "unknown aux input `{s}` (expected omega, mu or none)"
            ))),
        }
    }
}

/// Column layout of a network input row: `[x_t | time embedding | z embedding | aux]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub data_dim: usize,
    pub time_dim: usize,
    pub z_dim: usize,
    pub aux_dim: usize,
}

impl InputLayout {
    pub fn width(&self) -> usize {
        self.data_dim + self.time_dim + self.z_dim + self.aux_dim
    }
}

/// Denoising MLP plus everything needed to build its inputs consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub net: Mlp,
    pub mode: Mode,
    pub aux: AuxInput,
    /// Stabilizer for the auxiliary input.
    pub delta: f64,
    pub schedule: ScheduleSpec,
    pub layout: InputLayout,
}

impl Predictor {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        mode: Mode,
        aux: AuxInput,
        delta: f64,
        schedule: ScheduleSpec,
        data_dim: usize,
        z_dim: usize,
        time_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if mode.is_baseline() && (aux != AuxInput::None || z_dim != 0) {
            return Err(Error::config(format!(
                "{mode} runs without latent embedding or auxiliary input"
            )));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::config(format!(
                "delta must be finite and >= 0, got {delta}"
            )));
        }
        let layout = InputLayout {
            data_dim,
            time_dim,
            z_dim,
            aux_dim: if aux == AuxInput::None { 0 } else { data_dim },
        };
        let net = Mlp::new(layout.width(), hidden, data_dim, Activation::Gelu, rng)?;
        Ok(Self {
            net,
            mode,
            aux,
            delta,
            schedule,
            layout,
        })
    }

    pub fn horizon(&self) -> usize {
        self.schedule.steps()
    }

    /// Fills one input row for state `x_t` at step `c`.
    pub fn write_input(
        &self,
        x_t: &[f64],
        c: &StepCoeffs,
        z_embedding: &[f64],
        prior: &Decoded,
        out: &mut [f64],
    ) -> Result<()> {
        let l = self.layout;
        debug_assert_eq!(out.len(), l.width());
        if z_embedding.len() != l.z_dim {
            return Err(Error::config(format!(
                "network expects a {}-wide latent embedding, prior gives {}",
                l.z_dim,
                z_embedding.len()
            )));
        }
        let (xs, rest) = out.split_at_mut(l.data_dim);
        xs.copy_from_slice(x_t);
        let (time, rest) = rest.split_at_mut(l.time_dim);
        write_time_embedding(c.t, self.horizon(), time)?;
        let (zs, aux) = rest.split_at_mut(l.z_dim);
        zs.copy_from_slice(z_embedding);
        match self.aux {
            AuxInput::None => {}
            AuxInput::Omega => {
                let w = if self.mode.predicts_velocity() {
                    aux_v(x_t, prior, c, self.delta)
                } else {
                    aux_eps(x_t, prior, c, self.delta)
                };
                aux.copy_from_slice(&w);
            }
            AuxInput::PriorMean => aux.copy_from_slice(&prior.mu),
        }
        Ok(())
    }

    /// Checkpoint layout:
    ///
    /// ```text
    /// rpd-predictor v1
    /// mode <rpd-eps|rpd-v|ddpm|vpred>
    /// aux <omega|mu|none>
    /// delta <value>
    /// schedule <log-linear T sigma_min sigma_max | linear-t1000>
    /// layout <data_dim> <time_dim> <z_dim> <aux_dim>
    /// <mlp block>
    /// ```
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "mode {}", self.mode)?;
        writeln!(w, "aux {}", self.aux)?;
        writeln!(w, "delta {}", self.delta)?;
        writeln!(w, "schedule {}", self.schedule)?;
        let l = self.layout;
        writeln!(
            w,
            "layout {} {} {} {}",
            l.data_dim, l.time_dim, l.z_dim, l.aux_dim
        )?;
        self.net.write_text(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_text<R: BufRead>(r: &mut TextReader<R>) -> Result<Self> {
        let magic = r.expect_line()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.error(format!("expected `{CHECKPOINT_MAGIC}`, found `{magic}`")));
        }
        let mode: Mode = r.expect_key("mode")?.parse()?;
        let aux: AuxInput = r.expect_key("aux")?.parse()?;
        let delta_text = r.expect_key("delta")?;
        let delta: f64 = r.parse_field(Some(delta_text.trim()), "delta")?;
        let schedule: ScheduleSpec = r.expect_key("schedule")?.parse()?;
        let layout_text = r.expect_key("layout")?;
        let mut parts = layout_text.split_whitespace();
        let layout = InputLayout {
            data_dim: r.parse_field(parts.next(), "data_dim")?,
            time_dim: r.parse_field(parts.next(), "time_dim")?,
            z_dim: r.parse_field(parts.next(), "z_dim")?,
            aux_dim: r.parse_field(parts.next(), "aux_dim")?,
        };
        let net = Mlp::read_text(r)?;
        if net.input_dim() != layout.width() || net.output_dim() != layout.data_dim {
            return Err(r.error("network widths do not match the declared layout"));
        }
        Ok(Self {
            net,
            mode,
            aux,
            delta,
            schedule,
            layout,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_text(&mut TextReader::new(std::io::BufReader::new(file), path))
    }
}
