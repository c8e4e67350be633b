use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{BufRead, Write};

use rand::Rng;

use super::tensor::{gemm, Op, Tensor2};
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Exact GELU, `x * Phi(x)`.
    Gelu,
    Identity,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// One affine layer; `weight` is `in x out` so that `y = x W + b` on row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` for weights and bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn apply(&self, x: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(x.rows(), self.output_dim());
        gemm(Op::N, x, Op::N, &self.weight, &mut out, false);
        let n = self.output_dim();
        for row in out.as_mut_slice().chunks_exact_mut(n) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        out
    }
}

/// Parameter gradients of an [`Mlp`], laid out like its layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    /// Gradient with respect to the network input.
    pub input: Tensor2,
}

impl Gradients {
    /// Flat views in the same order as [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone)]
struct Trace {
    /// Input to every layer.
    inputs: Vec<Tensor2>,
    /// Activation derivative at every hidden pre-activation.
    slopes: Vec<Tensor2>,
}

/// Dense feed-forward chain with a recorded forward pass for reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
    trace: Option<Trace>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.activation == other.activation
    }
}

impl Mlp {
    /// Random initialization; `hidden` may be empty for a single affine map.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let widths = layer_widths(input, hidden, output)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Ok(Self {
            layers,
            activation,
            trace: None,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::config(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self {
            layers,
            activation,
            trace: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Dense::output_dim)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, inputs: &Tensor2) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                inputs.cols()
            )));
        }
        Ok(())
    }

    /// Inference pass; nothing is recorded.
    pub fn forward(&self, inputs: &Tensor2) -> Result<Tensor2> {
        self.check_input(inputs)?;
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].apply(inputs);
        for layer in &self.layers[1..] {
            self.activate_in_place(&mut h);
            h = layer.apply(&h);
        }
        debug_assert!(last < self.layers.len());
        Ok(h)
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_train(&mut self, inputs: &Tensor2) -> Result<Tensor2> {
        self.check_input(inputs)?;
        let n_layers = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut slopes = Vec::with_capacity(n_layers - 1);
        let mut current = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.apply(&current);
            layer_inputs.push(current);
            if i + 1 < n_layers {
                let mut slope = Tensor2::zeros(h.rows(), h.cols());
                match self.activation {
                    Activation::Gelu => {
                        for (v, s) in h.as_mut_slice().iter_mut().zip(slope.as_mut_slice()) {
                            let x = *v;
                            let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                            let pdf = (-0.5 * x * x).exp() * (0.5 / PI).sqrt();
                            *s = cdf + x * pdf;
                            *v = x * cdf;
                        }
                    }
                    Activation::Identity => slope.as_mut_slice().fill(1.0),
                }
                slopes.push(slope);
            }
            current = h;
        }
        self.trace = Some(Trace {
            inputs: layer_inputs,
            slopes,
        });
        Ok(current)
    }

    /// Reverse pass for the most recent [`Mlp::forward_train`]; consumes the record.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Gradients> {
        let trace = self.trace.take().ok_or_else(|| {
            Error::Usage("backward called without a recorded forward pass".into())
        })?;
        let batch = trace.inputs[0].rows();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(Error::config(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                upstream.shape(),
                (batch, self.output_dim())
            )));
        }
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect();
        let mut delta = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &trace.inputs[i];
            gemm(Op::T, input, Op::N, &delta, &mut grads[i].weight, false);
            let width = delta.cols();
            let bias = &mut grads[i].bias;
            for row in delta.as_slice().chunks_exact(width) {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            let mut prev = Tensor2::zeros(batch, self.layers[i].input_dim());
            gemm(
                Op::N,
                &delta,
                Op::T,
                &self.layers[i].weight,
                &mut prev,
                false,
            );
            if i > 0 {
                for (p, s) in prev
                    .as_mut_slice()
                    .iter_mut()
                    .zip(trace.slopes[i - 1].as_slice())
                {
                    *p *= s;
                }
            }
            delta = prev;
        }
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    /// Flat mutable views `[w0, b0, w1, b1, ...]`.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Dense { weight, bias } = l;
                [weight.as_mut_slice(), bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn activate_in_place(&self, h: &mut Tensor2) {
        if self.activation == Activation::Gelu {
            for v in h.as_mut_slice() {
                *v = gelu(*v);
            }
        }
    }

    /// Writes the text checkpoint block:
    ///
    /// ```text
    /// mlp <n_layers> <activation>
    /// layer <in> <out>
    /// <in lines of `out` weights>
    /// <one line of `out` biases>
    /// ...
    /// ```
    ///
    /// Values use Rust's shortest round-trip formatting so reloads are bit-exact.
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "mlp {} {}", self.layers.len(), self.activation.name())?;
        for layer in &self.layers {
            writeln!(w, "layer {} {}", layer.input_dim(), layer.output_dim())?;
            for r in 0..layer.input_dim() {
                write_row(w, layer.weight.row(r))?;
            }
            write_row(w, &layer.bias)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(lines: &mut TextReader<R>) -> Result<Self> {
        let header = lines.expect_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("mlp") {
            return Err(lines.error(format!("expected `mlp` header, found `{header}`")));
        }
        let n_layers: usize = lines.parse_field(parts.next(), "layer count")?;
        let act_name = parts.next().unwrap_or("");
        let activation = Activation::parse(act_name)
            .ok_or_else(|| lines.error(format!("unknown activation `{act_name}`")))?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let header = lines.expect_line()?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some("layer") {
                return Err(lines.error(format!("expected `layer` header, found `{header}`")));
            }
            let input: usize = lines.parse_field(parts.next(), "layer input width")?;
            let output: usize = lines.parse_field(parts.next(), "layer output width")?;
            let mut weight = Vec::with_capacity(input * output);
            for _ in 0..input {
                weight.extend(lines.read_row(output)?);
            }
            let bias = lines.read_row(output)?;
            layers.push(Dense {
                weight: Tensor2::from_vec(input, output, weight)?,
                bias,
            });
        }
        Mlp::from_layers(layers, activation)
    }
}

pub(crate) fn write_row<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")
}

fn layer_widths(input: usize, hidden: &[usize], output: usize) -> Result<Vec<usize>> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input);
    widths.extend_from_slice(hidden);
    widths.push(output);
    if widths.contains(&0) {
        return Err(Error::config(format!(
            "layer widths must be positive: {widths:?}"
        )));
    }
    Ok(widths)
}

/// Line reader shared by the text checkpoint formats.
pub struct TextReader<R> {
    inner: R,
    path: std::path::PathBuf,
    line_no: usize,
}

impl<R: BufRead> TextReader<R> {
    pub fn new(inner: R, path: impl Into<std::path::PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
            line_no: 0,
        }
    }

    pub fn error(&self, msg: impl std::fmt::Display) -> Error {
        Error::format(self.path.clone(), format!("line {}: {msg}", self.line_no))
    }

    pub fn expect_line(&mut self) -> Result<String> {
        let mut buf = String::new();
        let n = self
            .inner
            .read_line(&mut buf)
            .map_err(|e| Error::io(self.path.clone(), e))?;
        if n == 0 {
            return Err(self.error("unexpected end of file"));
        }
        self.line_no += 1;
        Ok(buf.trim_end().to_string())
    }

    /// Reads a `key value...` line and returns the remainder after `key`.
    pub fn expect_key(&mut self, key: &str) -> Result<String> {
        let line = self.expect_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ if line == key => Ok(String::new()),
            _ => Err(self.error(format!("expected `{key}`, found `{line}`"))),
        }
    }

    pub fn parse_field<T: std::str::FromStr>(&self, field: Option<&str>, what: &str) -> Result<T> {
        field
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| self.error(format!("missing or invalid {what}")))
    }

    pub fn read_row(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.expect_line()?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.error(format!("bad number: {e}")))?;
        if values.len() != expected {
            return Err(self.error(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(values)
    }
}
