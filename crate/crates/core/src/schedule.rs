//! Noise schedules and reduced-step subsequences.
//!
//! Arrays are indexed by step `t = 0..=T` with the no-noise convention at `t = 0`
//! (`beta = 0`, `alpha = alpha_bar = 1`).

use std::io::Write;

use crate::error::{Error, Result};

/// Coefficients needed for one forward/reverse step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    /// Training-time step index, used for the time embedding and the `t = 1` branch.
    pub t: usize,
    /// Effective one-step signal retention.
    pub alpha: f64,
    /// The step's noise variance factor, `1 - alpha` up to rounding; taken from the
    /// stored schedule when available.
    pub beta: f64,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
}

impl StepCoeffs {
    /// Coefficients for a step that goes from `alpha_bar_prev` to `alpha_bar`.
    pub fn from_alpha_bars(t: usize, alpha_bar_prev: f64, alpha_bar: f64) -> Self {
        let alpha = alpha_bar / alpha_bar_prev;
        Self {
            t,
            alpha,
            beta: 1.0 - alpha,
            alpha_bar,
            alpha_bar_prev,
        }
    }

    /// True for the last reverse step, which uses the fixed small deviation.
    pub fn is_final(&self) -> bool {
        self.t == 1
    }
}

/// An ordered sequence of reverse steps, walked from position `len()` down to 1.
pub trait StepSequence {
    /// Number of steps of the schedule the network was trained on.
    fn horizon(&self) -> usize;
    /// Number of inference steps.
    fn len(&self) -> usize;
    /// Coefficients at `position` in `1..=len()`.
    fn coeffs(&self, position: usize) -> StepCoeffs;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Schedule {
    /// Builds a schedule from `beta_1..beta_T`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("schedule needs at least one step"));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::config(format!(
                "beta_{} = {b} is outside (0, 1)",
                i + 1
            )));
        }
        let n = betas.len() + 1;
        let mut all_betas = Vec::with_capacity(n);
        let mut alphas = Vec::with_capacity(n);
        let mut alpha_bars = Vec::with_capacity(n);
        all_betas.push(0.0);
        alphas.push(1.0);
        alpha_bars.push(1.0);
        for &b in betas {
            let a = 1.0 - b;
            let prev = alpha_bars[alpha_bars.len() - 1];
            all_betas.push(b);
            alphas.push(a);
            alpha_bars.push(prev * a);
        }
        if alpha_bars
            .windows(2)
            .any(|w| w[1].is_nan() || w[1] >= w[0] || w[1] <= 0.0)
        {
            return Err(Error::config("cumulative signal fraction underflowed"));
        }
        Ok(Self {
            betas: all_betas,
            alphas,
            alpha_bars,
        })
    }

    /// Noise levels `sigma_t` log-spaced from `sigma_min` (t = 1) to `sigma_max` (t = T),
    /// with `alpha_bar_t = 1 / (1 + sigma_t^2)`.
    pub fn log_linear(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!(
                "log-linear schedule needs T >= 2, got {steps}"
            )));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::config(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        let (lo, hi) = (sigma_min.ln(), sigma_max.ln());
        let sigmas: Vec<f64> = (0..steps)
            .map(|i| {
                if i == 0 {
                    sigma_min
                } else if i == steps - 1 {
                    sigma_max
                } else {
                    (lo + (hi - lo) * i as f64 / (steps - 1) as f64).exp()
                }
            })
            .collect();
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(steps);
        for s in sigmas {
            let bar = 1.0 / (1.0 + s * s);
            betas.push(1.0 - bar / prev);
            prev = bar;
        }
        Self::from_betas(&betas)
    }

    /// Betas linearly spaced from `start` to `end`.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config("linear schedule needs T >= 2"));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(&betas)
    }

    /// Betas whose square roots are linearly spaced from `sqrt(start)` to `sqrt(end)`.
    pub fn scaled_linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        if steps < 2 || start <= 0.0 || end <= 0.0 {
            return Err(Error::config(
                "scaled-linear schedule needs T >= 2 and positive endpoints",
            ));
        }
        let (a, b) = (start.sqrt(), end.sqrt());
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                let r = a + (b - a) * i as f64 / (steps - 1) as f64;
                r * r
            })
            .collect();
        Self::from_betas(&betas)
    }

    /// Linear betas from 1e-4 to 0.02 over 1000 steps.
    pub fn linear_t1000() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("constant schedule parameters are valid")
    }

    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Checked coefficients for `1 <= t <= T`.
    pub fn step(&self, t: usize) -> Result<StepCoeffs> {
        if t == 0 || t > self.steps() {
            return Err(Error::config(format!(
                "step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(self.coeffs(t))
    }

    /// Keeps `count` roughly evenly spaced steps, always including 1 and T.
    pub fn reduce(&self, count: usize) -> Result<ReducedSchedule> {
        let steps = self.steps();
        if count < 2 || count > steps {
            return Err(Error::config(format!(
                "reduced step count must lie in 2..={steps}, got {count}"
            )));
        }
        let mut kept: Vec<usize> = (0..count)
            .map(|s| 1 + ((s * (steps - 1)) as f64 / (count - 1) as f64).round() as usize)
            .collect();
        kept.dedup();
        ReducedSchedule::from_indices(self.clone(), kept)
    }

    /// Writes `t,beta,alpha,alpha_bar` rows for `t = 1..=T`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,beta,alpha,alpha_bar")?;
        for t in 1..=self.steps() {
            writeln!(
                w,
                "{t},{},{},{}",
                self.betas[t], self.alphas[t], self.alpha_bars[t]
            )?;
        }
        Ok(())
    }
}

impl StepSequence for Schedule {
    fn horizon(&self) -> usize {
        self.steps()
    }

    fn len(&self) -> usize {
        self.steps()
    }

    fn coeffs(&self, t: usize) -> StepCoeffs {
        StepCoeffs {
            t,
            alpha: self.alphas[t],
            beta: self.betas[t],
            alpha_bar: self.alpha_bars[t],
            alpha_bar_prev: self.alpha_bars[t - 1],
        }
    }
}

/// Serializable recipe for a [`Schedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    LogLinear {
        steps: usize,
        sigma_min: f64,
        sigma_max: f64,
    },
    LinearT1000,
}

impl ScheduleSpec {
    pub fn log_linear_default() -> Self {
        ScheduleSpec::LogLinear {
            steps: 200,
            sigma_min: 0.01,
            sigma_max: 100.0,
        }
    }

    pub fn build(&self) -> Result<Schedule> {
        match *self {
            ScheduleSpec::LogLinear {
                steps,
                sigma_min,
                sigma_max,
            } => Schedule::log_linear(steps, sigma_min, sigma_max),
            ScheduleSpec::LinearT1000 => Ok(Schedule::linear_t1000()),
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            ScheduleSpec::LogLinear { steps, .. } => steps,
            ScheduleSpec::LinearT1000 => 1000,
        }
    }
}

impl std::fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleSpec::LogLinear {
                steps,
                sigma_min,
                sigma_max,
            } => write!(f, "log-linear {steps} {sigma_min} {sigma_max}"),
            ScheduleSpec::LinearT1000 => write!(f, "linear-t1000"),
        }
    }
}

impl std::str::FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        match parts.as_slice() {
            ["linear-t1000"] => Ok(ScheduleSpec::LinearT1000),
            ["log-linear", steps, lo, hi] => {
                let bad = || Error::config(format!("bad schedule `{s}`"));
                Ok(ScheduleSpec::LogLinear {
                    steps: steps.parse().map_err(|_| bad())?,
                    sigma_min: lo.parse().map_err(|_| bad())?,
                    sigma_max: hi.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(Error::config(format!("unknown schedule `{s}`"))),
        }
    }
}

/// A subsequence `tau_1 < ... < tau_S` of a parent schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSchedule {
    parent: Schedule,
    kept: Vec<usize>,
}

impl ReducedSchedule {
    /// `kept` must be strictly increasing, start at 1 and end at T.
    pub fn from_indices(parent: Schedule, kept: Vec<usize>) -> Result<Self> {
        let steps = parent.steps();
        if kept.first() != Some(&1) || kept.last() != Some(&steps) {
            return Err(Error::config(format!(
                "kept steps must start at 1 and end at {steps}"
            )));
        }
        if kept.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("kept steps must be strictly increasing"));
        }
        Ok(Self { parent, kept })
    }

    pub fn parent(&self) -> &Schedule {
        &self.parent
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Effective `alpha'_s = alpha_bar(tau_s) / alpha_bar(tau_{s-1})`, with `tau_0 = 0`.
    /// Unit gaps use the parent's own alpha so the full subsequence is the parent exactly.
    pub fn effective_alpha(&self, position: usize) -> f64 {
        let tau = self.kept[position - 1];
        let prev = if position == 1 {
            0
        } else {
            self.kept[position - 2]
        };
        if tau - prev == 1 {
            self.parent.alpha(tau)
        } else {
            self.parent.alpha_bar(tau) / self.parent.alpha_bar(prev)
        }
    }
}

impl StepSequence for ReducedSchedule {
    fn horizon(&self) -> usize {
        self.parent.steps()
    }

    fn len(&self) -> usize {
        self.kept.len()
    }

    fn coeffs(&self, position: usize) -> StepCoeffs {
        let tau = self.kept[position - 1];
        let prev = if position == 1 {
            0
        } else {
            self.kept[position - 2]
        };
        let alpha = self.effective_alpha(position);
        let beta = if tau - prev == 1 {
            self.parent.beta(tau)
        } else {
            1.0 - alpha
        };
        StepCoeffs {
            t: tau,
            alpha,
            beta,
            alpha_bar: self.parent.alpha_bar(tau),
            alpha_bar_prev: self.parent.alpha_bar(prev),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_linear_endpoints_follow_sigma_bounds() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        assert!((s.alpha_bar(1) - 1.0 / 1.0001).abs() < 1e-12);
        assert!((s.alpha_bar(200) - 1.0 / 10001.0).abs() < 1e-15);
    }

    #[test]
    fn two_step_log_linear_hits_both_sigmas() {
        let s = Schedule::log_linear(2, 0.5, 4.0).unwrap();
        // sigma^2 = 1 / alpha_bar - 1
        assert!((1.0 / s.alpha_bar(1) - 1.0 - 0.25).abs() < 1e-12);
        assert!((1.0 / s.alpha_bar(2) - 1.0 - 16.0).abs() < 1e-12);
    }

    #[test]
    fn invariants_hold_on_generated_arrays() {
        for s in [
            Schedule::log_linear(200, 0.01, 100.0).unwrap(),
            Schedule::linear_t1000(),
            Schedule::scaled_linear(1000, 0.00085, 0.012).unwrap(),
        ] {
            for t in 1..=s.steps() {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
            }
        }
    }

    #[test]
    fn bad_bounds_are_config_errors() {
        assert!(Schedule::log_linear(200, 0.0, 1.0).is_err());
        assert!(Schedule::log_linear(200, 2.0, 1.0).is_err());
        assert!(Schedule::log_linear(1, 0.1, 1.0).is_err());
    }

    #[test]
    fn linear_t1000_properties() {
        let s = Schedule::linear_t1000();
        assert!(s.beta(1) < s.beta(1000));
        let product: f64 = (1..=1000).map(|t| 1.0 - s.beta(t)).product();
        assert!(product < 1e-4);
        assert!((product - s.alpha_bar(1000)).abs() < 1e-15);
    }

    #[test]
    fn beta_round_trip() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        for t in 1..=200 {
            let recovered = 1.0 - s.alpha_bar(t) / s.alpha_bar(t - 1);
            assert!((recovered - s.beta(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn full_reduction_is_identity() {
        let s = Schedule::log_linear(50, 0.01, 100.0).unwrap();
        let r = s.reduce(50).unwrap();
        for p in 1..=50 {
            assert_eq!(r.coeffs(p), s.coeffs(p));
        }
    }

    #[test]
    fn two_step_reduction_is_endpoint_ratio() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        let r = s.reduce(2).unwrap();
        assert_eq!(r.kept(), &[1, 200]);
        assert_eq!(r.effective_alpha(2), s.alpha_bar(200) / s.alpha_bar(1));
    }

    #[test]
    fn reduction_telescopes() {
        let s = Schedule::log_linear(200, 0.01, 100.0).unwrap();
        for count in [3, 10, 50, 137] {
            let r = s.reduce(count).unwrap();
            let mut cumulative = 1.0;
            for p in 1..=r.len() {
                cumulative *= r.effective_alpha(p);
                let parent = s.alpha_bar(r.kept()[p - 1]);
                assert!(((cumulative - parent) / parent).abs() < 1e-12);
            }
        }
        assert!(s.reduce(201).is_err());
        assert!(s.reduce(1).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        for spec in [
            ScheduleSpec::log_linear_default(),
            ScheduleSpec::LinearT1000,
        ] {
            let back: ScheduleSpec = spec.to_string().parse().unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.build().unwrap().steps(), spec.steps());
        }
    }

    #[test]
    fn csv_has_header_and_t_rows() {
        let s = Schedule::log_linear(5, 0.1, 10.0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("t,beta,alpha,alpha_bar\n1,"));
    }
}
