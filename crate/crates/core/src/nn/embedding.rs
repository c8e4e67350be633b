use crate::error::{Error, Result};

/// Sinusoidal step embedding: the first half holds `sin(t * f_k)`, the second half
/// `cos(t * f_k)`, with frequencies `f_k = horizon^(-k / half)` geometrically spaced
/// from 1 down to `1 / horizon`.
pub fn time_embedding(t: usize, horizon: usize, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    write_time_embedding(t, horizon, &mut out)?;
    Ok(out)
}

/// In-place variant of [`time_embedding`] for building batched inputs.
pub fn write_time_embedding(t: usize, horizon: usize, out: &mut [f64]) -> Result<()> {
    let dim = out.len();
    if !dim.is_multiple_of(2) || dim == 0 {
        return Err(Error::config(format!(
            "time embedding dimension must be even and positive, got {dim}"
        )));
    }
    if t > horizon {
        return Err(Error::config(format!("step {t} exceeds horizon {horizon}")));
    }
    let half = dim / 2;
    let base = (horizon.max(2) as f64).ln();
    for k in 0..half {
        let freq = (-base * k as f64 / half as f64).exp();
        let angle = t as f64 * freq;
        out[k] = angle.sin();
        out[half + k] = angle.cos();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_zero_is_sin0_cos0() {
        assert_eq!(time_embedding(0, 10, 2).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn odd_dimension_is_config_error() {
        assert!(matches!(time_embedding(1, 10, 3), Err(Error::Config(_))));
    }

    #[test]
    fn distinct_and_bounded_over_horizon() {
        let horizon = 1000;
        let all: Vec<Vec<f64>> = (1..=horizon)
            .map(|t| time_embedding(t, horizon, 16).unwrap())
            .collect();
        for e in &all {
            assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert!(all[i] != all[j], "steps {} and {} collide", i + 1, j + 1);
            }
        }
    }
}
