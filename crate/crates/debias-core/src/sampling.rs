//! Temperature-scaled softmax sampling.
//!
//! Temperature divides the logits before the softmax: low temperatures
//! concentrate probability on the argmax, `T = 1` reproduces the untempered
//! distribution, high temperatures flatten it. Used by tests and by any
//! local sampling backend; the remote client forwards temperature verbatim.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::math;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("temperature must be a positive finite number, got {0}")]
    NonPositiveTemperature(f64),
    #[error("distribution is degenerate: no index has positive probability")]
    DegenerateDistribution,
}

/// Normalized probabilities of `softmax(logits / temperature)`, computed
/// with max-subtraction so arbitrarily large logits cannot overflow.
///
/// `-inf` logits are legal and get probability 0; the distribution is
/// degenerate if no logit is finite or any is NaN.
pub fn tempered_distribution(logits: &[f64], temperature: f64) -> Result<Vec<f64>, SampleError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(SampleError::NonPositiveTemperature(temperature));
    }
    if logits.iter().any(|z| z.is_nan()) {
        return Err(SampleError::DegenerateDistribution);
    }
    let max = logits
        .iter()
        .copied()
        .filter(|z| z.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SampleError::DegenerateDistribution);
    }
    let mut probabilities: Vec<f64> = logits
        .iter()
        .map(|&z| math::exp((z - max) / temperature))
        .collect();
    let sum: f64 = probabilities.iter().sum();
    if !(sum > 0.0) {
        return Err(SampleError::DegenerateDistribution);
    }
    for p in probabilities.iter_mut() {
        *p /= sum;
    }
    Ok(probabilities)
}

/// Converts nonnegative weights to logits via `ln` (weight 0 → `-inf`).
///
/// Negative or NaN weights make the distribution invalid.
pub fn weights_to_logits(weights: &[f64]) -> Result<Vec<f64>, SampleError> {
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(SampleError::DegenerateDistribution);
    }
    Ok(weights.iter().map(|&w| math::ln(w)).collect())
}

/// Draws one index with probability proportional to
/// `softmax(logits / temperature)`.
///
/// Sampling is inverse-CDF over the normalized distribution, so a seeded
/// `rng` makes the draw sequence fully reproducible. Adding a constant to
/// every logit leaves the distribution unchanged.
pub fn temperature_sample(
    logits: &[f64],
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<usize, SampleError> {
    let probabilities = tempered_distribution(logits, temperature)?;
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_viable = None;
    for (index, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            last_viable = Some(index);
        }
        cumulative += p;
        if draw < cumulative && p > 0.0 {
            return Ok(index);
        }
    }
    // Floating-point drift can leave `cumulative` a hair below 1; fall back
    // to the last index with positive probability.
    last_viable.ok_or(SampleError::DegenerateDistribution)
}

/// [`temperature_sample`] over nonnegative weights instead of logits.
pub fn temperature_sample_weights(
    weights: &[f64],
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<usize, SampleError> {
    let logits = weights_to_logits(weights)?;
    temperature_sample(&logits, temperature, rng)
}
