//! Two-class softmax classifier over hashed n-gram features.
//!
//! The model is a linear head: logits `z_c = bias_c + Σ_i weights[c][i]·x_i`
//! for classes `c ∈ {Hate, NoHate}`, passed through a numerically stable
//! softmax. It is trained with binary cross-entropy on the hate probability
//! using Adam with decoupled weight decay (see [`adam_step`] and [`train`]).

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{train, TrainError};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::{featurize, tokenize, FeatureConfig, FeatureVector};
use crate::math;

/// Classification decision threshold used when the caller does not supply
/// one: `p_hate ≥ τ` classifies as `Hate` (ties go to `Hate`).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Probabilities are clamped to `[CLAMP, 1 − CLAMP]` before logarithms in
/// the loss.
const CLAMP: f64 = 1e-12;

/// Training hyperparameters. The defaults are the artifact's reference
/// configuration: 3 epochs, learning rate 5e-5, weight decay 0.5, Adam
/// betas (0.9, 0.999), epsilon 1e-8, batch size 16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "d_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_eps")]
    pub adam_eps: f64,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_shuffle")]
    pub shuffle: bool,
}

fn d_epochs() -> usize {
    3
}
fn d_learning_rate() -> f64 {
    5e-5
}
fn d_weight_decay() -> f64 {
    0.5
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}
fn d_batch_size() -> usize {
    16
}
fn d_shuffle() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: 5e-5,
            weight_decay: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainConfigError {
    #[error("learning_rate must be positive, got {0}")]
    NonPositiveLearningRate(f64),
    #[error("weight_decay must be nonnegative, got {0}")]
    NegativeWeightDecay(f64),
    #[error("adam betas must lie in [0, 1), got beta1={beta1} beta2={beta2}")]
    BetaOutOfRange { beta1: f64, beta2: f64 },
    #[error("adam_eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("batch_size must be at least 1")]
    ZeroBatchSize,
}

impl TrainConfig {
    /// Checks the hyperparameter ranges. `epochs = 0` is allowed and means
    /// "return the zero-initialized model untrained".
    pub fn validate(&self) -> Result<(), TrainConfigError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainConfigError::NonPositiveLearningRate(self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TrainConfigError::NegativeWeightDecay(self.weight_decay));
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.adam_beta1) || !beta_ok(self.adam_beta2) {
            return Err(TrainConfigError::BetaOutOfRange {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
            });
        }
        if !(self.adam_eps > 0.0) {
            return Err(TrainConfigError::NonPositiveEps(self.adam_eps));
        }
        if self.batch_size == 0 {
            return Err(TrainConfigError::ZeroBatchSize);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("feature index {index} out of range for dimension {dimension}")]
    DimensionMismatch { index: usize, dimension: usize },
    #[error("batch must be nonempty")]
    EmptyBatch,
}

/// A trained (or zero-initialized) classifier: feature extraction config
/// plus the dense parameters of the 2-class softmax head.
///
/// Row 0 of `weights` scores `Hate`, row 1 scores `NoHate`; `bias` follows
/// the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub feature_config: FeatureConfig,
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
    /// Seconds since the Unix epoch when training finished; `0` means unset.
    /// [`train`] leaves this at `0` so identical runs serialize identically.
    pub trained_at: u64,
    /// Echo of the configuration the model was trained with.
    pub train_config: TrainConfig,
}

/// Class index into the weight/bias arrays.
pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::Hate => 0,
        Label::NoHate => 1,
    }
}

impl ClassifierModel {
    /// A zero-initialized model. `feature_config` is validated and
    /// canonicalized first.
    pub fn zeroed(
        mut feature_config: FeatureConfig,
        train_config: TrainConfig,
    ) -> Result<Self, crate::features::FeatureConfigError> {
        feature_config.validate()?;
        let dim = feature_config.dimension;
        Ok(Self {
            feature_config,
            weights: [vec![0.0; dim], vec![0.0; dim]],
            bias: [0.0, 0.0],
            trained_at: 0,
            train_config,
        })
    }

    pub fn dimension(&self) -> usize {
        self.feature_config.dimension
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.bias.iter().all(|b| b.is_finite())
            && self.weights.iter().flatten().all(|w| w.is_finite())
    }
}

/// A classification decision: hard label plus the hate probability that
/// doubles as the per-text bias score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub p_hate: f64,
}

/// Numerically stable two-way softmax (max-subtraction before `exp`).
fn softmax2(z_hate: f64, z_nohate: f64) -> (f64, f64) {
    let m = if z_hate >= z_nohate { z_hate } else { z_nohate };
    let e_hate = math::exp(z_hate - m);
    let e_nohate = math::exp(z_nohate - m);
    let sum = e_hate + e_nohate;
    (e_hate / sum, e_nohate / sum)
}

fn logits(model: &ClassifierModel, features: &FeatureVector) -> (f64, f64) {
    let mut z = model.bias;
    for (index, value) in features.entries() {
        z[0] += model.weights[0][index] * value;
        z[1] += model.weights[1][index] * value;
    }
    (z[0], z[1])
}

/// Computes the probability pair `(p_hate, p_nohate)`.
///
/// The pair sums to 1 within 1e-9 and the computation is overflow-safe for
/// logits of any magnitude thanks to max-subtraction.
pub fn forward(
    model: &ClassifierModel,
    features: &FeatureVector,
) -> Result<(f64, f64), ClassifierError> {
    if let Some(index) = features.max_index() {
        if index >= model.dimension() {
            return Err(ClassifierError::DimensionMismatch {
                index,
                dimension: model.dimension(),
            });
        }
    }
    let (z_hate, z_nohate) = logits(model, features);
    Ok(softmax2(z_hate, z_nohate))
}

/// Binary cross-entropy of the hate probability against the true label.
///
/// `loss = −[y·ln p + (1−y)·ln(1−p)]` with `y = 1` for `Hate`; `p` is
/// clamped to `[1e-12, 1 − 1e-12]` before the logarithms, so the result is
/// finite for any input in `[0, 1]`.
pub fn bce_loss(p_hate: f64, label: Label) -> f64 {
    let p = p_hate.clamp(CLAMP, 1.0 - CLAMP);
    match label {
        Label::Hate => -math::ln(p),
        Label::NoHate => -math::ln(1.0 - p),
    }
}

/// Gradient of the mean batch BCE with respect to the model parameters,
/// plus the mean loss itself (a free byproduct of the forward pass).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
    /// Mean BCE over the batch at the current parameters.
    pub mean_loss: f64,
}

/// Computes the analytic gradient of the mean BCE over a batch.
///
/// Per example the softmax-cross-entropy identity gives
/// `dz_c = softmax(z)_c − 1{c = y}`; these accumulate `x`-weighted into the
/// weight rows and directly into the bias, then everything is divided by the
/// batch size.
pub fn batch_gradient(
    model: &ClassifierModel,
    batch: &[(FeatureVector, Label)],
) -> Result<ParamGradients, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let dim = model.dimension();
    let mut grads = ParamGradients {
        weights: [vec![0.0; dim], vec![0.0; dim]],
        bias: [0.0, 0.0],
        mean_loss: 0.0,
    };
    for (features, label) in batch {
        let (p_hate, p_nohate) = forward(model, features)?;
        grads.mean_loss += bce_loss(p_hate, *label);
        let target = class_index(*label);
        let dz = [
            p_hate - if target == 0 { 1.0 } else { 0.0 },
            p_nohate - if target == 1 { 1.0 } else { 0.0 },
        ];
        for c in 0..2 {
            for (index, value) in features.entries() {
                grads.weights[c][index] += dz[c] * value;
            }
            grads.bias[c] += dz[c];
        }
    }
    let n = batch.len() as f64;
    for row in grads.weights.iter_mut() {
        for g in row.iter_mut() {
            *g /= n;
        }
    }
    for g in grads.bias.iter_mut() {
        *g /= n;
    }
    grads.mean_loss /= n;
    Ok(grads)
}

/// Classifies a text with the default threshold of 0.5.
pub fn predict(model: &ClassifierModel, text: &str) -> Classification {
    predict_with_threshold(model, text, DEFAULT_THRESHOLD)
}

/// Classifies a text: tokenize → featurize → forward, then threshold.
///
/// `p_hate ≥ threshold` labels the text `Hate` (ties classify as hate — the
/// conservative moderation default). Empty text is valid and is scored from
/// the bias terms alone.
pub fn predict_with_threshold(model: &ClassifierModel, text: &str, threshold: f64) -> Classification {
    let tokens = tokenize(text, &model.feature_config);
    let features = featurize(&tokens, &model.feature_config);
    let (p_hate, _) = forward(model, &features)
        .expect("featurize always produces indices below the configured dimension");
    let label = if p_hate >= threshold {
        Label::Hate
    } else {
        Label::NoHate
    };
    Classification { label, p_hate }
}
