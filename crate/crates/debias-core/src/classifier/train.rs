//! Mini-batch training loop: seeded shuffle, sequential batches, one Adam
//! step per batch.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    adam_step, batch_gradient, AdamState, ClassifierModel, TrainConfig, TrainConfigError,
};
use crate::corpus::{Corpus, Label};
use crate::features::{featurize, tokenize, FeatureConfig, FeatureConfigError, FeatureVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training corpus must contain both labels")]
    SingleClassCorpus,
    #[error(transparent)]
    Feature(#[from] FeatureConfigError),
    #[error(transparent)]
    Config(#[from] TrainConfigError),
}

/// Trains a classifier from a zero-initialized model.
///
/// Each epoch: shuffle the example order (when `config.shuffle`; seeded, so
/// fully deterministic), walk it in `batch_size` chunks (the final short
/// batch is trained, not dropped), and apply one [`adam_step`] per batch.
/// After every epoch `progress` receives `(epoch_index, mean_loss)` where
/// the mean is over all examples as they were visited.
///
/// `epochs = 0` returns the zero-initialized model and emits no progress.
/// The result has `trained_at = 0` so that identical inputs serialize to
/// identical bytes; callers that want a timestamp set it afterwards.
pub fn train(
    corpus: &Corpus,
    feature_config: &FeatureConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<ClassifierModel, TrainError> {
    if corpus.count(Label::Hate) == 0 || corpus.count(Label::NoHate) == 0 {
        return Err(TrainError::SingleClassCorpus);
    }
    config.validate()?;
    let mut model = ClassifierModel::zeroed(feature_config.clone(), config.clone())?;

    let featurized: Vec<(FeatureVector, Label)> = corpus
        .iter()
        .map(|e| {
            let tokens = tokenize(&e.text, &model.feature_config);
            (featurize(&tokens, &model.feature_config), e.label)
        })
        .collect();

    let mut state = AdamState::zeroed(model.dimension());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..featurized.len()).collect();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(FeatureVector, Label)> =
                chunk.iter().map(|&i| featurized[i].clone()).collect();
            let grads = batch_gradient(&model, &batch)
                .expect("chunks of a nonempty corpus are nonempty");
            loss_sum += grads.mean_loss * batch.len() as f64;
            adam_step(&mut model, &grads, &mut state, config);
        }
        progress(epoch, loss_sum / featurized.len() as f64);
    }
    Ok(model)
}
