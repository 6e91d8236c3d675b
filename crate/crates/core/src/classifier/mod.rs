//! Bag-of-words softmax regression over preprocessed post text.

mod features;
mod model;
mod preprocess;

pub use features::{fit_features, FeatureConfig, FeatureSpace, SparseVec, Weighting};
pub use model::{
    argmax, class_weights, featurize, softmax, train, ClassWeighting, Classify, EpochStats, Example, LinearModel,
    Params, Prediction, TrainConfig, TrainingMeta,
};
pub use preprocess::{preprocess, PreprocessConfig};

use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

/// Fits the vocabulary on `train_posts` and trains a model.
pub fn fit_model(train_posts: &[Post], valid_posts: &[Post], cfg: &ModelConfig) -> Result<LinearModel> {
    let fs = fit_features(train_posts, &cfg.preprocess, &cfg.features)?;
    train(train_posts, valid_posts, fs, &cfg.train)
}
