mod dataset;
mod mlp;
mod rollout;
mod train;

pub use dataset::{Dataset, DATASET_HEADER};
pub use mlp::{InputEncoding, Layer, Mlp, Normalizer, MODEL_FORMAT_VERSION};
pub use rollout::{evaluate_rollouts, train_models, LearnedSteering, RolloutSettings, RolloutStats, TrainedModels};
pub use train::{train_regressor, TrainConfig, TrainReport};
