//! Domain-adaptation loss stack at toy scale: a small reverse-mode tape,
//! per-location extractors and domain classifiers behind gradient reversal,
//! the adversarial, consistency and total losses, finite-difference checks
//! and an adversarial training loop on two synthetic domains.

mod gradcheck;
mod graph;
mod losses;
mod model;
mod nn;
mod tensor;
mod train;

use thiserror::Error;

pub use gradcheck::{
    check_model, check_ops, gradcheck, relative_error, GradcheckOptions, GradcheckReport, OpCheck,
};
pub use graph::{log_sum_exp, sigmoid, Gradients, Graph, Var};
pub use losses::{
    anchor_level_loss, clamp_prob, consistency_loss, level_mean, sample_level_loss, total_loss,
    toy_detection_loss, LevelMaps, LevelReduction, LossBreakdown, PROB_CLAMP,
};
pub use model::{
    forward_backward, Domain, DomainBatch, ForwardBackward, LossConfig, ToyModel, ToyModelConfig,
    ToySample,
};
pub use nn::{Activation, Adam, Dense, DomainClassifier, FeatureExtractor, GrlConfig};
pub use tensor::Tensor;
pub use train::{
    domain_probe, generate_toy_domains, task_accuracy, toy_adversarial_train, EpochLog, ToyDataConfig,
    ToyDataset, TrainConfig, TrainReport, REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum DaError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch: {0}")]
    EmptyBatch(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("non-finite {0}")]
    NonFiniteLoss(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize, report: Box<TrainReport> },
}
