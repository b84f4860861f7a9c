//! Actor-critic policy, clipped-surrogate optimization and the training loop.

pub mod network;
pub mod ppo;
mod trainer;

pub use network::{ObsBatch, PolicyNetwork, PolicyOutput, ValueNormalizer, ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{
    adaptive_lr, clipped_surrogate, compute_advantages, entropy, gaussian_kl, log_prob, loss_and_grads, sample, to_action,
    LossBatch, LossConfig, LossStats,
};
pub use trainer::{
    ConfigError, TrainConfig, TrainError, TrainSetup, Trainer, TrainerMeta, TrainerSnapshot, UpdateMetrics,
};
