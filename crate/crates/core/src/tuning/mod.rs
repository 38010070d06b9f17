//! The disentangled finetuning loop: loss assembly, optimization, seeding
//! and batching policy.

pub mod config;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use config::TrainConfig;
pub use loss::{compute_losses, LossParts, StagedBranch, COSINE_TAU};
pub use optim::AdamW;
pub use trainer::{
    trainable_param_count, IrrelevantBranch, StepRecord, Trainer, TunedState,
};
