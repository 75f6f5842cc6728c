//! Negative sampling, losses, Adam, and the epoch loop.

mod adam;
mod loss;
mod state;
mod trainer;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState, ModelGrads};
pub use loss::{loss_linear_margin, loss_log_softmax, loss_margin_mean, sample_negatives, LossGrad};
pub use state::{load_train_state, save_train_state, train_state_from_bytes, train_state_to_bytes};
pub use trainer::{
    batch_loss, batch_loss_and_grads, resume, train, train_with, BestSnapshot, EpochReport, LossKind, TrainConfig,
    TrainOutcome, TrainState,
};
