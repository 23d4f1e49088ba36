//! Training objective: frequency-modulation, semantic high-frequency and
//! segmentation losses, a finite-difference gradient checker, and a toy
//! trainer on synthetic scenes.

pub mod gradcheck;
mod losses;
mod train;

pub use gradcheck::{grad_check, Differentiable, FnDifferentiable, GradReport, GroupError, DEFAULT_STEP};
pub use losses::{
    fm_loss, fm_loss_grad, poly_lr, seg_loss, seg_loss_grad, shf_attention, shf_loss, shf_loss_grad, shf_targets,
    total_loss, LossWeights, SHF_ATTENTION_FLOOR,
};
pub use train::{
    train_toy, write_history, Divergence, Evaluation, HistoryRow, ToyModel, ToyProblem, TrainConfig, TrainOutcome,
    COMPRESSED_CHANNELS,
};
