//! Domain alignment numerics: an MMD estimator with a permutation test,
//! small autoencoders with a logistic domain head, gradient-reversal and
//! MMD alignment training with hand-written backprop, Adam, and a
//! finite-difference gradient checker.

mod autoencoder;
mod matrix;
mod mmd;
mod params;
mod train;

pub use autoencoder::{AeShape, AlignModel, Autoencoder};
pub use matrix::Matrix;
pub use mmd::{median_sq_distance, mmd, mmd_grad, permutation_test, Bandwidth, KernelConfig, PermutationTest};
pub use params::{Adam, AdamConfig, Dense, ParamSet};
pub use train::{
    adversarial_gradients, alpha_schedule, grad_check, grad_check_adversarial, grad_check_mmd, grl_train_step,
    mmd_align_train_step, mmd_gammas, mmd_gradients, train_adversarial, train_mmd_alignment, write_loss_curve,
    AlignConfig, GradCheck, GrlWeights, LossReport, LossTerm, SyntheticBatch,
};


#[cfg(test)]
mod tests;
