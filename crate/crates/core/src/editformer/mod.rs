//! Desk-verifiable implementation of the dual-guidance editing transformer:
//! frozen-backbone emulation, multi-stage feature extraction, gated
//! cross-attention branches, time-adaptive gating, and a training path with
//! finite-difference gradient verification.

pub mod checkpoint;
pub mod layers;
pub mod mat;
pub mod model;
pub mod scalar;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{Attention, Ffn, GateMlp, LayerNorm, Linear, timestep_embedding};
pub use mat::Mat;
pub use model::{
    FEATURE_T1_DEFAULT, FEATURE_T2_DEFAULT, FeatureSets, ForwardCache, GatePair, LayerWeights,
    ModelConfig, ModelError, ToyEditFormer, TrainableGrads,
};
pub use scalar::Scalar;
pub use train::{
    AdamW, GradCheckReport, TrainSample, batch_loss_and_grads, build_toy_batch, cfm_loss_tokens,
    frozen_group_hash, grad_check, randomize_trainable, sample_loss, train_step,
};
