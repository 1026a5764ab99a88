//! Minimal differentiable network engine: a fixed chain of dense layers with
//! elementwise nonlinearities, exact backprop, SGD with momentum and a
//! finite-difference gradient checker.

pub mod checkpoint;
pub mod gradcheck;
mod network;
mod optim;

pub use gradcheck::{grad_check, grad_check_report, BatchLoss, CrossEntropyLoss, GradCheckReport};
pub use network::{
    init_model, Activation, DenseParams, ForwardRecord, Gradients, LayerSpec, Model, NetworkSpec,
};
pub use optim::{fit, sgd_step, EpochStats, Objective, Sgd, TargetCrossEntropy, TrainConfig};
