//! Three-level landmark CNN: kernels, inference, patch extraction, training
//! and augmentation. Arithmetic is f64 throughout.

use core::fmt;

mod augment;
mod cascade;
mod layers;
mod network;
mod patch;
mod tensor;
mod train;

pub use augment::{augment, mirror_sample, rotate_sample, LabeledFace, AUGMENT_ANGLE_DEG};
pub use cascade::{
    cascade_predict, cascade_predict_levels, center_predicting_weights, CascadeLevels, CascadeSpec, LandmarkCascade,
    NetRole, EN1_LANDMARKS, F1_INPUT, HALF_FACE_INPUT, LOCAL_INPUT, NM1_LANDMARKS, NUM_NETWORKS,
};
pub use layers::{
    conv_backward, conv_forward, conv_output_dim, fc_backward, fc_forward, maxpool_backward, maxpool_forward,
    mse_grad, mse_loss, relu, relu_backward, ConvGrads, FcGrads,
};
pub use network::{accumulate_gradient, backward, net_forward, LayerParams, LayerSpec, NetworkSpec, NetworkWeights};
pub use patch::{extract_patch, resample};
pub use tensor::Tensor;
pub use train::{
    build_face_pool, dataset_loss, network_samples, network_seed, sgd_train, train_cascade, train_network,
    CascadeTrainConfig, TrainHyper, TrainReport, TrainSample,
};

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    ShapeMismatch { expected: usize, actual: usize },
    KernelDoesNotFit,
    DegenerateRegion,
    InvalidSpec,
    WeightsMismatch,
    EmptyDataset,
    InvalidHyper,
    Diverged,
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::ShapeMismatch { expected, actual } => {
                write!(f, "shape mismatch: expected {expected} values, got {actual}")
            }
            NetError::KernelDoesNotFit => write!(f, "kernel or pool window does not fit its input"),
            NetError::DegenerateRegion => write!(f, "patch region is empty or outside the frame"),
            NetError::InvalidSpec => write!(f, "network specification is inconsistent"),
            NetError::WeightsMismatch => write!(f, "weights do not match the network specification"),
            NetError::EmptyDataset => write!(f, "training set is empty"),
            NetError::InvalidHyper => write!(f, "invalid training hyperparameters"),
            NetError::Diverged => write!(f, "training produced non-finite weights"),
        }
    }
}
