//! The 3D-SCN network: a cross-channel 3D convolution over the six-channel
//! cube, strided 2D convolutions, ReLU after every layer, global average
//! pooling and a two-way softmax.

mod activation;
mod analysis;
mod config;
mod conv;
mod gradcheck;
mod io;
mod model;
mod scalar;
mod tensor;
mod train;

pub use activation::{global_avg_pool, global_avg_pool_backward, relu, relu_backward, softmax};
pub use analysis::{
    architecture_flops, avg_pool2x2, flop_count, fuse_conv_pool, fused_savings, param_count,
    FusionCost,
};
pub use config::{Architecture, LayerKind, LayerSpec, ScnConfig, N_CLASSES};
pub use conv::{conv2d, conv3d_cross_channel, flatten_planes, ConvGeometry, Padding};
pub use gradcheck::{
    gradient_check, random_small_architectures, relative_error, GradCheckReport, DEFAULT_EPS,
    DEFAULT_TOLERANCE,
};
pub use io::{decode_model, encode_model, load_model, model_file_size, save_model};
pub use model::{ConvLayer, Example, Gradients, ScnModel, GRAD_CHUNK};
pub use scalar::Real;
pub use tensor::Tensor;
pub use train::{
    evaluate, predict, train, train_with, EvalRecord, TrainHistory, TrainOptions,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("{path}: {1}", path = .0.display())]
    Io(PathBuf, #[source] std::io::Error),
    #[error("training data: {0}")]
    Data(String),
}
