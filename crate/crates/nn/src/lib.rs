//! A deliberately small neural-network substrate.
//!
//! Each layer exposes a `forward` that returns its output together with
//! whatever it needs for the backward pass, and a `backward` that
//! accumulates parameter gradients and returns the input gradient. There is
//! no dynamic graph: models chain these calls explicitly. Everything is
//! generic over [`Scalar`] so the same code trains in `f32` and is gradient
//! checked in `f64`.

pub mod activation;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod loss;
pub mod module;
pub mod norm;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use activation::{gelu, gelu_backward};
pub use attention::{AttentionCache, AttentionConfig, MultiHeadSelfAttention};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use conv::{conv2d_3x3, conv2d_3x3_backward, Conv2d3x3};
pub use error::{NnError, Result};
pub use linear::{linear, linear_backward, Linear};
pub use loss::{cross_entropy, l1_loss, softmax_rows};
pub use module::{named_parameters, num_parameters, zero_grad, Module};
pub use norm::{instance_norm, layer_norm, InstanceNorm, LayerNorm};
pub use optim::{adam_update, Adam, AdamState};
pub use scalar::Scalar;
pub use tensor::Tensor;
