//! Minimal neural-network building blocks with hand-written backward passes.
//! Image tensors are NHWC; feature tensors are `[batch, features]`.

mod conv;
mod encoder;
mod layers;
mod linear;
mod optim;
mod param;

pub use conv::{Conv2d, ConvCache};
pub use encoder::{Encoder, EncoderCache, EncoderSpec, BOTTLENECK_EXPANSION};
pub use layers::{
    global_avg_pool, global_avg_pool_backward, maxpool2_backward, maxpool2_forward, relu_backward, relu_inplace,
    BatchNorm, BnCache,
};
pub use linear::{Linear, Mlp, MlpCache};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use param::{copy_values, Module, Param};
