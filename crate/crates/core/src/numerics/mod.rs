//! Dense linear algebra, the trainable feature encoder with analytic
//! gradients, plain SGD, and momentum parameter averaging.

pub mod encoder;
pub mod gradcheck;
pub mod linalg;

pub use encoder::{
    encode, encode_backward, learning_rate_at, momentum_update, sgd_step, EncoderParams,
    ForwardCache, Layer, MomentumParams, ParamGrads,
};
