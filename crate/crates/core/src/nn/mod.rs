//! A deliberately small neural network stack.
//!
//! Tensors are flat buffers with explicit shapes; layers are an enum with
//! hand-written forward and backward passes. There is no autograd graph:
//! the encoder replays its layer list in reverse and accumulates parameter
//! gradients into a [`params::ParamSet`]. Gradient code is checked against
//! central finite differences in `f64`, then the same generic code trains
//! in `f32`.

pub mod checkpoint;
pub mod encoder;
pub mod gradcam;
pub mod layers;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use encoder::{ConvBlockSpec, Encoder, EncoderSpec, Forward};
pub use gradcam::{gradcam, GradcamMap};
pub use params::ParamSet;
pub use tensor::{Scalar, Tensor};
