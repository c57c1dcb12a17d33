//! A small dense convolution engine with hand-written backward passes.

mod container;
mod layer;
mod net;
mod optim;
mod tensor;

pub use container::{
    decode_tensors, encode_tensors, load_tensors, save_tensors, NamedTensor, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use layer::{pixel_shuffle, pixel_unshuffle, softmax_channels, Conv3x3, InstanceNorm, Layer, NORM_EPS};
pub use net::{ForwardCache, Grads, Net, DEFAULT_SLOPE, DEFAULT_WIDTH};
pub use optim::{charbonnier_loss, charbonnier_slices, Adam};
pub use tensor::Tensor4;
