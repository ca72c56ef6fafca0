//! Minimal deterministic feed-forward framework: tensors, layers with manual
//! backpropagation, the reconstruction loss, Adam, finite-difference gradient
//! checking and a binary container for trained parameters.

pub mod adam;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod network;
pub mod serialize;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use layer::{BatchNorm, Conv1d, Dense, Dropout, Layer, Mode};
pub use loss::{softmax_xent_batch, softmax_xent_per_position};
pub use network::{mix_seed, Network, Tape};
pub use tensor::Tensor;
