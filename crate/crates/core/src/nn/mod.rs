//! The residual feature network, its layers and checkpoints.

pub mod checkpoint;
pub mod conv;
pub mod network;
pub mod norm;
pub mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use network::{Architecture, Backward, ForwardCache, NetworkParameters, StemLayer};
pub use norm::instance_norm;
