//! Translation-tolerant metric learning on single-channel feature maps.
//!
//! A small residual fully-convolutional network maps a grayscale image to a
//! quarter-resolution feature map. Two maps are compared by the minimum, over
//! a window of integer offsets, of their mean squared difference on the
//! overlapping region. Training uses a triplet hinge on that shifted distance.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`).

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod input;
pub mod loss;
pub mod map;
pub mod matching;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod train;
pub mod verify;

pub use config::{DataConfig, ExperimentConfig};
pub use dataset::{DatasetSplit, LabeledDataset, LabeledImage};
pub use error::{Error, ErrorClass, Result};
pub use eval::{Aggregation, EvalReport, LabeledMaps, Protocol, ScoreMatrix, ScoreSet};
pub use input::InputImage;
pub use loss::{LossConfig, SstlForward, TripletGradients, TripletMaps};
pub use map::{common_region, shift_map, CommonRegion, FeatureMap, ShiftOffset, ShiftWindow};
pub use matching::{match_score, minimum_shifted_loss, shifted_distance, MatchResult};
pub use nn::{Architecture, NetworkParameters};
pub use scalar::Scalar;
pub use synth::SyntheticSpec;
pub use train::{LossKind, OptimizerKind, TrainConfig, TrainOutcome};

pub type FeatureMapF32 = FeatureMap<f32>;
pub type FeatureMapF64 = FeatureMap<f64>;
pub type ParamsF32 = NetworkParameters<f32>;
pub type ParamsF64 = NetworkParameters<f64>;
