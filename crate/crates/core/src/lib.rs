//! Lesion-focused classifier training with a CAM-guided attention loss.
//!
//! The library trains a small CAM-compatible convolutional network
//! (conv stack -> global average pool -> FC -> sigmoid) for binary
//! lesion classification while penalizing class activation maps that
//! stray outside an elliptical lesion mask. A synthetic image generator
//! with controllable spurious artifacts (ruler marks, ink dots, corner
//! vignettes) makes the information-leakage effect measurable without
//! any external dataset.
//!
//! Module map:
//! * [`tensor`] — dense tensors with reverse-mode automatic differentiation
//! * [`network`] — the CAM-compatible classifier and CAM extraction
//! * [`geometry`] — bounding boxes, elliptical masks, CAM normalization
//! * [`loss`] / [`metrics`] — attention/classification/composite losses, AUC
//! * [`data`] — synthetic dataset generation, netpbm IO, preprocessing,
//!   augmentation, stratified folds
//! * [`train`] — SGD loop, early stopping, cross-validation, evaluation
//! * [`checkpoint`] — binary weight serialization
//! * [`heatmap`] — CAM heatmap and overlay export

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use data::Sample;
pub use error::Error;
pub use geometry::{BoundingBox, EllipseMask, NormalizedCam};
pub use loss::{JaccardVariant, LossBundle, LossConfig};
pub use network::{CamMap, CamNet, NetworkConfig};
pub use scalar::Scalar;
pub use tensor::{GradGraph, Tensor};
pub use train::{AttentionMode, EpochLog, EvalReport, TrainConfig};
