//! A small, dependency-light CNN engine for lightweight image classifiers.
//!
//! The crate covers the whole loop at desk scale: rank-4 tensors with
//! hand-written forward/backward layers ([`layers`]), the custom architecture
//! zoo with exact parameter accounting ([`zoo`]), on-the-fly augmentation
//! ([`augment`]), training with label smoothing, mixup and stochastic weight
//! averaging ([`train`]), dataset containers ([`data`]) and a single-thread
//! latency harness ([`bench`]).

pub mod augment;
pub mod bench;
pub mod data;
pub mod error;
pub mod gradcheck;
mod image;
pub mod layers;
pub mod network;
pub mod reference;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use data::Dataset;
pub use error::{Error, Result};
pub use layers::{Cache, Layer, LayerKind, LayerSpec};
pub use network::Network;
pub use tensor::{Dims, Float, Rng, Tensor};
