//! Neural-collapse statistics, nearest-class-center few-shot evaluation and
//! transfer-risk bounds for foundation-model embeddings.

pub mod bounds;
pub mod data_io;
pub mod error;
pub mod metrics;
pub mod ncc;
pub mod numerics;
pub mod relu_net;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
