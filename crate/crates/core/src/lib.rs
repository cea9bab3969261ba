//! Dual-stream LSTM video captioner with a caption evaluation suite.

pub mod cli;
pub mod dataset;
pub mod decoding;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod text;
pub mod training;

pub use error::{Error, Result};
