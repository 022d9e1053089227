//! Temporally folded convolutional networks: a self-contained deep-learning
//! library and CLI for sequence forecasting and classification.

pub mod cli;
pub mod config;
pub mod data;
pub mod io;
pub mod layers;
pub mod model;
pub mod train;
pub mod tensor;
pub(crate) mod util;
