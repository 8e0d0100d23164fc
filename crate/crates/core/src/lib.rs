//! Concolic analysis of fully-connected ReLU classifiers.
//!
//! A concrete input fixes every ReLU branch, which turns the network into an
//! affine map on that input's activation region. This crate computes that map
//! exactly ([`symexec`]), ranks input pixels by the output coefficients
//! ([`attribution`]), and searches for 1- and 2-pixel changes that flip the
//! predicted label without leaving the region ([`attack`]).

pub mod attack;
pub mod attribution;
pub mod cli;
pub mod data;
pub mod error;
pub mod network;
pub mod pipeline;
pub mod report;
pub mod symexec;

pub use error::{Error, Result};
pub use network::{load_network, ActivationPattern, ForwardResult, InputVector, Layer, Network};
