//! Gradient descent on deep linear residual networks with zero-asymmetric
//! initialization, plus runtime checks of the invariants that drive its
//! convergence.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod invariants;
pub mod linnet;
pub mod matrix;
pub mod resnet;
pub mod rng;

pub use error::{Error, Result};
pub use linnet::{init_network, InitScheme, LinearNet};
pub use matrix::Matrix;
pub use rng::RngState;
