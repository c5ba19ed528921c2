pub mod bifurcation;
pub mod curve;
pub mod error;
pub mod gradients;
pub mod harness;
pub mod integral_op;
pub mod netparam;
pub mod train;
pub mod specfun;

pub use error::{Error, Result};
