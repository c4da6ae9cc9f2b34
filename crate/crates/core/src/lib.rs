pub mod control;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod openloop;
pub mod projection;
pub mod reduction;
pub mod riccati;
pub mod scalar;
pub mod tensors;

pub use error::{Error, Result};
pub use scalar::Real;
