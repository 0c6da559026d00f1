pub mod carleman;
pub mod error;
pub mod geometry;
pub mod numeric;
pub mod oracles;
pub mod quadrature;
pub mod reconstruct;
pub mod wavetrace;

pub use error::{Error, Result};
