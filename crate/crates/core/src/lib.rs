//! Device-independent self-test of a Bell-pair source with two untrusted
//! measurement devices.

pub mod device;
pub mod engine;
pub mod error;
pub mod ideal;
pub mod io;
pub mod random;
mod serde_nan;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
