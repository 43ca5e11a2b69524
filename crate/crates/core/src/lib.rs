//! Sequential conditional synthesis of tabular microdata.

pub mod combine;
mod error;
pub mod fit;
mod linalg;
pub mod rng;
pub mod sdc;
pub mod sim;
pub mod synth;
pub mod table;
pub mod utility;

pub use error::{Error, Result};
