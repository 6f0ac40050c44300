pub mod banach;
pub mod bessel;
pub mod decomp;
pub mod error;
pub mod fitting;
pub mod green;
pub mod kernel;
pub mod lattice;
pub mod quad;
pub mod spectral;
pub mod symtensor;
pub mod verify;

pub use error::{Error, Result};
