pub mod algebra;
pub mod control;
pub mod error;
pub mod linalg;
pub mod sim;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use nalgebra;
