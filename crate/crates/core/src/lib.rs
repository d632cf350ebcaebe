pub mod error;
pub mod flow;
pub mod holonomy;
pub mod models;
pub mod tensor;
pub mod verify;
pub mod wedge;

pub use error::{Error, Result};
