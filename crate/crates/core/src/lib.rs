pub mod elements;
pub mod assembly;
pub mod bench;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod precond;

pub use error::{Error, Result};
