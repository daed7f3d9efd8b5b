pub mod continuation;
pub mod error;
pub mod fixtures;
pub mod fuchsian;
pub mod group_analysis;
pub mod invariants;
pub mod linalg;
pub mod threebody;

pub use error::{Error, Result};
