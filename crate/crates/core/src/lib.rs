pub mod convex_geometry;
pub mod error;
pub mod finsler_volume;
pub mod length_space;
pub mod measures;
pub mod norms;
pub mod rectifiable;
pub mod sampling;

pub use error::{Error, Result};
