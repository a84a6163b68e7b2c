pub mod binormal;
pub mod continuation;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod hasimoto;
pub mod io;
pub mod linear_weighted;
pub mod nls;
pub mod selfsimilar;
pub mod trace_series;
pub mod verify;

pub use error::{Error, Result};
