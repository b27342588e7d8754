pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod linsvm;
pub mod matrix;
pub mod mbkl;
pub mod seed;
pub mod stumps;

pub use error::{MbklError, Result};
