//! Embedding-based answering of conjunctive graph queries over typed
//! knowledge graphs.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod kg;
pub mod numeric;
pub mod operators;
pub mod params;
pub mod query;
pub mod selftest;
pub mod training;

pub use error::{Error, Result};
