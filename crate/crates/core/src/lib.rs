pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod relevance;
pub mod retrieval;
pub mod sampling;
pub mod scheduler;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
