//! Long-context memory laboratory: BABILong-style needle-in-a-haystack data
//! generation and a Recurrent Memory Transformer (with self-retrieval)
//! trained from scratch on it.

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod autograd;
pub mod corpus;
pub mod dataset;
pub mod encode;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod mixer;
pub mod model;
pub mod oracle;
pub mod prompt;
pub mod retrieval;
pub mod rmt;
pub mod tensor;
pub mod text;
pub mod tokenizer;
pub mod train;
pub mod world;

pub use error::{Error, Result};
