//! Hybrid semantic question matching: attentive recurrent question encoders
//! trained with a max-margin ranking loss, fused with a two-layer question
//! taxonomy classifier and dependency-based focus extraction, plus IR
//! baselines and a ranking/classification evaluation harness.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod focus;
pub mod fusion;
pub mod numerics;
mod rnn;
pub mod seed;
pub mod taxonomy;

pub use error::{Error, Result};
