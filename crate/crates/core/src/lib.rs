//! Structured scene parsing with a convolutional pixel labeler feeding a
//! recursive merge network.
//!
//! The pipeline: a small fully convolutional network scores every pixel,
//! labeled pixels are pooled per category with Log-Sum-Exp pooling, and a
//! recursive network greedily merges the pooled entities into a binary tree
//! whose internal nodes carry relation labels. Training is weakly
//! supervised: each image comes with a semantic tree distilled from a
//! sentence, and an EM loop alternates between estimating latent label maps
//! and merge orders and updating all parameters by backpropagation.

pub mod error;
pub mod exec;
pub mod labeler;
pub mod losses;
pub mod metrics;
pub mod nncore;
pub mod pooling;
pub mod rnn;
pub mod synthdata;
pub mod trainer;
pub mod treeconv;

pub use error::{read_json, write_json, Error, Result};
pub use exec::Exec;
