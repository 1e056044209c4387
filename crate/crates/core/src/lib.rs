//! Relation extraction over distantly supervised sentence bags with
//! matrix-valued self-attention at the word and the sentence level.
//!
//! A sentence is embedded (words plus head/tail relative positions),
//! encoded by a BiLSTM, and summarized by a structured word-level
//! attention with `r_l1` rows whose flattened output goes through a ReLU
//! MLP. The instance representations of a bag are then weighed by a
//! structured sentence-level attention with `r_l2` rows, averaged to one
//! weighting, and the weighted sum is classified. `r_l2 = 1` gives the
//! single-row (MLSSA-1) variant.
//!
//! ```text
//! Instance ─ encoder ─ H ─ word_attention ─ O_j ┐
//! Instance ─ encoder ─ H ─ word_attention ─ O_j ┼─ sent_attention ─ p(r | bag)
//! Instance ─ encoder ─ H ─ word_attention ─ O_j ┘
//! ```
//!
//! Every operation is differentiable through [`numcore::Tape`], trained
//! with ADAM in [`training`], and scored with the held-out protocols in
//! [`evaluation`].

pub mod cli;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod numcore;
pub mod sent_attention;
pub mod training;
pub mod word_attention;

pub use config::{ModelConfig, Variant};
pub use error::{Error, Result};
pub use model::Model;
