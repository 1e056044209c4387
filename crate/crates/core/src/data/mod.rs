//! Bag datasets: JSONL ingestion, encoding, position features, batching
//! and a synthetic corpus generator.

mod dataset;
mod embeddings;
pub mod synth;
mod vocab;

pub use dataset::{
    build_relation_vocab, load_dataset, make_batches, read_raw_bags, relative_positions, write_raw_bags, Bag,
    Dataset, Instance, LoadOptions, RawBag, RawSentence, NONE_RELATIONS,
};
pub use embeddings::{read_embeddings, PretrainedEmbeddings};
pub use synth::{contains_pattern, generate_raw, generate_synthetic, SynthSpec};
pub use vocab::{Vocab, BLANK, BLANK_ID, UNK, UNK_ID};
