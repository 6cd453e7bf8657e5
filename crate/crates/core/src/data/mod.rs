//! Corpus ingestion, vocabularies, bag-of-words targets and batching.

mod batch;
mod corpus;
pub mod toy;
mod vocab;

pub use batch::{make_batches, Batch, SORT_CHUNK_BATCHES};
pub use corpus::{
    extract_bag, read_parallel, read_sentences, write_sentences, ExamplePair, ParallelCorpus, Sentence,
    DEFAULT_MAX_SENTENCE_LEN,
};
pub use toy::{ToyTask, ToyTaskSpec};
pub use vocab::{is_special, Vocab, BOS, EOS, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK};
