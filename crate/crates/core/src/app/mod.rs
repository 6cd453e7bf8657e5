//! Command-line application: configuration, training loop and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod train;

pub use commands::{
    build_vocab, evaluate_files, format_grad_check, gen_toy, grad_check, translate_file, translate_sentences,
    GradCheckOptions, TranslateOptions,
};
pub use config::{RunConfig, CONFIG_KEYS};
pub use train::{train, EpochRecord, TrainOutcome, FINAL_CHECKPOINT, LOG_HEADER, SRC_VOCAB_FILE, TGT_VOCAB_FILE};
