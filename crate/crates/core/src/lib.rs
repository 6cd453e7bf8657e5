//! Attention-based LSTM encoder-decoder for translation, trained with a
//! word-level cross-entropy plus a sentence-level bag-of-words target.

pub mod app;
pub mod autodiff;
pub mod data;
pub mod model;
pub mod inference;
pub mod metrics;
pub mod objectives;
pub mod error;

pub use error::{Error, Result};
