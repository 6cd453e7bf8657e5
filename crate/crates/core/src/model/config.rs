use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What the word generator reads at each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeneratorInput {
    /// `s_t = W_g v_t + b_g` on the attention context alone.
    #[default]
    Context,
    /// `s_t = W_g [q_t; v_t] + b_g`.
    Concat,
}

impl GeneratorInput {
    pub(crate) fn code(self) -> u8 {
        match self {
            GeneratorInput::Context => 0,
            GeneratorInput::Concat => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(GeneratorInput::Context),
            1 => Ok(GeneratorInput::Concat),
            c => Err(Error::Checkpoint(format!("unknown generator input code {c}"))),
        }
    }
}

impl FromStr for GeneratorInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(GeneratorInput::Context),
            "concat" => Ok(GeneratorInput::Concat),
            other => Err(Error::Config(format!(
                "unknown generator input {other:?} (expected context or concat)"
            ))),
        }
    }
}

impl fmt::Display for GeneratorInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorInput::Context => "context",
            GeneratorInput::Concat => "concat",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub emb_size: usize,
    pub hidden_size: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub dropout: f64,
    pub generator_input: GeneratorInput,
}

impl ModelConfig {
    /// 512-unit embeddings and states, 3 encoder and 2 decoder layers, dropout 0.2.
    pub fn standard(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            emb_size: 512,
            hidden_size: 512,
            enc_layers: 3,
            dec_layers: 2,
            dropout: 0.2,
            generator_input: GeneratorInput::Context,
        }
    }

    /// Small single-layer model for tests and toy tasks.
    pub fn toy(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            emb_size: 8,
            hidden_size: 8,
            enc_layers: 1,
            dec_layers: 1,
            dropout: 0.0,
            generator_input: GeneratorInput::Context,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("emb_size", self.emb_size),
            ("hidden_size", self.hidden_size),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub(crate) fn generator_width(&self) -> usize {
        match self.generator_input {
            GeneratorInput::Context => self.hidden_size,
            GeneratorInput::Concat => 2 * self.hidden_size,
        }
    }
}
