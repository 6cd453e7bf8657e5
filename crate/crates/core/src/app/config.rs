use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::BeamConfig;
use crate::model::{GeneratorInput, ModelConfig};
use crate::objectives::{AdamConfig, BagLoss, ScheduleParams, DEFAULT_CLIP_NORM};

/// Everything a training or decoding run depends on. The seed determines
/// every random draw: initialization, then per epoch the shuffle, then per
/// batch the dropout masks.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train_src: Option<PathBuf>,
    pub train_tgt: Option<PathBuf>,
    pub valid_src: Option<PathBuf>,
    pub valid_tgt: Option<PathBuf>,
    pub src_vocab: Option<PathBuf>,
    pub tgt_vocab: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    /// Defaults to `train.log` inside the checkpoint directory.
    pub log_file: Option<PathBuf>,

    pub vocab_size: usize,
    pub max_sentence_len: usize,
    pub bag_keep_duplicates: bool,

    pub emb_size: usize,
    pub hidden_size: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub dropout: f64,
    pub generator_input: GeneratorInput,

    pub schedule: ScheduleParams,
    pub baseline: bool,
    pub bag_loss: BagLoss,
    pub adam: AdamConfig,
    /// Per-epoch learning-rate factor applied from `lr_decay_start` on;
    /// 1.0 keeps the rate constant.
    pub lr_decay: f64,
    pub lr_decay_start: usize,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beam: BeamConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::standard(0, 0);
        RunConfig {
            train_src: None,
            train_tgt: None,
            valid_src: None,
            valid_tgt: None,
            src_vocab: None,
            tgt_vocab: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_file: None,
            vocab_size: 50_000,
            max_sentence_len: crate::data::DEFAULT_MAX_SENTENCE_LEN,
            bag_keep_duplicates: false,
            emb_size: model.emb_size,
            hidden_size: model.hidden_size,
            enc_layers: model.enc_layers,
            dec_layers: model.dec_layers,
            dropout: model.dropout,
            generator_input: model.generator_input,
            schedule: ScheduleParams::default(),
            baseline: false,
            bag_loss: BagLoss::InBag,
            adam: AdamConfig::default(),
            lr_decay: 1.0,
            lr_decay_start: 0,
            clip_norm: DEFAULT_CLIP_NORM,
            batch_size: 64,
            epochs: 10,
            beam: BeamConfig::default(),
            seed: 1,
        }
    }
}

/// Keys accepted by [`RunConfig::set`]; identical to the long flag names.
pub const CONFIG_KEYS: &[&str] = &[
    "train-src",
    "train-tgt",
    "valid-src",
    "valid-tgt",
    "src-vocab",
    "tgt-vocab",
    "checkpoint-dir",
    "log-file",
    "vocab-size",
    "max-len",
    "bag-keep-duplicates",
    "emb-size",
    "hidden-size",
    "enc-layers",
    "dec-layers",
    "dropout",
    "generator-input",
    "lambda",
    "k",
    "alpha",
    "baseline",
    "bag-loss",
    "lr",
    "lr-decay",
    "lr-decay-start",
    "clip-norm",
    "batch-size",
    "epochs",
    "beam-width",
    "no-length-norm",
    "length-exponent",
    "max-output-len",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Sets one field from its flag name and textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "train-src" => self.train_src = path(),
            "train-tgt" => self.train_tgt = path(),
            "valid-src" => self.valid_src = path(),
            "valid-tgt" => self.valid_tgt = path(),
            "src-vocab" => self.src_vocab = path(),
            "tgt-vocab" => self.tgt_vocab = path(),
            "checkpoint-dir" => self.checkpoint_dir = PathBuf::from(value),
            "log-file" => self.log_file = path(),
            "vocab-size" => self.vocab_size = parse(key, value)?,
            "max-len" => self.max_sentence_len = parse(key, value)?,
            "bag-keep-duplicates" => self.bag_keep_duplicates = parse_bool(key, value)?,
            "emb-size" => self.emb_size = parse(key, value)?,
            "hidden-size" => self.hidden_size = parse(key, value)?,
            "enc-layers" => self.enc_layers = parse(key, value)?,
            "dec-layers" => self.dec_layers = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "generator-input" => self.generator_input = value.parse()?,
            "lambda" => self.schedule.lambda = parse(key, value)?,
            "k" => self.schedule.k = parse(key, value)?,
            "alpha" => self.schedule.alpha = parse(key, value)?,
            "baseline" => self.baseline = parse_bool(key, value)?,
            "bag-loss" => self.bag_loss = value.parse()?,
            "lr" => self.adam.lr = parse(key, value)?,
            "lr-decay" => self.lr_decay = parse(key, value)?,
            "lr-decay-start" => self.lr_decay_start = parse(key, value)?,
            "clip-norm" => self.clip_norm = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "beam-width" => self.beam.width = parse(key, value)?,
            "no-length-norm" => self.beam.length_norm = !parse_bool(key, value)?,
            "length-exponent" => self.beam.length_exponent = parse(key, value)?,
            "max-output-len" => self.beam.max_len = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config_text(&text)
    }

    /// The bag-loss schedule actually used: all zero for a baseline run.
    pub fn effective_schedule(&self) -> ScheduleParams {
        if self.baseline {
            ScheduleParams::baseline()
        } else {
            self.schedule
        }
    }

    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            emb_size: self.emb_size,
            hidden_size: self.hidden_size,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            dropout: self.dropout,
            generator_input: self.generator_input,
        }
    }

    /// Learning rate used throughout epoch `epoch` (0-indexed).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let decays = (epoch + 1).saturating_sub(self.lr_decay_start);
        self.adam.lr * self.lr_decay.powi(decays as i32)
    }

    pub fn log_path(&self) -> PathBuf {
        self.log_file
            .clone()
            .unwrap_or_else(|| self.checkpoint_dir.join("train.log"))
    }

    /// Checks value ranges and that every given input path exists.
    pub fn validate(&self) -> Result<()> {
        self.effective_schedule().validate()?;
        self.beam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch-size must be positive".into()));
        }
        if !(self.clip_norm > 0.0 && self.adam.lr > 0.0) {
            return Err(Error::Config("clip-norm and lr must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr-decay must lie in (0, 1]".into()));
        }
        self.model_config(crate::data::NUM_SPECIALS + 1, crate::data::NUM_SPECIALS + 1)
            .validate()?;
        for p in [&self.train_src, &self.train_tgt, &self.valid_src, &self.valid_tgt]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        if self.valid_src.is_some() != self.valid_tgt.is_some() {
            return Err(Error::Config("valid-src and valid-tgt must be given together".into()));
        }
        Ok(())
    }
}
