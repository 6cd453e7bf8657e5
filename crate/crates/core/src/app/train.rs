use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::autodiff::Graph;
use crate::data::{make_batches, read_parallel, ExamplePair, Sentence, Vocab};
use crate::error::{Error, Result};
use crate::inference::greedy_decode_batch;
use crate::metrics::{bag_overlap, corpus_bleu};
use crate::model::{encode_checkpoint, Mode, Seq2Seq};
use crate::objectives::{adam_step, batch_loss, clip_gradients, schedule, OptimizerState};

/// Tab-separated columns of the training log, one line per epoch.
pub const LOG_HEADER: &str = "epoch\tlambda\tl1\tl2\ttotal\tvalid_bleu\tvalid_bag_f1\twall_secs";

pub const SRC_VOCAB_FILE: &str = "src.vocab";
pub const TGT_VOCAB_FILE: &str = "tgt.vocab";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

const DECODE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    /// Example-weighted means over the epoch's batches.
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub valid_bleu: Option<f64>,
    pub valid_bag_f1: Option<f64>,
    pub wall_secs: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
        format!(
            "{}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{:.3}",
            self.epoch,
            self.lambda,
            self.l1,
            self.l2,
            self.total,
            opt(self.valid_bleu, 2),
            opt(self.valid_bag_f1, 4),
            self.wall_secs
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Seq2Seq,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub records: Vec<EpochRecord>,
    pub final_checkpoint: PathBuf,
    /// Probabilities that hit the log floor during training.
    pub clamp_events: usize,
}

fn load_or_build_vocab(path: Option<&Path>, corpus: &[Sentence], max_size: usize) -> Result<Vocab> {
    match path {
        Some(p) if p.exists() => Vocab::load(p),
        _ => Vocab::build(corpus, max_size),
    }
}

/// Validation set: encoded sources and tokenized references.
struct Validation {
    sources: Vec<Vec<usize>>,
    references: Vec<Sentence>,
}

/// Greedy-decodes `sources` and renders each output with `vocab`.
pub fn decode_greedy(model: &Seq2Seq, vocab: &Vocab, sources: &[Vec<usize>]) -> Result<Vec<Sentence>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(DECODE_CHUNK) {
        for h in greedy_decode_batch(model, chunk, None)? {
            out.push(vocab.decode(&h.tokens).into_iter().map(str::to_string).collect());
        }
    }
    Ok(out)
}

impl Validation {
    fn score(&self, model: &Seq2Seq, vocab: &Vocab) -> Result<(f64, f64)> {
        let hyps = decode_greedy(model, vocab, &self.sources)?;
        Ok((
            corpus_bleu(&hyps, &self.references)?.bleu,
            bag_overlap(&hyps, &self.references)?.f1,
        ))
    }
}

/// Trains per `config`, writing vocabularies, one checkpoint per epoch,
/// the final checkpoint and the epoch log.
pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (Some(src_path), Some(tgt_path)) = (&config.train_src, &config.train_tgt) else {
        return Err(Error::Config("training needs train-src and train-tgt".into()));
    };
    let corpus = read_parallel(src_path, tgt_path, config.max_sentence_len)?;
    if corpus.is_empty() {
        return Err(Error::Data("training corpus is empty after length filtering".into()));
    }
    if corpus.dropped > 0 {
        eprintln!("dropped {} training pairs (empty or over {} tokens)", corpus.dropped, config.max_sentence_len);
    }
    let src_vocab = load_or_build_vocab(config.src_vocab.as_deref(), &corpus.source, config.vocab_size)?;
    let tgt_vocab = load_or_build_vocab(config.tgt_vocab.as_deref(), &corpus.target, config.vocab_size)?;
    let examples: Vec<ExamplePair> = corpus.encode(&src_vocab, &tgt_vocab, config.bag_keep_duplicates)?;

    let validation = match (&config.valid_src, &config.valid_tgt) {
        (Some(s), Some(t)) => {
            let v = read_parallel(s, t, usize::MAX)?;
            Some(Validation {
                sources: v.source.iter().map(|s| src_vocab.encode(s)).collect(),
                references: v.target,
            })
        }
        _ => None,
    };

    let dir = &config.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    src_vocab.save(&dir.join(SRC_VOCAB_FILE))?;
    tgt_vocab.save(&dir.join(TGT_VOCAB_FILE))?;
    let log_path = config.log_path();
    if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Seq2Seq::new(config.model_config(src_vocab.len(), tgt_vocab.len()), &mut rng)?;
    let mut optimizer = OptimizerState::new(&model.store, config.adam);
    let sched = config.effective_schedule();
    let mut records = Vec::with_capacity(config.epochs);
    let mut clamp_events = 0;
    let mut last_bytes = encode_checkpoint(&model);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lambda = schedule(epoch, &sched);
        optimizer.config.lr = config.learning_rate(epoch);
        let batches = make_batches(&examples, config.batch_size, rng.next_u64())?;
        let (mut l1, mut l2, mut total) = (0.0, 0.0, 0.0);
        for (index, batch) in batches.iter().enumerate() {
            let mode = Mode::Train {
                dropout_seed: rng.next_u64(),
            };
            model.store.zero_gradients();
            let mut graph = Graph::new();
            let loss = batch_loss(&model, &mut graph, batch, mode, lambda, config.bag_loss)?;
            let b = loss.breakdown;
            if ![b.l1, b.l2, b.total].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: index });
            }
            graph.backward(loss.root, &mut model.store)?;
            clamp_events += graph.clamp_events();
            clip_gradients(&mut model.store, config.clip_norm);
            adam_step(&mut model.store, &mut optimizer)?;
            let w = batch.size() as f64;
            l1 += w * b.l1;
            l2 += w * b.l2;
            total += w * b.total;
        }
        let n = examples.len() as f64;
        let (valid_bleu, valid_bag_f1) = match &validation {
            Some(v) => {
                let (bleu, f1) = v.score(&model, &tgt_vocab)?;
                (Some(bleu), Some(f1))
            }
            None => (None, None),
        };
        last_bytes = encode_checkpoint(&model);
        let ckpt = dir.join(format!("epoch-{epoch:03}.ckpt"));
        fs::write(&ckpt, &last_bytes).map_err(|e| Error::io(&ckpt, e))?;
        let record = EpochRecord {
            epoch,
            lambda,
            l1: l1 / n,
            l2: l2 / n,
            total: total / n,
            valid_bleu,
            valid_bag_f1,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        writeln!(log, "{}", record.log_line()).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        records.push(record);
    }

    let final_checkpoint = dir.join(FINAL_CHECKPOINT);
    fs::write(&final_checkpoint, &last_bytes).map_err(|e| Error::io(&final_checkpoint, e))?;
    Ok(TrainOutcome {
        model,
        src_vocab,
        tgt_vocab,
        records,
        final_checkpoint,
        clamp_events,
    })
}
