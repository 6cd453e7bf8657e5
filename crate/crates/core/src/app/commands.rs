use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::train::{SRC_VOCAB_FILE, TGT_VOCAB_FILE};
use crate::autodiff::{finite_difference_check, GradCheckReport};
use crate::data::toy::{write_toy_corpus, ToyFiles};
use crate::data::{read_sentences, Batch, ExamplePair, Sentence, ToyTaskSpec, Vocab, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::inference::{beam_search, BeamConfig, Hypothesis};
use crate::metrics::{bag_overlap, corpus_bleu, format_report};
use crate::model::{load_checkpoint, Mode, ModelConfig, Seq2Seq, GRADCHECK_RANGE};
use crate::objectives::{batch_loss, BagLoss};

pub struct TranslateOptions {
    pub checkpoint: PathBuf,
    /// Default to `src.vocab` / `tgt.vocab` next to the checkpoint.
    pub src_vocab: Option<PathBuf>,
    pub tgt_vocab: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Optional `index ||| score ||| tokens` dump of every finished hypothesis.
    pub nbest: Option<PathBuf>,
    pub beam: BeamConfig,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

fn sibling(checkpoint: &Path, name: &str) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join(name)
}

fn check_vocab(vocab: &Vocab, path: &Path, expected: usize, side: &str) -> Result<()> {
    if vocab.len() != expected {
        return Err(Error::Config(format!(
            "{side} vocabulary {} has {} entries but the checkpoint expects {}",
            path.display(),
            vocab.len(),
            expected
        )));
    }
    Ok(())
}

/// Beam-decodes every line; empty lines produce no hypotheses. Results are
/// in input order regardless of the thread count.
pub fn translate_sentences(
    model: &Seq2Seq,
    src_vocab: &Vocab,
    lines: &[Sentence],
    beam: &BeamConfig,
    threads: Option<usize>,
) -> Result<Vec<Vec<Hypothesis>>> {
    beam.validate()?;
    let run = || {
        lines
            .par_iter()
            .map(|line| {
                if line.is_empty() {
                    Ok(Vec::new())
                } else {
                    beam_search(model, &src_vocab.encode(line), beam)
                }
            })
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Translates `input` to `output`, one line per input line. Returns the
/// number of lines written.
pub fn translate_file(opts: &TranslateOptions) -> Result<usize> {
    let model = load_checkpoint(&opts.checkpoint)?;
    let src_path = opts
        .src_vocab
        .clone()
        .unwrap_or_else(|| sibling(&opts.checkpoint, SRC_VOCAB_FILE));
    let tgt_path = opts
        .tgt_vocab
        .clone()
        .unwrap_or_else(|| sibling(&opts.checkpoint, TGT_VOCAB_FILE));
    let src_vocab = Vocab::load(&src_path)?;
    let tgt_vocab = Vocab::load(&tgt_path)?;
    let config = model.config();
    check_vocab(&src_vocab, &src_path, config.src_vocab, "source")?;
    check_vocab(&tgt_vocab, &tgt_path, config.tgt_vocab, "target")?;

    let lines = read_sentences(&opts.input)?;
    let results = translate_sentences(&model, &src_vocab, &lines, &opts.beam, opts.threads)?;

    let mut out = String::new();
    let mut nbest = String::new();
    for (i, hyps) in results.iter().enumerate() {
        if let Some(best) = hyps.first() {
            out.push_str(&tgt_vocab.decode(&best.tokens).join(" "));
        }
        out.push('\n');
        for h in hyps {
            let _ = writeln!(
                nbest,
                "{i} ||| {:.6} ||| {}",
                opts.beam.score(h)?,
                tgt_vocab.decode(&h.tokens).join(" ")
            );
        }
    }
    fs::write(&opts.output, out).map_err(|e| Error::io(&opts.output, e))?;
    if let Some(path) = &opts.nbest {
        fs::write(path, nbest).map_err(|e| Error::io(path, e))?;
    }
    Ok(results.len())
}

/// Metric report for aligned hypothesis and reference files.
pub fn evaluate_files(hypotheses: &Path, references: &Path) -> Result<String> {
    let hyps = read_sentences(hypotheses)?;
    let refs = read_sentences(references)?;
    Ok(format_report(&corpus_bleu(&hyps, &refs)?, &bag_overlap(&hyps, &refs)?))
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub model: ModelConfig,
    pub bag_loss: BagLoss,
    pub lambda: f64,
    pub batch_size: usize,
    pub source_len: usize,
    /// Counts the EOS.
    pub target_len: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            model: ModelConfig::toy(20, 20),
            bag_loss: BagLoss::InBag,
            lambda: 1.0,
            batch_size: 2,
            source_len: 3,
            target_len: 4,
            step: 1e-4,
            tolerance: 1e-4,
            seed: 1,
        }
    }
}

/// Full-loss finite-difference check on a random model and batch. Dropout
/// is forced off.
pub fn grad_check(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if opts.batch_size == 0 || opts.source_len == 0 || opts.target_len == 0 {
        return Err(Error::Config("grad-check needs a non-empty batch".into()));
    }
    let config = ModelConfig {
        dropout: 0.0,
        ..opts.model
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = Seq2Seq::new(config, &mut rng)?;
    model.randomize(&mut rng, GRADCHECK_RANGE);
    let word = |rng: &mut ChaCha8Rng, vocab: usize| rng.gen_range(NUM_SPECIALS..vocab);
    let examples = (0..opts.batch_size)
        .map(|_| {
            let s = (0..opts.source_len).map(|_| word(&mut rng, config.src_vocab)).collect();
            let t = (1..opts.target_len).map(|_| word(&mut rng, config.tgt_vocab)).collect();
            ExamplePair::new(s, t, false)
        })
        .collect::<Result<Vec<_>>>()?;
    let batch = Batch::from_examples(&examples)?;
    let arch = model.arch.clone();
    finite_difference_check(&mut model.store, opts.step, opts.tolerance, |g, store| {
        let m = Seq2Seq {
            arch: arch.clone(),
            store: store.clone(),
        };
        Ok(batch_loss(&m, g, &batch, Mode::Eval, opts.lambda, opts.bag_loss)?.root)
    })
}

/// One `name<TAB>max_rel_error<TAB>ok|FAIL` line per parameter.
pub fn format_grad_check(report: &GradCheckReport) -> String {
    let mut out = String::new();
    for p in &report.params {
        let _ = writeln!(
            out,
            "{}\t{:.3e}\t{}",
            p.name,
            p.max_rel_error,
            if p.passed { "ok" } else { "FAIL" }
        );
    }
    out
}

pub fn gen_toy(dir: &Path, name: &str, spec: &ToyTaskSpec, test_pairs: usize) -> Result<ToyFiles> {
    write_toy_corpus(dir, name, spec, test_pairs)
}

/// Builds a vocabulary from the union of `inputs` and writes it to `output`.
pub fn build_vocab(inputs: &[PathBuf], max_size: usize, output: &Path) -> Result<Vocab> {
    let mut corpus = Vec::new();
    for path in inputs {
        corpus.extend(read_sentences(path)?);
    }
    let vocab = Vocab::build(&corpus, max_size)?;
    vocab.save(output)?;
    Ok(vocab)
}
