//! Argument parsing and dispatch. Exit codes: 0 success, 1 usage or
//! configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{error::ErrorKind, Arg, ArgAction, ArgMatches, Command};

use super::commands::{self, GradCheckOptions, TranslateOptions};
use super::config::{RunConfig, CONFIG_KEYS};
use super::train::train;
use crate::data::{ToyTask, ToyTaskSpec};
use crate::error::Error;
use crate::model::{GeneratorInput, ModelConfig};
use crate::objectives::BagLoss;

const BOOL_KEYS: &[&str] = &["bag-keep-duplicates", "baseline", "no-length-norm"];
const DECODE_KEYS: &[&str] = &["beam-width", "no-length-norm", "length-exponent", "max-output-len", "src-vocab", "tgt-vocab"];

fn config_arg(key: &'static str) -> Arg {
    let arg = Arg::new(key).long(key);
    if BOOL_KEYS.contains(&key) {
        arg.action(ArgAction::SetTrue)
    } else {
        arg.value_name("VALUE")
    }
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

fn config_file_arg() -> Arg {
    path_arg("config", "flat `key = value` file; command-line flags take precedence")
}

pub fn command() -> Command {
    Command::new("bownmt")
        .about("Attention LSTM translation with a bag-of-words training target")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("gen-toy")
                .about("Write a synthetic parallel corpus plus a held-out test split")
                .arg(Arg::new("task").long("task").default_value("reverse-with-lexicon"))
                .arg(num_arg("alphabet", "20"))
                .arg(num_arg("min-len", "5"))
                .arg(num_arg("max-len", "10"))
                .arg(num_arg("pairs", "2000"))
                .arg(num_arg("test-pairs", "200"))
                .arg(num_arg("seed", "1"))
                .arg(path_arg("out-dir", "output directory").required(true))
                .arg(Arg::new("name").long("name").default_value("toy")),
        )
        .subcommand(
            Command::new("build-vocab")
                .about("Build a frequency-ranked vocabulary from tokenized text")
                .arg(path_arg("input", "tokenized corpus (repeatable)").required(true).action(ArgAction::Append))
                .arg(num_arg("vocab-size", "50000"))
                .arg(path_arg("output", "vocabulary file to write").required(true)),
        )
        .subcommand(
            Command::new("train")
                .about("Train a model, checkpointing every epoch")
                .arg(config_file_arg())
                .args(CONFIG_KEYS.iter().map(|k| config_arg(k))),
        )
        .subcommand(
            Command::new("translate")
                .about("Beam-decode one sentence per input line")
                .arg(config_file_arg())
                .args(DECODE_KEYS.iter().map(|k| config_arg(k)))
                .arg(path_arg("checkpoint", "model checkpoint").required(true))
                .arg(path_arg("input", "tokenized source sentences").required(true))
                .arg(path_arg("output", "translations to write").required(true))
                .arg(path_arg("nbest", "also write `index ||| score ||| tokens` for every hypothesis"))
                .arg(
                    Arg::new("threads")
                        .long("threads")
                        .value_parser(clap::value_parser!(usize)),
                ),
        )
        .subcommand(
            Command::new("evaluate")
                .about("Report BLEU and bag-of-words overlap")
                .arg(path_arg("hyp", "hypotheses").required(true))
                .arg(path_arg("ref", "references").required(true)),
        )
        .subcommand(
            Command::new("grad-check")
                .about("Compare analytic and finite-difference gradients of the full loss")
                .arg(num_arg("seed", "1"))
                .arg(num_arg("vocab-size", "20"))
                .arg(num_arg("emb-size", "8"))
                .arg(num_arg("hidden-size", "8"))
                .arg(num_arg("enc-layers", "1"))
                .arg(num_arg("dec-layers", "1"))
                .arg(Arg::new("generator-input").long("generator-input").default_value("context"))
                .arg(Arg::new("bag-loss").long("bag-loss").default_value("paper"))
                .arg(num_arg("lambda", "1"))
                .arg(num_arg("step", "1e-4"))
                .arg(num_arg("tolerance", "1e-4")),
        )
}

fn num_arg(name: &'static str, default: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("N").default_value(default)
}

fn value<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Result<T, Error> {
    let raw = m
        .get_one::<String>(name)
        .ok_or_else(|| Error::Config(format!("missing --{name}")))?;
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for --{name}")))
}

fn path(m: &ArgMatches, name: &str) -> PathBuf {
    m.get_one::<PathBuf>(name).cloned().unwrap_or_default()
}

/// Defaults, then the config file, then flags given on the command line.
fn run_config(m: &ArgMatches, keys: &[&str]) -> Result<RunConfig, Error> {
    let mut config = RunConfig::default();
    if let Some(file) = m.get_one::<PathBuf>("config") {
        config.apply_config_file(file)?;
    }
    for &key in keys {
        if BOOL_KEYS.contains(&key) {
            if m.get_flag(key) {
                config.set(key, "true")?;
            }
        } else if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    Ok(config)
}

fn dispatch(m: &ArgMatches) -> Result<(), Error> {
    match m.subcommand() {
        Some(("gen-toy", m)) => {
            let spec = ToyTaskSpec {
                task: value::<String>(m, "task")?.parse::<ToyTask>()?,
                alphabet: value(m, "alphabet")?,
                min_len: value(m, "min-len")?,
                max_len: value(m, "max-len")?,
                pairs: value(m, "pairs")?,
                seed: value(m, "seed")?,
            };
            let name: String = value(m, "name")?;
            let files = commands::gen_toy(&path(m, "out-dir"), &name, &spec, value(m, "test-pairs")?)?;
            for p in [files.train_src, files.train_tgt, files.test_src, files.test_tgt] {
                println!("{}", p.display());
            }
        }
        Some(("build-vocab", m)) => {
            let inputs: Vec<PathBuf> = m.get_many::<PathBuf>("input").into_iter().flatten().cloned().collect();
            let vocab = commands::build_vocab(&inputs, value(m, "vocab-size")?, &path(m, "output"))?;
            println!("{} entries", vocab.len());
        }
        Some(("train", m)) => {
            let config = run_config(m, CONFIG_KEYS)?;
            if config.train_src.is_none() || config.train_tgt.is_none() {
                return Err(Error::Config("train needs --train-src and --train-tgt".into()));
            }
            config.validate()?;
            let outcome = train(&config)?;
            for r in &outcome.records {
                eprintln!("{}", r.log_line());
            }
            println!("{}", outcome.final_checkpoint.display());
        }
        Some(("translate", m)) => {
            let config = run_config(m, DECODE_KEYS)?;
            let opts = TranslateOptions {
                checkpoint: path(m, "checkpoint"),
                src_vocab: config.src_vocab.clone(),
                tgt_vocab: config.tgt_vocab.clone(),
                input: path(m, "input"),
                output: path(m, "output"),
                nbest: m.get_one::<PathBuf>("nbest").cloned(),
                beam: config.beam,
                threads: m.get_one::<usize>("threads").copied(),
            };
            config.beam.validate()?;
            commands::translate_file(&opts)?;
        }
        Some(("evaluate", m)) => {
            print!("{}", commands::evaluate_files(&path(m, "hyp"), &path(m, "ref"))?);
        }
        Some(("grad-check", m)) => {
            let vocab: usize = value(m, "vocab-size")?;
            let opts = GradCheckOptions {
                model: ModelConfig {
                    emb_size: value(m, "emb-size")?,
                    hidden_size: value(m, "hidden-size")?,
                    enc_layers: value(m, "enc-layers")?,
                    dec_layers: value(m, "dec-layers")?,
                    generator_input: value::<String>(m, "generator-input")?.parse::<GeneratorInput>()?,
                    ..ModelConfig::toy(vocab, vocab)
                },
                bag_loss: value::<String>(m, "bag-loss")?.parse::<BagLoss>()?,
                lambda: value(m, "lambda")?,
                step: value(m, "step")?,
                tolerance: value(m, "tolerance")?,
                seed: value(m, "seed")?,
                ..GradCheckOptions::default()
            };
            opts.model.validate().map_err(|e| Error::Config(e.to_string()))?;
            let report = commands::grad_check(&opts)?;
            print!("{}", commands::format_grad_check(&report));
            if let Some(w) = report.worst() {
                println!("worst\t{}\t{:.3e}", w.name, w.max_rel_error);
            }
            if !report.passed() {
                return Err(Error::Model("gradient check failed".into()));
            }
            println!("passed");
        }
        _ => unreachable!("subcommand_required"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
