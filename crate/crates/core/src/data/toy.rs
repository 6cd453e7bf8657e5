//! Synthetic parallel corpora for desk-scale experiments.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{write_sentences, Sentence};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyTask {
    Copy,
    Reverse,
    ReverseWithLexicon,
}

impl FromStr for ToyTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(ToyTask::Copy),
            "reverse" => Ok(ToyTask::Reverse),
            "reverse-with-lexicon" => Ok(ToyTask::ReverseWithLexicon),
            other => Err(Error::Config(format!(
                "unknown toy task {other:?} (expected copy, reverse or reverse-with-lexicon)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTaskSpec {
    pub task: ToyTask,
    pub alphabet: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pairs: usize,
    pub seed: u64,
}

const NUMBER_WORDS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

/// Bijective map from source symbols to target words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    source: Vec<String>,
    target: Vec<String>,
}

impl Lexicon {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let (source, target): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let distinct = |v: &[String]| v.iter().collect::<HashSet<_>>().len() == v.len();
        if !distinct(&source) || !distinct(&target) {
            return Err(Error::Data("lexicon is not a bijection".into()));
        }
        Ok(Lexicon { source, target })
    }

    /// Symbol `i` (written as its decimal index) maps to its English number
    /// word below twenty and to `w<i>` above.
    pub fn numbers(alphabet: usize) -> Self {
        let target = (0..alphabet)
            .map(|i| NUMBER_WORDS.get(i).map_or_else(|| format!("w{i}"), |w| w.to_string()))
            .collect();
        Lexicon {
            source: (0..alphabet).map(|i| i.to_string()).collect(),
            target,
        }
    }

    pub fn translate(&self, symbol: &str) -> Option<&str> {
        let i = self.source.iter().position(|s| s == symbol)?;
        Some(&self.target[i])
    }
}

/// Target side for `source` under `task`. Symbols missing from the lexicon are an error.
pub fn apply_task(task: ToyTask, lexicon: &Lexicon, source: &[String]) -> Result<Sentence> {
    match task {
        ToyTask::Copy => Ok(source.to_vec()),
        ToyTask::Reverse => Ok(source.iter().rev().cloned().collect()),
        ToyTask::ReverseWithLexicon => source
            .iter()
            .rev()
            .map(|s| {
                lexicon
                    .translate(s)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Data(format!("symbol {s:?} missing from lexicon")))
            })
            .collect(),
    }
}

impl ToyTaskSpec {
    fn validate(&self) -> Result<()> {
        if self.alphabet == 0 {
            return Err(Error::Data("toy alphabet size must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Data(format!(
                "invalid toy length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    /// `pairs` source/target sentences drawn from the seeded generator.
    pub fn generate(&self) -> Result<(Vec<Sentence>, Vec<Sentence>)> {
        self.validate()?;
        let lexicon = Lexicon::numbers(self.alphabet);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut sources = Vec::with_capacity(self.pairs);
        let mut targets = Vec::with_capacity(self.pairs);
        for _ in 0..self.pairs {
            let len = rng.gen_range(self.min_len..=self.max_len);
            let src: Sentence = (0..len)
                .map(|_| rng.gen_range(0..self.alphabet).to_string())
                .collect();
            targets.push(apply_task(self.task, &lexicon, &src)?);
            sources.push(src);
        }
        Ok((sources, targets))
    }
}

/// Files written by [`write_toy_corpus`].
#[derive(Clone, Debug)]
pub struct ToyFiles {
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub test_src: PathBuf,
    pub test_tgt: PathBuf,
}

/// Writes `<name>.src`/`<name>.tgt` with `spec.pairs` lines and
/// `<name>.test.src`/`<name>.test.tgt` with `test_pairs` further lines from
/// the same generator stream.
pub fn write_toy_corpus(dir: &Path, name: &str, spec: &ToyTaskSpec, test_pairs: usize) -> Result<ToyFiles> {
    let all = ToyTaskSpec {
        pairs: spec.pairs + test_pairs,
        ..spec.clone()
    };
    let (src, tgt) = all.generate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ToyFiles {
        train_src: dir.join(format!("{name}.src")),
        train_tgt: dir.join(format!("{name}.tgt")),
        test_src: dir.join(format!("{name}.test.src")),
        test_tgt: dir.join(format!("{name}.test.tgt")),
    };
    let n = spec.pairs;
    write_sentences(&files.train_src, &src[..n])?;
    write_sentences(&files.train_tgt, &tgt[..n])?;
    write_sentences(&files.test_src, &src[n..])?;
    write_sentences(&files.test_tgt, &tgt[n..])?;
    Ok(files)
}
