use std::fs;
use std::path::Path;

use super::vocab::{is_special, Vocab, EOS, PAD};
use crate::error::{Error, Result};

pub type Sentence = Vec<String>;

/// Default cap on tokens per side applied at ingestion.
pub const DEFAULT_MAX_SENTENCE_LEN: usize = 50;

/// One encoded training pair together with its bag-of-words target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExamplePair {
    pub source: Vec<usize>,
    /// EOS-terminated.
    pub target: Vec<usize>,
    /// Sorted target word indices, specials excluded.
    pub bag: Vec<usize>,
}

impl ExamplePair {
    /// `target` must not contain EOS; it is appended here.
    pub fn new(source: Vec<usize>, mut target: Vec<usize>, keep_duplicates: bool) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Data("empty source sentence".into()));
        }
        if source.contains(&PAD) || target.contains(&PAD) {
            return Err(Error::Data("PAD inside a sentence".into()));
        }
        if source.contains(&EOS) || target.contains(&EOS) {
            return Err(Error::Data("EOS inside a sentence".into()));
        }
        target.push(EOS);
        let bag = if keep_duplicates {
            extract_bag_with_duplicates(&target)
        } else {
            extract_bag(&target)
        };
        Ok(ExamplePair { source, target, bag })
    }

    pub fn encode<S: AsRef<str>>(
        src_vocab: &Vocab,
        tgt_vocab: &Vocab,
        source: &[S],
        target: &[S],
        keep_duplicates: bool,
    ) -> Result<Self> {
        Self::new(src_vocab.encode(source), tgt_vocab.encode(target), keep_duplicates)
    }
}

/// Unique non-special indices of `target`, ascending.
pub fn extract_bag(target: &[usize]) -> Vec<usize> {
    let mut bag = extract_bag_with_duplicates(target);
    bag.dedup();
    bag
}

fn extract_bag_with_duplicates(target: &[usize]) -> Vec<usize> {
    let mut bag: Vec<usize> = target.iter().copied().filter(|&i| !is_special(i)).collect();
    bag.sort_unstable();
    bag
}

/// Whitespace-tokenized lines of a UTF-8 text file.
pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_sentences<S: AsRef<str>>(path: &Path, sentences: &[Vec<S>]) -> Result<()> {
    let mut text = String::new();
    for s in sentences {
        let line: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParallelCorpus {
    pub source: Vec<Sentence>,
    pub target: Vec<Sentence>,
    /// Pairs removed for exceeding the length cap or having an empty side.
    pub dropped: usize,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn encode(&self, src: &Vocab, tgt: &Vocab, keep_duplicates: bool) -> Result<Vec<ExamplePair>> {
        self.source
            .iter()
            .zip(&self.target)
            .map(|(s, t)| ExamplePair::encode(src, tgt, s, t, keep_duplicates))
            .collect()
    }
}

/// Reads two line-aligned files, dropping pairs where either side is empty
/// or longer than `max_len` tokens.
pub fn read_parallel(src: &Path, tgt: &Path, max_len: usize) -> Result<ParallelCorpus> {
    let s = read_sentences(src)?;
    let t = read_sentences(tgt)?;
    if s.len() != t.len() {
        return Err(Error::Data(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    let mut out = ParallelCorpus::default();
    for (a, b) in s.into_iter().zip(t) {
        if a.is_empty() || b.is_empty() || a.len() > max_len || b.len() > max_len {
            out.dropped += 1;
        } else {
            out.source.push(a);
            out.target.push(b);
        }
    }
    Ok(out)
}
