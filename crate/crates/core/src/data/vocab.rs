use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

pub fn is_special(index: usize) -> bool {
    index < NUM_SPECIALS
}

/// Token/index bijection with the four reserved specials at indices 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words {
            if index.contains_key(&w) {
                return Err(Error::Data(format!("duplicate vocabulary entry {w:?}")));
            }
            index.insert(w.clone(), tokens.len());
            tokens.push(w);
        }
        Ok(Vocab { tokens, index })
    }

    /// Keeps the `max_size - 4` most frequent tokens; equal counts are ordered
    /// by first occurrence in the corpus.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Self> {
        if max_size <= NUM_SPECIALS {
            return Err(Error::Data(format!(
                "max vocabulary size {max_size} leaves no room beyond the {NUM_SPECIALS} specials"
            )));
        }
        if corpus.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        // token -> (count, first position)
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut position = 0;
        for tok in corpus.iter().flatten() {
            let tok = tok.as_ref();
            if SPECIAL_TOKENS.contains(&tok) {
                continue;
            }
            counts.entry(tok).or_insert((0, position)).0 += 1;
            position += 1;
        }
        let mut ranked: Vec<(&str, usize, usize)> =
            counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size - NUM_SPECIALS);
        Self::from_words(ranked.into_iter().map(|(t, _, _)| t.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t.as_ref())).collect()
    }

    /// Maps indices back to tokens, stopping at EOS and skipping PAD and BOS.
    pub fn decode(&self, indices: &[usize]) -> Vec<&str> {
        indices
            .iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK]))
            .collect()
    }

    /// Non-special tokens in index order.
    pub fn words(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }

    /// One token per line, in index order starting at index 4.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for w in self.words() {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_words(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }
}
