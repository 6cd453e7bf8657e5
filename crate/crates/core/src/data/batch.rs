use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::ExamplePair;
use super::vocab::PAD;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Batches per length-sorting chunk.
pub const SORT_CHUNK_BATCHES: usize = 100;

/// PAD-filled index matrices for a group of examples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// `[batch][max source len]`
    pub source: Vec<Vec<usize>>,
    /// `[batch][max target len]`, EOS-terminated rows.
    pub target: Vec<Vec<usize>>,
    pub source_lens: Vec<usize>,
    pub target_lens: Vec<usize>,
    pub bags: Vec<Vec<usize>>,
}

impl Batch {
    pub fn from_examples<'a, I>(examples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ExamplePair>,
    {
        let examples: Vec<&ExamplePair> = examples.into_iter().collect();
        if examples.is_empty() {
            return Err(Error::Data("cannot build an empty batch".into()));
        }
        let max_src = examples.iter().map(|e| e.source.len()).max().unwrap_or(0);
        let max_tgt = examples.iter().map(|e| e.target.len()).max().unwrap_or(0);
        let pad = |s: &[usize], n: usize| {
            let mut row = s.to_vec();
            row.resize(n, PAD);
            row
        };
        Ok(Batch {
            source: examples.iter().map(|e| pad(&e.source, max_src)).collect(),
            target: examples.iter().map(|e| pad(&e.target, max_tgt)).collect(),
            source_lens: examples.iter().map(|e| e.source.len()).collect(),
            target_lens: examples.iter().map(|e| e.target.len()).collect(),
            bags: examples.iter().map(|e| e.bag.clone()).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.source.len()
    }

    pub fn max_source_len(&self) -> usize {
        self.source[0].len()
    }

    pub fn max_target_len(&self) -> usize {
        self.target[0].len()
    }

    /// `[batch * max_target_len]` flags, true for real (non-PAD) target positions.
    pub fn target_mask(&self) -> Vec<bool> {
        let m = self.max_target_len();
        self.target_lens
            .iter()
            .flat_map(|&len| (0..m).map(move |t| t < len))
            .collect()
    }

    /// `[batch, vocab]` indicator of each example's bag. Repeated bag entries
    /// (kept only when duplicates are requested) add up.
    pub fn bag_indicator(&self, vocab_size: usize) -> Result<Tensor> {
        let mut data = vec![0.0; self.size() * vocab_size];
        for (b, bag) in self.bags.iter().enumerate() {
            for &w in bag {
                if w >= vocab_size {
                    return Err(Error::Data(format!("bag index {w} outside vocabulary of {vocab_size}")));
                }
                data[b * vocab_size + w] += 1.0;
            }
        }
        Tensor::new(vec![self.size(), vocab_size], data)
    }

    /// Row `b` with padding stripped, as an example.
    pub fn example(&self, b: usize) -> ExamplePair {
        ExamplePair {
            source: self.source[b][..self.source_lens[b]].to_vec(),
            target: self.target[b][..self.target_lens[b]].to_vec(),
            bag: self.bags[b].clone(),
        }
    }
}

/// Shuffles with `seed`, sorts by source length inside chunks of
/// `SORT_CHUNK_BATCHES * batch_size` examples, then cuts consecutive batches.
pub fn make_batches(examples: &[ExamplePair], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Data("batch size must be positive".into()));
    }
    let mut order: Vec<&ExamplePair> = examples.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches = Vec::with_capacity(examples.len().div_ceil(batch_size));
    for chunk in order.chunks_mut(SORT_CHUNK_BATCHES * batch_size) {
        chunk.sort_by_key(|e| e.source.len());
        for group in chunk.chunks(batch_size) {
            batches.push(Batch::from_examples(group.iter().copied())?);
        }
    }
    Ok(batches)
}
