//! Training objectives: word-level negative log-likelihood, the bag-of-words
//! loss, the epoch schedule that blends them, gradient clipping and Adam.
//!
//! Both losses are per-sentence sums averaged over the examples of a batch,
//! so the blend weight keeps its meaning at any batch size.

mod optim;

use std::fmt;
use std::str::FromStr;

pub use optim::{adam_step, clip_gradients, AdamConfig, OptimizerState, DEFAULT_CLIP_NORM};

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{is_special, Batch};
use crate::error::{Error, Result};
use crate::model::{Mode, Seq2Seq};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Blend weight schedule `lambda_i = min(lambda, k + alpha * i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub lambda: f64,
    pub k: f64,
    pub alpha: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            lambda: 1.0,
            k: 0.1,
            alpha: 0.1,
        }
    }
}

impl ScheduleParams {
    /// Word loss only.
    pub fn baseline() -> Self {
        ScheduleParams {
            lambda: 0.0,
            k: 0.0,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.lambda, self.k, self.alpha].iter().all(|x| x.is_finite())
            && 0.0 <= self.k
            && self.k <= self.lambda
            && self.alpha >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "schedule needs 0 <= k <= lambda and alpha >= 0, got lambda={} k={} alpha={}",
                self.lambda, self.k, self.alpha
            )))
        }
    }
}

/// Weight of the bag loss in epoch `epoch` (0-based).
pub fn schedule(epoch: usize, params: &ScheduleParams) -> f64 {
    params.lambda.min(params.k + params.alpha * epoch as f64)
}

pub fn total_loss(l1: f64, l2: f64, lambda_i: f64) -> f64 {
    l1 + lambda_i * l2
}

/// Which bag-of-words loss to train with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BagLoss {
    /// `-sum_{w in bag} log p_b(w)`.
    #[default]
    InBag,
    /// Adds `-sum log(1 - p_b(j))` over non-special words outside the bag.
    FullBce,
}

impl FromStr for BagLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(BagLoss::InBag),
            "full-bce" => Ok(BagLoss::FullBce),
            _ => Err(Error::Config(format!("unknown bag loss `{s}` (expected paper or full-bce)"))),
        }
    }
}

impl fmt::Display for BagLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BagLoss::InBag => "paper",
            BagLoss::FullBce => "full-bce",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub lambda_i: f64,
    pub total: f64,
}

/// Batch-mean of `-sum_t log p_t(gold_t)` over unmasked positions.
///
/// `probs[t]` is `[batch, vocab]`; `targets[b][t]` is the gold token and
/// `mask[b * steps + t]` marks real positions.
pub fn word_loss(g: &mut Graph, probs: &[Var], targets: &[Vec<usize>], mask: &[bool]) -> Result<Var> {
    let batch = targets.len();
    let steps = probs.len();
    if batch == 0 || mask.len() != batch * steps || targets.iter().any(|r| r.len() != steps) {
        return Err(Error::Shape {
            op: "word_loss",
            lhs: vec![batch, steps],
            rhs: vec![mask.len()],
        });
    }
    let mut total: Option<Var> = None;
    for (t, &p) in probs.iter().enumerate() {
        let rows: Vec<usize> = (0..batch).filter(|&b| mask[b * steps + t]).collect();
        if rows.is_empty() {
            continue;
        }
        let gold: Vec<usize> = rows.iter().map(|&b| targets[b][t]).collect();
        let live = g.gather_rows(p, &rows)?;
        let picked = g.pick(live, &gold)?;
        let logs = g.log_clamped(picked, PROB_FLOOR);
        let step = g.sum_all(logs);
        total = Some(match total {
            Some(acc) => g.add(acc, step)?,
            None => step,
        });
    }
    let total = total.unwrap_or_else(|| g.leaf(Tensor::scalar(0.0)));
    Ok(g.affine(total, -1.0 / batch as f64, 0.0))
}

/// Batch-mean bag-of-words loss from `[batch, vocab]` bag probabilities.
/// An example with an empty bag contributes 0 under [`BagLoss::InBag`].
pub fn bag_loss(g: &mut Graph, bag_probs: Var, bags: &[Vec<usize>], variant: BagLoss) -> Result<Var> {
    let shape = g.shape(bag_probs).to_vec();
    if shape.len() != 2 || shape[0] != bags.len() || bags.is_empty() {
        return Err(Error::Shape {
            op: "bag_loss",
            lhs: shape,
            rhs: vec![bags.len()],
        });
    }
    let (batch, vocab) = (shape[0], shape[1]);
    if let Some(w) = bags.iter().flatten().find(|&&w| w >= vocab) {
        return Err(Error::Data(format!("bag index {w} outside vocabulary of {vocab}")));
    }
    let flat = g.reshape(bag_probs, &[batch * vocab, 1])?;

    let positive: Vec<usize> = bags
        .iter()
        .enumerate()
        .flat_map(|(b, bag)| bag.iter().map(move |&w| b * vocab + w))
        .collect();
    let mut sum = neg_log_sum(g, flat, &positive)?;

    if variant == BagLoss::FullBce {
        let negative: Vec<usize> = bags
            .iter()
            .enumerate()
            .flat_map(|(b, bag)| {
                (0..vocab)
                    .filter(move |&j| !is_special(j) && !bag.contains(&j))
                    .map(move |j| b * vocab + j)
            })
            .collect();
        let complement = g.affine(flat, -1.0, 1.0);
        let neg = neg_log_sum(g, complement, &negative)?;
        sum = g.add(sum, neg)?;
    }
    Ok(g.affine(sum, 1.0 / batch as f64, 0.0))
}

/// `-sum_i log x[rows[i]]`; a constant 0 for no rows.
fn neg_log_sum(g: &mut Graph, x: Var, rows: &[usize]) -> Result<Var> {
    if rows.is_empty() {
        return Ok(g.leaf(Tensor::scalar(0.0)));
    }
    let picked = g.gather_rows(x, rows)?;
    let logs = g.log_clamped(picked, PROB_FLOOR);
    let s = g.sum_all(logs);
    Ok(g.affine(s, -1.0, 0.0))
}

/// `l1 + lambda_i * l2`. A zero weight drops `l2` from the graph so the
/// gradient is exactly that of the word loss.
pub fn combine(g: &mut Graph, l1: Var, l2: Var, lambda_i: f64) -> Result<Var> {
    if lambda_i == 0.0 {
        return Ok(l1);
    }
    let weighted = g.affine(l2, lambda_i, 0.0);
    g.add(l1, weighted)
}

/// The loss graph of one batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub root: Var,
    pub breakdown: LossBreakdown,
}

/// Teacher-forced forward pass plus both losses, built into `g`.
pub fn batch_loss(
    model: &Seq2Seq,
    g: &mut Graph,
    batch: &Batch,
    mode: Mode,
    lambda_i: f64,
    variant: BagLoss,
) -> Result<BatchLoss> {
    let tf = model.session(g, mode).forward_teacher_forced(batch)?;
    let l1 = word_loss(g, &tf.probs, &batch.target, &batch.target_mask())?;
    let l2 = bag_loss(g, tf.bag_probs, &batch.bags, variant)?;
    let root = combine(g, l1, l2, lambda_i)?;
    let (v1, v2) = (g.value(l1).item(), g.value(l2).item());
    Ok(BatchLoss {
        root,
        breakdown: LossBreakdown {
            l1: v1,
            l2: v2,
            lambda_i,
            total: g.value(root).item(),
        },
    })
}
