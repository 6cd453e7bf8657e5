//! Beam search with length-normalized final ranking, and greedy decoding.
//!
//! Hypotheses never contain PAD or BOS. A hypothesis that reaches the
//! length limit is closed with EOS, scored with the model's actual EOS
//! probability at that step.

use std::cmp::Ordering;

use crate::autodiff::Graph;
use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{DecoderState, EncoderStates, Mode, Seq2Seq, Session};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    /// Emitted-token limit including EOS; `None` means `2 * source_len + 10`.
    pub max_len: Option<usize>,
    pub length_norm: bool,
    /// Normalized score is `ll / len^exponent`.
    pub length_exponent: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 10,
            max_len: None,
            length_norm: true,
            length_exponent: 1.0,
        }
    }
}

impl BeamConfig {
    pub fn greedy() -> Self {
        BeamConfig {
            width: 1,
            ..BeamConfig::default()
        }
    }

    pub fn max_len_for(&self, source_len: usize) -> usize {
        self.max_len.unwrap_or(2 * source_len + 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.max_len == Some(0) || !self.length_exponent.is_finite() {
            return Err(Error::Config(format!(
                "beam needs width >= 1, max length >= 1 and a finite exponent, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn score(&self, h: &Hypothesis) -> Result<f64> {
        if self.length_norm {
            normalized_score(h, self.length_exponent)
        } else {
            Ok(h.log_likelihood)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens without the closing EOS.
    pub tokens: Vec<usize>,
    pub log_likelihood: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Emitted token count, counting EOS once finished.
    pub fn len(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `log_likelihood / len^exponent`.
pub fn normalized_score(h: &Hypothesis, exponent: f64) -> Result<f64> {
    match h.len() {
        0 => Err(Error::Model("cannot normalize the score of an empty hypothesis".into())),
        n => Ok(h.log_likelihood / (n as f64).powf(exponent)),
    }
}

/// Log-softmax of one score row.
pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

fn expandable(token: usize) -> bool {
    token != PAD && token != BOS
}

/// Highest first; among equal values the lower index.
fn rank_desc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

struct Live {
    tokens: Vec<usize>,
    ll: f64,
}

/// Returns every finished hypothesis, best first under `config.score`
/// (ties broken by token sequence). The first entry is the decoding result.
pub fn beam_search(model: &Seq2Seq, source: &[usize], config: &BeamConfig) -> Result<Vec<Hypothesis>> {
    config.validate()?;
    let width = config.width;
    let max_len = config.max_len_for(source.len());
    let mut graph = Graph::new();
    let mut s = model.session(&mut graph, Mode::Eval);
    let enc = s.encode(source)?;
    let mut state = s.init_decoder(&enc)?;
    let mut live = vec![Live { tokens: vec![], ll: 0.0 }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 1..=max_len {
        let last_step = step == max_len;
        let n = live.len();
        let enc_n = enc.select_rows(s.graph(), &vec![0; n])?;
        let prev: Vec<usize> = live.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
        let out = s.decode_step(&prev, &state, &enc_n)?;
        let scores = s.value(out.scores).clone();

        // (total, parent, token)
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (i, h) in live.iter().enumerate() {
            let logp = log_softmax(scores.row(i));
            let mut options: Vec<(f64, usize)> = logp
                .iter()
                .enumerate()
                .filter(|&(w, _)| expandable(w) && (!last_step || w == EOS))
                .map(|(w, &lp)| (lp, w))
                .collect();
            options.sort_by(|&a, &b| rank_desc(a, b));
            options.truncate(width);
            candidates.extend(options.into_iter().map(|(lp, w)| (h.ll + lp, i, w)));
        }
        candidates.sort_by(|a, b| rank_desc((a.0, a.2), (b.0, b.2)).then(a.1.cmp(&b.1)));
        candidates.truncate(width);

        let mut next = Vec::new();
        let mut parents = Vec::new();
        for (ll, parent, w) in candidates {
            let tokens = live[parent].tokens.clone();
            if w == EOS {
                finished.push(Hypothesis {
                    tokens,
                    log_likelihood: ll,
                    finished: true,
                });
            } else {
                let mut tokens = tokens;
                tokens.push(w);
                next.push(Live { tokens, ll });
                parents.push(parent);
            }
        }
        if next.is_empty() || finished.len() >= width {
            break;
        }
        state = out.state.select_rows(s.graph(), &parents)?;
        live = next;
    }
    rank(&mut finished, config)?;
    Ok(finished)
}

fn rank(hyps: &mut [Hypothesis], config: &BeamConfig) -> Result<()> {
    let mut keyed = hyps
        .iter()
        .map(|h| Ok((config.score(h)?, h.clone())))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.tokens.cmp(&b.1.tokens)));
    for (slot, (_, h)) in hyps.iter_mut().zip(keyed) {
        *slot = h;
    }
    Ok(())
}

/// The best hypothesis of [`beam_search`].
pub fn decode(model: &Seq2Seq, source: &[usize], config: &BeamConfig) -> Result<Hypothesis> {
    beam_search(model, source, config)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Model("beam search produced no hypothesis".into()))
}

/// Step-wise argmax decoding of several sentences at once. Each sentence
/// stops at EOS or at its own length limit.
pub fn greedy_decode_batch(model: &Seq2Seq, sources: &[Vec<usize>], max_len: Option<usize>) -> Result<Vec<Hypothesis>> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let limit = |src: &Vec<usize>| BeamConfig { max_len, ..BeamConfig::greedy() }.max_len_for(src.len());
    let limits: Vec<usize> = sources.iter().map(limit).collect();
    let longest = sources.iter().map(Vec::len).max().unwrap_or(0);
    let lens: Vec<usize> = sources.iter().map(Vec::len).collect();
    let padded: Vec<Vec<usize>> = sources
        .iter()
        .map(|s| {
            let mut row = s.clone();
            row.resize(longest, PAD);
            row
        })
        .collect();

    let mut graph = Graph::new();
    let mut s = model.session(&mut graph, Mode::Eval);
    let enc = s.encode_batch(&padded, &lens)?;
    let mut state = s.init_decoder(&enc)?;
    let mut hyps: Vec<Hypothesis> = sources
        .iter()
        .map(|_| Hypothesis {
            tokens: vec![],
            log_likelihood: 0.0,
            finished: false,
        })
        .collect();
    let steps = limits.iter().copied().max().unwrap_or(0);
    for step in 1..=steps {
        if hyps.iter().all(|h| h.finished) {
            break;
        }
        let prev: Vec<usize> = hyps.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
        let (next_state, scores) = step_scores(&mut s, &prev, &state, &enc)?;
        for (b, h) in hyps.iter_mut().enumerate() {
            if h.finished {
                continue;
            }
            let logp = log_softmax(&scores[b]);
            let forced = step >= limits[b];
            let (lp, w) = logp
                .iter()
                .enumerate()
                .filter(|&(w, _)| expandable(w) && (!forced || w == EOS))
                .map(|(w, &lp)| (lp, w))
                .min_by(|&a, &b| rank_desc(a, b))
                .expect("EOS is always expandable");
            h.log_likelihood += lp;
            if w == EOS {
                h.finished = true;
            } else {
                h.tokens.push(w);
            }
        }
        state = next_state;
    }
    Ok(hyps)
}

fn step_scores(
    s: &mut Session<'_>,
    prev: &[usize],
    state: &DecoderState,
    enc: &EncoderStates,
) -> Result<(DecoderState, Vec<Vec<f64>>)> {
    let out = s.decode_step(prev, state, enc)?;
    let t = s.value(out.scores);
    let rows = (0..t.outer_len()).map(|r| t.row(r).to_vec()).collect();
    Ok((out.state, rows))
}

/// Step-wise argmax decoding of one sentence.
pub fn greedy_decode(model: &Seq2Seq, source: &[usize], max_len: Option<usize>) -> Result<Hypothesis> {
    let mut out = greedy_decode_batch(model, &[source.to_vec()], max_len)?;
    Ok(out.remove(0))
}

/// Sum of the log-probabilities the model assigns to `tokens` followed by
/// EOS under teacher forcing.
pub fn sequence_log_likelihood(model: &Seq2Seq, source: &[usize], tokens: &[usize]) -> Result<f64> {
    let mut graph = Graph::new();
    let mut s = model.session(&mut graph, Mode::Eval);
    let enc = s.encode(source)?;
    let mut state = s.init_decoder(&enc)?;
    let mut prev = BOS;
    let mut ll = 0.0;
    for &w in tokens.iter().chain(&[EOS]) {
        let (next, scores) = step_scores(&mut s, &[prev], &state, &enc)?;
        ll += log_softmax(&scores[0])[w];
        state = next;
        prev = w;
    }
    Ok(ll)
}
