//! BiLSTM encoder, LSTM decoder with bilinear-tanh attention, word generator
//! and the sentence-level bag-of-words head.
//!
//! Encoder states are the sum of forward and backward top-layer outputs.
//! Attention scores are `tanh(q^T W h_i)` normalized over unpadded source
//! positions. The bag head sums the decoder score vectors over all unpadded
//! target positions and applies an elementwise sigmoid.

mod checkpoint;
mod config;
mod lstm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{GeneratorInput, ModelConfig};

use crate::autodiff::{Graph, ParamId, ParameterStore, Tensor, Var};
use crate::data::{Batch, BOS};
use crate::error::{Error, Result};
use lstm::{lstm_cell, BoundLstm, LstmParams};

pub const INIT_RANGE: f64 = 0.1;
pub const FORGET_BIAS: f64 = 1.0;
/// Weight range for gradient checks. At the training initialization,
/// gradients reaching the decoder are too small for finite differences.
pub const GRADCHECK_RANGE: f64 = 1.0;

/// Parameter handles of a model; values live in a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Architecture {
    config: ModelConfig,
    src_embed: ParamId,
    tgt_embed: ParamId,
    /// `[layer][direction]`, direction 0 forward and 1 backward.
    encoder: Vec<[LstmParams; 2]>,
    decoder: Vec<LstmParams>,
    attention: ParamId,
    gen_weight: ParamId,
    gen_bias: ParamId,
}

impl Architecture {
    /// Registers every parameter, zero-valued, in `store`.
    pub fn register(config: ModelConfig, store: &mut ParameterStore) -> Result<Self> {
        config.validate()?;
        let (e, h) = (config.emb_size, config.hidden_size);
        let src_embed = store.add("src_embed", Tensor::zeros(&[config.src_vocab, e]))?;
        let tgt_embed = store.add("tgt_embed", Tensor::zeros(&[config.tgt_vocab, e]))?;
        let mut lstm = |prefix: String, input: usize| -> Result<LstmParams> {
            Ok(LstmParams {
                w_ih: store.add(format!("{prefix}.w_ih"), Tensor::zeros(&[input, 4 * h]))?,
                w_hh: store.add(format!("{prefix}.w_hh"), Tensor::zeros(&[h, 4 * h]))?,
                bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[4 * h]))?,
            })
        };
        let mut encoder = Vec::with_capacity(config.enc_layers);
        for l in 0..config.enc_layers {
            let input = if l == 0 { e } else { 2 * h };
            encoder.push([
                lstm(format!("enc.{l}.fwd"), input)?,
                lstm(format!("enc.{l}.bwd"), input)?,
            ]);
        }
        let decoder = (0..config.dec_layers)
            .map(|l| lstm(format!("dec.{l}"), if l == 0 { e } else { h }))
            .collect::<Result<Vec<_>>>()?;
        let attention = store.add("attn.w", Tensor::zeros(&[h, h]))?;
        let gen_weight = store.add("gen.w", Tensor::zeros(&[config.generator_width(), config.tgt_vocab]))?;
        let gen_bias = store.add("gen.bias", Tensor::zeros(&[config.tgt_vocab]))?;
        Ok(Architecture {
            config,
            src_embed,
            tgt_embed,
            encoder,
            decoder,
            attention,
            gen_weight,
            gen_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn attention_param(&self) -> ParamId {
        self.attention
    }

    pub fn generator_params(&self) -> (ParamId, ParamId) {
        (self.gen_weight, self.gen_bias)
    }

    fn lstm_params(&self) -> impl Iterator<Item = &LstmParams> {
        self.encoder.iter().flatten().chain(&self.decoder)
    }
}

/// A model: its architecture plus parameter values.
#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub arch: Architecture,
    pub store: ParameterStore,
}

impl Seq2Seq {
    /// Uniform(-0.1, 0.1) initialization in parameter registration order,
    /// then +1 on every LSTM forget-gate bias.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParameterStore::new();
        let arch = Architecture::register(config, &mut store)?;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for x in store.value_mut(id).data_mut() {
                *x = rng.gen_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        let h = arch.config.hidden_size;
        for p in arch.lstm_params() {
            for x in &mut store.value_mut(p.bias).data_mut()[h..2 * h] {
                *x += FORGET_BIAS;
            }
        }
        Ok(Seq2Seq { arch, store })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    /// Redraws every parameter from uniform(-range, range).
    pub fn randomize<R: Rng>(&mut self, rng: &mut R, range: f64) {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            for x in self.store.value_mut(id).data_mut() {
                *x = rng.gen_range(-range..range);
            }
        }
    }

    pub fn session<'a>(&'a self, graph: &'a mut Graph, mode: Mode) -> Session<'a> {
        Session::new(&self.arch, &self.store, graph, mode)
    }
}

/// Whether dropout is active. Training carries the seed of the generator
/// that draws this step's dropout masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

/// Top-layer encoder outputs plus per-layer final states.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    /// `[batch, max_len, hidden]`; `h_t = forward_t + backward_t`.
    pub outputs: Var,
    /// `[batch * max_len]`, true on real source positions.
    pub mask: Vec<bool>,
    pub lens: Vec<usize>,
    pub max_len: usize,
    /// Per encoder layer: `(h, c)` for forward then backward direction.
    pub finals: Vec<[(Var, Var); 2]>,
}

impl EncoderStates {
    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }

    /// Replicates or reorders batch rows.
    pub fn select_rows(&self, g: &mut Graph, rows: &[usize]) -> Result<EncoderStates> {
        let outputs = g.gather_rows(self.outputs, rows)?;
        let mut finals = Vec::with_capacity(self.finals.len());
        for layer in &self.finals {
            let mut pick = |(h, c): (Var, Var)| -> Result<(Var, Var)> {
                Ok((g.gather_rows(h, rows)?, g.gather_rows(c, rows)?))
            };
            finals.push([pick(layer[0])?, pick(layer[1])?]);
        }
        let l = self.max_len;
        Ok(EncoderStates {
            outputs,
            mask: rows.iter().flat_map(|&r| self.mask[r * l..(r + 1) * l].iter().copied()).collect(),
            lens: rows.iter().map(|&r| self.lens[r]).collect(),
            max_len: l,
            finals,
        })
    }
}

/// Per decoder layer `(hidden, cell)`, each `[batch, hidden]`.
#[derive(Clone, Debug, Default)]
pub struct DecoderState {
    pub layers: Vec<(Var, Var)>,
}

impl DecoderState {
    /// The top-layer hidden state, used as the attention query.
    pub fn query(&self) -> Option<Var> {
        self.layers.last().map(|l| l.0)
    }

    pub fn select_rows(&self, g: &mut Graph, rows: &[usize]) -> Result<DecoderState> {
        let layers = self
            .layers
            .iter()
            .map(|&(h, c)| Ok((g.gather_rows(h, rows)?, g.gather_rows(c, rows)?)))
            .collect::<Result<_>>()?;
        Ok(DecoderState { layers })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionResult {
    /// `[batch, max_len]`, zero on padded positions.
    pub weights: Var,
    /// `[batch, hidden]`
    pub context: Var,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `[batch, tgt_vocab]` pre-softmax scores.
    pub scores: Var,
    /// `[batch, tgt_vocab]` word distribution.
    pub probs: Var,
    pub attention: AttentionResult,
    pub state: DecoderState,
}

#[derive(Clone, Debug)]
pub struct TeacherForced {
    /// One `[batch, tgt_vocab]` score matrix per target position.
    pub scores: Vec<Var>,
    pub probs: Vec<Var>,
    /// `[batch, tgt_vocab]` sum of scores over each example's real positions.
    pub summed_scores: Var,
    /// `[batch, tgt_vocab]` sigmoid of `summed_scores`.
    pub bag_probs: Var,
}

struct Bound {
    src_embed: Var,
    tgt_embed: Var,
    encoder: Vec<[BoundLstm; 2]>,
    decoder: Vec<BoundLstm>,
    attention: Var,
    gen_weight: Var,
    gen_bias: Var,
}

/// Builds model computations into a graph.
pub struct Session<'a> {
    arch: &'a Architecture,
    graph: &'a mut Graph,
    params: Bound,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'a> Session<'a> {
    pub fn new(arch: &'a Architecture, store: &ParameterStore, graph: &'a mut Graph, mode: Mode) -> Self {
        let mut bind = |id| graph.param(store, id);
        let mut bind_lstm = |p: &LstmParams| BoundLstm {
            w_ih: bind(p.w_ih),
            w_hh: bind(p.w_hh),
            bias: bind(p.bias),
        };
        let encoder = arch.encoder.iter().map(|[f, b]| [bind_lstm(f), bind_lstm(b)]).collect();
        let decoder = arch.decoder.iter().map(&mut bind_lstm).collect();
        let params = Bound {
            src_embed: graph.param(store, arch.src_embed),
            tgt_embed: graph.param(store, arch.tgt_embed),
            encoder,
            decoder,
            attention: graph.param(store, arch.attention),
            gen_weight: graph.param(store, arch.gen_weight),
            gen_bias: graph.param(store, arch.gen_bias),
        };
        let dropout = match mode {
            Mode::Train { dropout_seed } if arch.config.dropout > 0.0 => {
                Some((arch.config.dropout, ChaCha8Rng::seed_from_u64(dropout_seed)))
            }
            _ => None,
        };
        Session {
            arch,
            graph,
            params,
            dropout,
        }
    }

    pub fn graph(&mut self) -> &mut Graph {
        self.graph
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.graph.value(v)
    }

    fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    /// Inverted dropout with a freshly drawn mask; identity in eval mode.
    fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let keep = 1.0 - *rate;
        let n = self.graph.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.graph.dropout(x, mask)
    }

    fn zeros(&mut self, rows: usize) -> Var {
        let h = self.config().hidden_size;
        self.graph.leaf(Tensor::zeros(&[rows, h]))
    }

    fn check_indices(&self, indices: &[usize], vocab: usize, side: &str) -> Result<()> {
        match indices.iter().find(|&&i| i >= vocab) {
            Some(bad) => Err(Error::Model(format!(
                "{side} index {bad} outside vocabulary of size {vocab}"
            ))),
            None => Ok(()),
        }
    }

    /// Encodes one unpadded source sentence.
    pub fn encode(&mut self, source: &[usize]) -> Result<EncoderStates> {
        self.encode_batch(&[source.to_vec()], &[source.len()])
    }

    /// Encodes PAD-filled rows; positions at or beyond `lens[b]` do not
    /// influence row `b`'s states.
    pub fn encode_batch(&mut self, source: &[Vec<usize>], lens: &[usize]) -> Result<EncoderStates> {
        let batch = source.len();
        if batch == 0 || lens.len() != batch {
            return Err(Error::Model("encode: empty batch or length mismatch".into()));
        }
        let max_len = source[0].len();
        if max_len == 0 || lens.iter().any(|&l| l == 0 || l > max_len) || source.iter().any(|r| r.len() != max_len) {
            return Err(Error::Model("encode: empty or malformed source sequence".into()));
        }
        let src_vocab = self.config().src_vocab;
        for row in source {
            self.check_indices(row, src_vocab, "source")?;
        }
        let hidden = self.config().hidden_size;

        // time-major embedding lookup
        let flat: Vec<usize> = (0..max_len).flat_map(|t| source.iter().map(move |r| r[t])).collect();
        let all = self.graph.gather_rows(self.params.src_embed, &flat)?;
        let all = self.dropout(all)?;
        let mut inputs = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let rows: Vec<usize> = (t * batch..(t + 1) * batch).collect();
            inputs.push(self.graph.gather_rows(all, &rows)?);
        }
        let valid: Vec<Vec<bool>> = (0..max_len)
            .map(|t| lens.iter().map(|&l| t < l).collect())
            .collect();

        let mut finals = Vec::with_capacity(self.arch.encoder.len());
        let mut top = Vec::new();
        let n_layers = self.params.encoder.len();
        for layer in 0..n_layers {
            let [fwd_p, bwd_p] = self.params.encoder[layer];
            let mut fwd_out = Vec::with_capacity(max_len);
            let (mut h, mut c) = (self.zeros(batch), self.zeros(batch));
            for t in 0..max_len {
                (h, c) = self.masked_cell(&fwd_p, hidden, inputs[t], h, c, &valid[t])?;
                fwd_out.push(h);
            }
            let fwd_final = (h, c);

            let mut bwd_out = vec![h; max_len];
            let (mut h, mut c) = (self.zeros(batch), self.zeros(batch));
            for t in (0..max_len).rev() {
                (h, c) = self.masked_cell(&bwd_p, hidden, inputs[t], h, c, &valid[t])?;
                bwd_out[t] = h;
            }
            finals.push([fwd_final, (h, c)]);

            if layer + 1 < n_layers {
                for t in 0..max_len {
                    let joined = self.graph.concat(&[fwd_out[t], bwd_out[t]], 1)?;
                    inputs[t] = self.dropout(joined)?;
                }
            } else {
                for t in 0..max_len {
                    let sum = self.graph.add(fwd_out[t], bwd_out[t])?;
                    top.push(self.graph.reshape(sum, &[batch, 1, hidden])?);
                }
            }
        }
        let outputs = self.graph.concat(&top, 1)?;
        let mask = lens
            .iter()
            .flat_map(|&l| (0..max_len).map(move |t| t < l))
            .collect();
        Ok(EncoderStates {
            outputs,
            mask,
            lens: lens.to_vec(),
            max_len,
            finals,
        })
    }

    fn masked_cell(
        &mut self,
        p: &BoundLstm,
        hidden: usize,
        x: Var,
        h: Var,
        c: Var,
        valid: &[bool],
    ) -> Result<(Var, Var)> {
        let (h_new, c_new) = lstm_cell(self.graph, p, hidden, x, h, c)?;
        if valid.iter().all(|&v| v) {
            return Ok((h_new, c_new));
        }
        Ok((
            self.graph.where_rows(valid, h_new, h)?,
            self.graph.where_rows(valid, c_new, c)?,
        ))
    }

    /// Decoder layer `j` starts from the summed forward and backward final
    /// states of encoder layer `j + enc_layers - dec_layers`; decoder layers
    /// without a counterpart start at zero.
    pub fn init_decoder(&mut self, enc: &EncoderStates) -> Result<DecoderState> {
        let (n_enc, n_dec) = (self.config().enc_layers, self.config().dec_layers);
        let batch = enc.batch_size();
        let mut layers = Vec::with_capacity(n_dec);
        for j in 0..n_dec {
            let state = match (j + n_enc).checked_sub(n_dec) {
                Some(e) => {
                    let [(hf, cf), (hb, cb)] = enc.finals[e];
                    (self.graph.add(hf, hb)?, self.graph.add(cf, cb)?)
                }
                None => (self.zeros(batch), self.zeros(batch)),
            };
            layers.push(state);
        }
        Ok(DecoderState { layers })
    }

    /// `alpha = softmax_i(tanh(q^T W h_i))` over real positions, `v = sum_i alpha_i h_i`.
    pub fn attend(&mut self, query: Var, enc: &EncoderStates) -> Result<AttentionResult> {
        let hidden = self.config().hidden_size;
        let batch = enc.batch_size();
        if self.graph.shape(query) != [batch, hidden] {
            return Err(Error::Shape {
                op: "attend",
                lhs: self.graph.shape(query).to_vec(),
                rhs: vec![batch, hidden],
            });
        }
        let projected = self.graph.matmul(query, self.params.attention)?;
        let projected = self.graph.reshape(projected, &[batch, hidden, 1])?;
        let raw = self.graph.batch_matmul(enc.outputs, projected)?;
        let raw = self.graph.reshape(raw, &[batch, enc.max_len])?;
        let energy = self.graph.tanh(raw);
        let weights = self.graph.masked_softmax(energy, Some(&enc.mask))?;
        let w3 = self.graph.reshape(weights, &[batch, 1, enc.max_len])?;
        let context = self.graph.batch_matmul(w3, enc.outputs)?;
        let context = self.graph.reshape(context, &[batch, hidden])?;
        Ok(AttentionResult { weights, context })
    }

    /// One decoder step for every batch row, from the previous tokens.
    pub fn decode_step(
        &mut self,
        prev_tokens: &[usize],
        state: &DecoderState,
        enc: &EncoderStates,
    ) -> Result<StepOutput> {
        if state.layers.len() != self.config().dec_layers {
            return Err(Error::Model(format!(
                "decoder state has {} layers, model has {}; initialize it from the encoder first",
                state.layers.len(),
                self.config().dec_layers
            )));
        }
        if prev_tokens.len() != enc.batch_size() {
            return Err(Error::Model("decode_step: token count does not match batch".into()));
        }
        self.check_indices(prev_tokens, self.config().tgt_vocab, "target")?;
        let hidden = self.config().hidden_size;
        let emb = self.graph.gather_rows(self.params.tgt_embed, prev_tokens)?;
        let mut x = self.dropout(emb)?;
        let n = state.layers.len();
        let mut layers = Vec::with_capacity(n);
        for (j, &(h, c)) in state.layers.iter().enumerate() {
            let p = self.params.decoder[j];
            let (h, c) = lstm_cell(self.graph, &p, hidden, x, h, c)?;
            layers.push((h, c));
            x = if j + 1 < n { self.dropout(h)? } else { h };
        }
        let query = x;
        let attention = self.attend(query, enc)?;
        let gen_in = match self.config().generator_input {
            GeneratorInput::Context => attention.context,
            GeneratorInput::Concat => self.graph.concat(&[query, attention.context], 1)?,
        };
        let scores = self.graph.matmul(gen_in, self.params.gen_weight)?;
        let scores = self.graph.add(scores, self.params.gen_bias)?;
        let probs = self.graph.softmax(scores)?;
        Ok(StepOutput {
            scores,
            probs,
            attention,
            state: DecoderState { layers },
        })
    }

    /// `sigmoid(sum_t s_t)` per row, with `keep[b * steps + t]` selecting the
    /// positions included for row `b`.
    pub fn bow_probabilities(&mut self, scores: &[Var], keep: Option<&[bool]>) -> Result<(Var, Var)> {
        let first = *scores
            .first()
            .ok_or_else(|| Error::Model("bag-of-words head needs at least one score vector".into()))?;
        let shape = self.graph.shape(first).to_vec();
        let (batch, vocab) = (shape[0], shape[1]);
        let stacked = scores
            .iter()
            .map(|&s| self.graph.reshape(s, &[batch, 1, vocab]))
            .collect::<Result<Vec<_>>>()?;
        let stacked = self.graph.concat(&stacked, 1)?;
        let summed = self.graph.masked_sum_axis(stacked, 1, keep)?;
        let probs = self.graph.sigmoid(summed);
        Ok((summed, probs))
    }

    /// Runs the decoder over the gold prefix `BOS, y_1, ..., y_{M-1}` of every row.
    pub fn forward_teacher_forced(&mut self, batch: &Batch) -> Result<TeacherForced> {
        let enc = self.encode_batch(&batch.source, &batch.source_lens)?;
        let mut state = self.init_decoder(&enc)?;
        let steps = batch.max_target_len();
        let mut scores = Vec::with_capacity(steps);
        let mut probs = Vec::with_capacity(steps);
        for t in 0..steps {
            let prev: Vec<usize> = batch
                .target
                .iter()
                .map(|row| if t == 0 { BOS } else { row[t - 1] })
                .collect();
            let out = self.decode_step(&prev, &state, &enc)?;
            scores.push(out.scores);
            probs.push(out.probs);
            state = out.state;
        }
        let mask = batch.target_mask();
        let (summed_scores, bag_probs) = self.bow_probabilities(&scores, Some(&mask))?;
        Ok(TeacherForced {
            scores,
            probs,
            summed_scores,
            bag_probs,
        })
    }
}

/// `sigmoid(sum_t s_t)` for plain score vectors, using the same
/// order-independent reduction as the graph.
pub fn bow_probabilities(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Model("bag-of-words head needs at least one score vector".into()));
    }
    let mut g = Graph::new();
    let stacked = g.leaf(Tensor::from_rows(scores)?);
    let summed = g.sum_axis(stacked, 0)?;
    let p = g.sigmoid(summed);
    Ok(g.value(p).data().to_vec())
}
