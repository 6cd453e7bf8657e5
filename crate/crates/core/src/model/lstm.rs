use crate::autodiff::{Graph, ParamId, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundLstm {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

/// One LSTM step with gate layout `[input, forget, cell, output]`.
pub(crate) fn lstm_cell(
    g: &mut Graph,
    p: &BoundLstm,
    hidden: usize,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let xi = g.matmul(x, p.w_ih)?;
    let hh = g.matmul(h, p.w_hh)?;
    let gates = g.add(xi, hh)?;
    let gates = g.add(gates, p.bias)?;
    let i = g.slice_last(gates, 0, hidden)?;
    let f = g.slice_last(gates, hidden, hidden)?;
    let cand = g.slice_last(gates, 2 * hidden, hidden)?;
    let o = g.slice_last(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}
