//! LSTM cell with packed gate layout `(i, f, g, o)`.
//!
//! The weight is a `[4H, D + H]` matrix applied to `[x; h]`, the bias has
//! length `4H`. Rows `0..H` drive the input gate, `H..2H` the forget gate,
//! `2H..3H` the candidate and `3H..4H` the output gate.

use super::ops::{check_len, matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use super::{dim_err, NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmCellState {
    pub fn zeros(hidden: usize) -> Self {
        Self { hidden: vec![0.0; hidden], cell: vec![0.0; hidden] }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `[x; h_prev]`
    pub joint: Vec<f64>,
    pub prev_cell: Vec<f64>,
    /// Activated gates, `4H` long in `(i, f, g, o)` order.
    pub gates: Vec<f64>,
    pub tanh_cell: Vec<f64>,
}

pub fn lstm_step(
    weight: &Tensor,
    bias: &Tensor,
    input: &[f64],
    state: &LstmCellState,
) -> Result<(LstmCellState, LstmCache), NnError> {
    let h = state.hidden.len();
    check_len("cell state", h, state.cell.len())?;
    if weight.shape() != [4 * h, input.len() + h] {
        return Err(dim_err(format!("weight [{}, {}]", 4 * h, input.len() + h), format!("{:?}", weight.shape())));
    }
    check_len("bias", 4 * h, bias.len())?;
    let mut joint = Vec::with_capacity(input.len() + h);
    joint.extend_from_slice(input);
    joint.extend_from_slice(&state.hidden);
    let mut gates = bias.data().to_vec();
    matvec_acc(weight.data(), &joint, &mut gates);
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * h..3 * h).contains(&k) { z.tanh() } else { sigmoid(*z) };
    }
    let mut cell = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut tanh_cell = vec![0.0; h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        cell[j] = f * state.cell[j] + i * g;
        tanh_cell[j] = cell[j].tanh();
        hidden[j] = o * tanh_cell[j];
    }
    let cache = LstmCache { joint, prev_cell: state.cell.clone(), gates, tanh_cell };
    Ok((LstmCellState { hidden, cell }, cache))
}

/// Backpropagates `(d_hidden, d_cell)` through one step, accumulating weight
/// and bias gradients. Returns `(d_input, d_prev_state)`.
pub fn lstm_step_backward(
    weight: &Tensor,
    cache: &LstmCache,
    d_hidden: &[f64],
    d_cell: &[f64],
    d_weight: &mut Tensor,
    d_bias: &mut Tensor,
) -> (Vec<f64>, LstmCellState) {
    let h = cache.prev_cell.len();
    let g = &cache.gates;
    let mut d_pre = vec![0.0; 4 * h];
    let mut d_prev_cell = vec![0.0; h];
    for j in 0..h {
        let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
        let tc = cache.tanh_cell[j];
        let dc = d_cell[j] + d_hidden[j] * o * (1.0 - tc * tc);
        d_pre[3 * h + j] = d_hidden[j] * tc * o * (1.0 - o);
        d_pre[j] = dc * gg * i * (1.0 - i);
        d_pre[h + j] = dc * cache.prev_cell[j] * f * (1.0 - f);
        d_pre[2 * h + j] = dc * i * (1.0 - gg * gg);
        d_prev_cell[j] = dc * f;
    }
    outer_acc(d_weight.data_mut(), &d_pre, &cache.joint);
    for (b, d) in d_bias.data_mut().iter_mut().zip(&d_pre) {
        *b += d;
    }
    let mut d_joint = vec![0.0; cache.joint.len()];
    matvec_t_acc(weight.data(), &d_pre, &mut d_joint);
    let d_prev_hidden = d_joint.split_off(cache.joint.len() - h);
    (d_joint, LstmCellState { hidden: d_prev_hidden, cell: d_prev_cell })
}
