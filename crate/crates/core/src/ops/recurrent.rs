//! LSTM and additive attention, composed from tape primitives so every
//! gradient falls out of the existing backward rules.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Parameters of one LSTM layer, as tape leaves.
///
/// `kernel` is (C, 4H), `recurrent` is (H, 4H), `bias` is (4H), with the
/// gate blocks ordered input, forget, candidate, output.
#[derive(Clone, Copy)]
pub struct LstmVars {
    pub kernel: Var,
    pub recurrent: Var,
    pub bias: Var,
    pub units: usize,
}

/// Additive-alignment attention parameters: score(s) = v . tanh(W s + b).
#[derive(Clone, Copy)]
pub struct AttentionVars {
    pub w: Var,
    pub b: Var,
    pub v: Var,
}

/// Output of [`lstm_forward`]: final hidden state (B,H) and the full
/// hidden-state sequence (B,T,H) for attention.
pub struct LstmOut {
    pub last: Var,
    pub sequence: Var,
}

/// Run an LSTM over x (B,T,C). States start at zero.
pub fn lstm_forward<F: Real>(tape: &mut Tape<F>, x: Var, p: &LstmVars) -> Result<LstmOut> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 {
        return Err(Error::dim("lstm", format!("input rank {}", s.len())));
    }
    let (b_n, t_n, _c_n) = (s[0], s[1], s[2]);
    let h = p.units;
    if tape.shape(p.kernel) != [s[2], 4 * h]
        || tape.shape(p.recurrent) != [h, 4 * h]
        || tape.shape(p.bias) != [4 * h]
    {
        return Err(Error::dim("lstm", "parameter shapes do not match units"));
    }

    let zero_gate_bias = tape.leaf(Tensor::zeros(&[4 * h]));
    let mut h_prev = tape.leaf(Tensor::zeros(&[b_n, h]));
    let mut c_prev = tape.leaf(Tensor::zeros(&[b_n, h]));
    let mut steps = Vec::with_capacity(t_n);
    for t in 0..t_n {
        let x_t = tape.time_slice(x, t)?;
        let zx = tape.dense(x_t, p.kernel, p.bias)?;
        let zh = tape.dense(h_prev, p.recurrent, zero_gate_bias)?;
        let z = tape.add(zx, zh)?;

        let i_lin = tape.narrow_lastdim(z, 0, h)?;
        let f_lin = tape.narrow_lastdim(z, h, h)?;
        let g_lin = tape.narrow_lastdim(z, 2 * h, h)?;
        let o_lin = tape.narrow_lastdim(z, 3 * h, h)?;

        let i_gate = tape.sigmoid(i_lin)?;
        let f_gate = tape.sigmoid(f_lin)?;
        let g_cand = tape.tanh(g_lin)?;
        let o_gate = tape.sigmoid(o_lin)?;

        let keep = tape.mul(f_gate, c_prev)?;
        let write = tape.mul(i_gate, g_cand)?;
        let c_t = tape.add(keep, write)?;
        let c_act = tape.tanh(c_t)?;
        let h_t = tape.mul(o_gate, c_act)?;

        steps.push(h_t);
        h_prev = h_t;
        c_prev = c_t;
    }
    let sequence = tape.stack_time(&steps)?;
    Ok(LstmOut {
        last: h_prev,
        sequence,
    })
}

/// Attention context over hidden states (B,T,H): softmax-normalized
/// alignment weights, then their convex combination of the states.
pub fn attention_context<F: Real>(
    tape: &mut Tape<F>,
    states: Var,
    p: &AttentionVars,
) -> Result<Var> {
    let s = tape.shape(states).to_vec();
    if s.len() != 3 {
        return Err(Error::dim("attention", format!("states rank {}", s.len())));
    }
    let (b_n, t_n, _h_n) = (s[0], s[1], s[2]);
    let a_n = tape.shape(p.w)[1];
    let u = tape.dense(states, p.w, p.b)?; // (B,T,A)
    let u = tape.tanh(u)?;
    let zero = tape.leaf(Tensor::zeros(&[1]));
    let scores = tape.dense(u, p.v, zero)?; // (B,T,1)
    debug_assert_eq!(tape.shape(p.v), &[a_n, 1]);
    let scores = tape.reshape(scores, vec![b_n, t_n])?;
    let weights = tape.softmax_lastdim(scores)?;
    tape.weighted_sum_time(states, weights)
}

impl<F: Real> Tape<F> {
    /// context[b,h] = sum_t weights[b,t] * states[b,t,h]
    pub fn weighted_sum_time(&mut self, states: Var, weights: Var) -> Result<Var> {
        let s_val = self.value(states).clone();
        let w_val = self.value(weights).clone();
        let s = s_val.shape();
        if s.len() != 3 || w_val.shape() != [s[0], s[1]] {
            return Err(Error::dim(
                "weighted_sum_time",
                format!("states {:?}, weights {:?}", s, w_val.shape()),
            ));
        }
        let (b_n, t_n, h_n) = (s[0], s[1], s[2]);
        let mut out = vec![F::zero(); b_n * h_n];
        for b in 0..b_n {
            for t in 0..t_n {
                let a = w_val.data()[b * t_n + t];
                let base = (b * t_n + t) * h_n;
                for h in 0..h_n {
                    out[b * h_n + h] += a * s_val.data()[base + h];
                }
            }
        }
        let out = Tensor::from_vec(vec![b_n, h_n], out)?.check_finite("weighted_sum_time")?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let mut ds = vec![F::zero(); b_n * t_n * h_n];
            let mut dw = vec![F::zero(); b_n * t_n];
            for b in 0..b_n {
                for t in 0..t_n {
                    let a = w_val.data()[b * t_n + t];
                    let base = (b * t_n + t) * h_n;
                    let mut dot = F::zero();
                    for h in 0..h_n {
                        ds[base + h] = a * g[b * h_n + h];
                        dot += g[b * h_n + h] * s_val.data()[base + h];
                    }
                    dw[b * t_n + t] = dot;
                }
            }
            sink.add(states, Tensor::from_vec(vec![b_n, t_n, h_n], ds).unwrap());
            sink.add(weights, Tensor::from_vec(vec![b_n, t_n], dw).unwrap());
        }))
    }
}
