//! Recurrent branch of the LSTM hybrids: dimension shuffle, LSTM (plain or
//! attention-pooled), dropout.
//!
//! The shuffle turns (B,Q,1) into (B,1,Q), so the LSTM consumes the whole
//! series as one Q-dimensional time step; training these models without the
//! shuffle is known to overfit badly.

use crate::error::Result;
use crate::tape::Var;
use crate::tensor::Real;
use rand_chacha::ChaCha8Rng;

use super::layers::{AttentionLayer, LstmLayer};
use super::{Fwd, Mode, ParamStore};

pub(crate) struct LstmBranch {
    lstm: LstmLayer,
    attention: Option<AttentionLayer>,
    dropout: f64,
}

impl LstmBranch {
    pub(crate) fn build<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        input_len: usize,
        units: usize,
        attention: bool,
        dropout: f64,
    ) -> Result<Self> {
        let lstm = LstmLayer::new(store, rng, "lstm", input_len, units);
        let attention = attention.then(|| AttentionLayer::new(store, rng, "attention", units));
        Ok(LstmBranch {
            lstm,
            attention,
            dropout,
        })
    }

    /// (B,Q,1) input -> (B, units).
    pub(crate) fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let shuffled = cx.tape.dimension_shuffle(x)?;
        let (last, sequence) = self.lstm.forward(cx, shuffled)?;
        let pooled = match &self.attention {
            Some(att) => att.forward(cx, sequence)?,
            None => last,
        };
        match cx.mode {
            Mode::Train => cx.tape.dropout(pooled, self.dropout, cx.rng),
            Mode::Infer => Ok(pooled),
        }
    }
}
