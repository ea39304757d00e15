//! Primitive differentiable operations, implemented as methods on
//! [`crate::tape::Tape`] plus a few composed routines (LSTM, attention).

pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod norm;
pub mod pool;
pub mod recurrent;
pub mod shape_ops;
pub mod softmax;
