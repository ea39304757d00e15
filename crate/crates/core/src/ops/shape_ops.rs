//! Structural ops: transposes, slicing, concatenation, stacking.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Swap axes 1 and 2 of a rank-3 buffer.
fn transpose12<F: Real>(t: &Tensor<F>) -> Tensor<F> {
    let (d0, d1, d2) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let src = t.data();
    let mut out = vec![F::zero(); src.len()];
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                out[i * d2 * d1 + k * d1 + j] = src[i * d1 * d2 + j * d2 + k];
            }
        }
    }
    Tensor::from_vec(vec![d0, d2, d1], out).unwrap()
}

impl<F: Real> Tape<F> {
    /// Transpose axes 1 and 2 of a rank-3 tensor, e.g. (B,Q,1) -> (B,1,Q).
    ///
    /// Applying it twice is the identity.
    pub fn dimension_shuffle(&mut self, x: Var) -> Result<Var> {
        let x_val = self.value(x);
        if x_val.shape().len() != 3 {
            return Err(Error::dim(
                "dimension_shuffle",
                format!("expected rank 3, got {:?}", x_val.shape()),
            ));
        }
        let out = transpose12(x_val);
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, transpose12(grad));
        }))
    }

    /// View with a new shape; element count preserved.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let x_shape = self.shape(x).to_vec();
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, grad.reshape(x_shape.clone()).unwrap());
        }))
    }

    /// Concatenate two tensors along the last axis; leading dims must match.
    pub fn concat_lastdim(&mut self, a: Var, b: Var) -> Result<Var> {
        let a_val = self.value(a).clone();
        let b_val = self.value(b).clone();
        let (ra, rb) = (a_val.shape().len(), b_val.shape().len());
        if ra != rb || ra == 0 || a_val.shape()[..ra - 1] != b_val.shape()[..rb - 1] {
            return Err(Error::dim(
                "concat",
                format!("incompatible shapes {:?}, {:?}", a_val.shape(), b_val.shape()),
            ));
        }
        let wa = a_val.shape()[ra - 1];
        let wb = b_val.shape()[rb - 1];
        let rows: usize = a_val.shape()[..ra - 1].iter().product();
        let mut data = Vec::with_capacity(rows * (wa + wb));
        for r in 0..rows {
            data.extend_from_slice(&a_val.data()[r * wa..(r + 1) * wa]);
            data.extend_from_slice(&b_val.data()[r * wb..(r + 1) * wb]);
        }
        let mut shape = a_val.shape().to_vec();
        shape[ra - 1] = wa + wb;
        let out = Tensor::from_vec(shape, data)?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let mut ga = vec![F::zero(); rows * wa];
            let mut gb = vec![F::zero(); rows * wb];
            for r in 0..rows {
                ga[r * wa..(r + 1) * wa].copy_from_slice(&g[r * (wa + wb)..r * (wa + wb) + wa]);
                gb[r * wb..(r + 1) * wb]
                    .copy_from_slice(&g[r * (wa + wb) + wa..(r + 1) * (wa + wb)]);
            }
            sink.add(a, Tensor::from_vec(a_val.shape().to_vec(), ga).unwrap());
            sink.add(b, Tensor::from_vec(b_val.shape().to_vec(), gb).unwrap());
        }))
    }

    /// Slice `width` columns of the last axis starting at `offset`.
    pub fn narrow_lastdim(&mut self, x: Var, offset: usize, width: usize) -> Result<Var> {
        let x_val = self.value(x).clone();
        let rank = x_val.shape().len();
        let last = x_val.shape()[rank - 1];
        if offset + width > last {
            return Err(Error::dim(
                "narrow",
                format!("slice {offset}..{} exceeds width {last}", offset + width),
            ));
        }
        let rows: usize = x_val.shape()[..rank - 1].iter().product();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&x_val.data()[r * last + offset..r * last + offset + width]);
        }
        let mut shape = x_val.shape().to_vec();
        shape[rank - 1] = width;
        let out = Tensor::from_vec(shape, data)?;
        let x_shape = x_val.shape().to_vec();
        Ok(self.push(out, move |grad, sink| {
            let mut gx = vec![F::zero(); rows * last];
            for r in 0..rows {
                gx[r * last + offset..r * last + offset + width]
                    .copy_from_slice(&grad.data()[r * width..(r + 1) * width]);
            }
            sink.add(x, Tensor::from_vec(x_shape.clone(), gx).unwrap());
        }))
    }

    /// Extract time step `t` of a (B,T,C) tensor as (B,C).
    pub fn time_slice(&mut self, x: Var, t: usize) -> Result<Var> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 || t >= s[1] {
            return Err(Error::dim(
                "time_slice",
                format!("step {t} of shape {s:?}"),
            ));
        }
        let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
        let mut data = Vec::with_capacity(b_n * c_n);
        for b in 0..b_n {
            let base = b * t_n * c_n + t * c_n;
            data.extend_from_slice(&x_val.data()[base..base + c_n]);
        }
        let out = Tensor::from_vec(vec![b_n, c_n], data)?;
        Ok(self.push(out, move |grad, sink| {
            let mut gx = vec![F::zero(); b_n * t_n * c_n];
            for b in 0..b_n {
                let base = b * t_n * c_n + t * c_n;
                gx[base..base + c_n].copy_from_slice(&grad.data()[b * c_n..(b + 1) * c_n]);
            }
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_n], gx).unwrap());
        }))
    }

    /// Stack T tensors of shape (B,C) into (B,T,C).
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        if steps.is_empty() {
            return Err(Error::dim("stack_time", "no steps"));
        }
        let first = self.shape(steps[0]).to_vec();
        if first.len() != 2 {
            return Err(Error::dim(
                "stack_time",
                format!("steps must be rank 2, got {first:?}"),
            ));
        }
        let (b_n, c_n) = (first[0], first[1]);
        let t_n = steps.len();
        let mut data = vec![F::zero(); b_n * t_n * c_n];
        for (t, &v) in steps.iter().enumerate() {
            let val = self.value(v);
            if val.shape() != first.as_slice() {
                return Err(Error::dim("stack_time", "ragged step shapes"));
            }
            for b in 0..b_n {
                data[b * t_n * c_n + t * c_n..b * t_n * c_n + (t + 1) * c_n]
                    .copy_from_slice(&val.data()[b * c_n..(b + 1) * c_n]);
            }
        }
        let out = Tensor::from_vec(vec![b_n, t_n, c_n], data)?;
        let steps = steps.to_vec();
        Ok(self.push(out, move |grad, sink| {
            for (t, &v) in steps.iter().enumerate() {
                let mut g = vec![F::zero(); b_n * c_n];
                for b in 0..b_n {
                    g[b * c_n..(b + 1) * c_n].copy_from_slice(
                        &grad.data()[b * t_n * c_n + t * c_n..b * t_n * c_n + (t + 1) * c_n],
                    );
                }
                sink.add(v, Tensor::from_vec(vec![b_n, c_n], g).unwrap());
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_shuffle_is_an_involution() {
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let x = tape.leaf(Tensor::from_vec(vec![2, 4, 3], data.clone()).unwrap());
        let y = tape.dimension_shuffle(x).unwrap();
        assert_eq!(tape.shape(y), &[2, 3, 4]);
        let z = tape.dimension_shuffle(y).unwrap();
        assert_eq!(tape.value(z).data(), &data[..]);
    }

    #[test]
    fn shuffle_moves_series_into_channels() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1, 3, 1], vec![7.0, 8.0, 9.0]).unwrap());
        let y = tape.dimension_shuffle(x).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 3]);
        assert_eq!(tape.value(y).data(), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(vec![2, 1], vec![5.0, 6.0]).unwrap());
        let c = tape.concat_lastdim(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = tape.narrow_lastdim(c, 2, 1).unwrap();
        assert_eq!(tape.value(back).data(), &[5.0, 6.0]);
    }

    #[test]
    fn stack_time_inverts_time_slice() {
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x = tape.leaf(Tensor::from_vec(vec![2, 3, 2], data.clone()).unwrap());
        let slices: Vec<Var> = (0..3).map(|t| tape.time_slice(x, t).unwrap()).collect();
        let y = tape.stack_time(&slices).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }
}
