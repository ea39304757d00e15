//! Affine map on the last axis: y = x . w + b.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

impl<F: Real> Tape<F> {
    /// x (.., D) * w (D, H) + b (H). Leading axes are treated as batch.
    pub fn dense(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let x_val = self.value(x).clone();
        let w_val = self.value(w).clone();
        let b_val = self.value(bias).clone();
        let xs = x_val.shape().to_vec();
        let ws = w_val.shape();
        if ws.len() != 2 || xs.is_empty() {
            return Err(Error::dim(
                "dense",
                format!("x {:?} w {:?}", xs, ws),
            ));
        }
        let d = xs[xs.len() - 1];
        let (wd, h) = (ws[0], ws[1]);
        if wd != d || b_val.shape() != [h] {
            return Err(Error::dim(
                "dense",
                format!("x {:?} w {:?} b {:?}", xs, ws, b_val.shape()),
            ));
        }
        let m: usize = xs[..xs.len() - 1].iter().product();
        let mut out = vec![F::zero(); m * h];
        unsafe {
            F::gemm(
                m,
                d,
                h,
                F::one(),
                x_val.data().as_ptr(),
                d as isize,
                1,
                w_val.data().as_ptr(),
                h as isize,
                1,
                F::zero(),
                out.as_mut_ptr(),
                h as isize,
                1,
            );
        }
        for row in out.chunks_exact_mut(h) {
            for (o, &b) in row.iter_mut().zip(b_val.data()) {
                *o += b;
            }
        }
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = h;
        let out = Tensor::from_vec(out_shape, out)?.check_finite("dense")?;

        Ok(self.push(out, move |grad, sink| {
            let dy = grad.data();

            let mut db = vec![F::zero(); h];
            for row in dy.chunks_exact(h) {
                for (d_acc, &g) in db.iter_mut().zip(row) {
                    *d_acc += g;
                }
            }
            sink.add(bias, Tensor::from_vec(vec![h], db).unwrap());

            // dW = x^T (d x m) @ dY (m x h)
            let mut dw = vec![F::zero(); d * h];
            unsafe {
                F::gemm(
                    d,
                    m,
                    h,
                    F::one(),
                    x_val.data().as_ptr(),
                    1,
                    d as isize,
                    dy.as_ptr(),
                    h as isize,
                    1,
                    F::zero(),
                    dw.as_mut_ptr(),
                    h as isize,
                    1,
                );
            }
            sink.add(w, Tensor::from_vec(vec![d, h], dw).unwrap());

            // dX = dY (m x h) @ w^T (h x d)
            let mut dx = vec![F::zero(); m * d];
            unsafe {
                F::gemm(
                    m,
                    h,
                    d,
                    F::one(),
                    dy.as_ptr(),
                    h as isize,
                    1,
                    w_val.data().as_ptr(),
                    1,
                    h as isize,
                    F::zero(),
                    dx.as_mut_ptr(),
                    d as isize,
                    1,
                );
            }
            sink.add(x, Tensor::from_vec(xs.clone(), dx).unwrap());
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_hand_matmul() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let w = tape.leaf(Tensor::from_vec(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(vec![2], vec![10.0, 20.0]).unwrap());
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[14.0, 25.0, 20.0, 31.0]);
    }

    #[test]
    fn dense_applies_to_rank3_batches() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = tape.leaf(Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = tape.leaf(Tensor::zeros(&[3]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 3]);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn dense_rejects_mismatched_inner_dim() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[2, 3]));
        let w = tape.leaf(Tensor::zeros(&[4, 2]));
        let b = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.dense(x, w, b).is_err());
    }
}
