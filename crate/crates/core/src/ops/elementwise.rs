//! Pointwise ops: add, mul, scaling, activations, dropout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

impl<F: Real> Tape<F> {
    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self
            .value(a)
            .add(self.value(b))?
            .check_finite("add")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(a, grad.clone());
            sink.add(b, grad.clone());
        }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let a_val = self.value(a).clone();
        let b_val = self.value(b).clone();
        let out = a_val.zip(&b_val, "mul", |x, y| x * y)?.check_finite("mul")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(a, grad.zip(&b_val, "mul_back", |g, y| g * y).unwrap());
            sink.add(b, grad.zip(&a_val, "mul_back", |g, x| g * x).unwrap());
        }))
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let s = F::from_f64(s);
        let out = self.value(x).scale(s).check_finite("scale")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, grad.scale(s));
        }))
    }

    /// Sum of all elements, producing a scalar node.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let x_shape = self.shape(x).to_vec();
        let out = Tensor::scalar(self.value(x).sum()).check_finite("sum_all")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, Tensor::full(&x_shape, grad.item()));
        }))
    }

    /// max(x, 0), subgradient 0 at the kink.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let x_val = self.value(x).clone();
        let out = x_val
            .map(|v| if v > F::zero() { v } else { F::zero() })
            .check_finite("relu")?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad
                .zip(&x_val, "relu_back", |g, v| {
                    if v > F::zero() {
                        g
                    } else {
                        F::zero()
                    }
                })
                .unwrap();
            sink.add(x, g);
        }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self
            .value(x)
            .map(|v| F::one() / (F::one() + (-v).exp()))
            .check_finite("sigmoid")?;
        let out_val = out.clone();
        Ok(self.push(out, move |grad, sink| {
            let g = grad
                .zip(&out_val, "sigmoid_back", |g, y| g * y * (F::one() - y))
                .unwrap();
            sink.add(x, g);
        }))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh()).check_finite("tanh")?;
        let out_val = out.clone();
        Ok(self.push(out, move |grad, sink| {
            let g = grad
                .zip(&out_val, "tanh_back", |g, y| g * (F::one() - y * y))
                .unwrap();
            sink.add(x, g);
        }))
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales by `1/(1 - rate)`, so inference needs no correction. The mask
    /// is drawn from `rng`, making a fixed seed fully reproducible.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            // identity node keeps graph structure uniform
            return self.scale(x, 1.0);
        }
        let keep = 1.0 - rate;
        let inv_keep = F::from_f64(1.0 / keep);
        let x_val = self.value(x);
        let mask_data: Vec<F> = (0..x_val.numel())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    inv_keep
                } else {
                    F::zero()
                }
            })
            .collect();
        let mask = Tensor::from_vec(x_val.shape().to_vec(), mask_data)?;
        let out = x_val.zip(&mask, "dropout", |v, m| v * m)?.check_finite("dropout")?;
        Ok(self.push(out, move |grad, sink| {
            sink.add(x, grad.zip(&mask, "dropout_back", |g, m| g * m).unwrap());
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn relu_clamps_and_masks_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![4], vec![-1.0, 0.0, 2.0, -3.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0, 0.0]);
        let loss = tape.sum_all(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dropout_trains_with_inverted_scaling() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1000], 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = tape.dropout(x, 0.8, &mut rng).unwrap();
        let vals = tape.value(y).data();
        // every surviving element is exactly 1/keep, everything else 0
        for &v in vals {
            assert!(v == 0.0 || (v - 5.0).abs() < 1e-12);
        }
        let kept = vals.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 120 && kept < 280, "kept {kept} of 1000 at rate 0.8");
    }

    #[test]
    fn dropout_same_seed_same_mask() {
        let build = |seed: u64| {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(Tensor::full(&[64], 1.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = tape.dropout(x, 0.8, &mut rng).unwrap();
            tape.value(y).data().to_vec()
        };
        assert_eq!(build(3), build(3));
        assert_ne!(build(3), build(4));
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(tape.dropout(x, 1.0, &mut rng).is_err());
        assert!(tape.dropout(x, -0.1, &mut rng).is_err());
    }
}
