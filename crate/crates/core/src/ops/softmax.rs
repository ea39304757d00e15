//! Softmax and the fused softmax cross-entropy loss.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Log-sum-exp stabilized softmax rows written into `out`.
fn softmax_rows<F: Real>(src: &[F], out: &mut [F], width: usize) {
    for (src_row, out_row) in src.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let max = src_row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let mut sum = F::zero();
        for (o, &v) in out_row.iter_mut().zip(src_row) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        for o in out_row.iter_mut() {
            *o /= sum;
        }
    }
}

impl<F: Real> Tape<F> {
    /// Row-wise softmax over the last axis.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let x_val = self.value(x);
        let shape = x_val.shape().to_vec();
        if shape.is_empty() {
            return Err(Error::dim("softmax", "rank 0 input"));
        }
        let width = *shape.last().unwrap();
        let mut out = vec![F::zero(); x_val.numel()];
        softmax_rows(x_val.data(), &mut out, width);
        let out = Tensor::from_vec(shape, out)?.check_finite("softmax")?;
        let y_saved = out.clone();
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let y = y_saved.data();
            let w = *y_saved.shape().last().unwrap();
            let mut dx = vec![F::zero(); y.len()];
            for base in (0..y.len()).step_by(w) {
                let mut dot = F::zero();
                for i in 0..w {
                    dot += g[base + i] * y[base + i];
                }
                for i in 0..w {
                    dx[base + i] = y[base + i] * (g[base + i] - dot);
                }
            }
            sink.add(x, Tensor::from_vec(y_saved.shape().to_vec(), dx).unwrap());
        }))
    }

    /// Mean over the batch of -log softmax(logits)[label].
    ///
    /// Gradient w.r.t. the logits is (softmax - onehot) / B.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l_val = self.value(logits).clone();
        let s = l_val.shape();
        if s.len() != 2 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits must be (B, K), got {s:?}"),
            ));
        }
        let (b_n, k_n) = (s[0], s[1]);
        if k_n < 2 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("need K >= 2 classes, got {k_n}"),
            ));
        }
        if labels.len() != b_n {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("{} labels for batch of {b_n}", labels.len()),
            ));
        }
        for &y in labels {
            if y >= k_n {
                return Err(Error::LabelRange {
                    label: y,
                    num_classes: k_n,
                });
            }
        }
        let mut probs = vec![F::zero(); b_n * k_n];
        softmax_rows(l_val.data(), &mut probs, k_n);
        let mut loss = F::zero();
        for (b, &y) in labels.iter().enumerate() {
            loss -= probs[b * k_n + y].max(F::from_f64(f64::MIN_POSITIVE)).ln();
        }
        loss /= F::from_f64(b_n as f64);
        let out = Tensor::scalar(loss).check_finite("softmax_cross_entropy")?;

        let labels = labels.to_vec();
        Ok(self.push(out, move |grad, sink| {
            let scale = grad.item() / F::from_f64(b_n as f64);
            let mut dl = probs.clone();
            for (b, &y) in labels.iter().enumerate() {
                dl[b * k_n + y] -= F::one();
            }
            for v in &mut dl {
                *v *= scale;
            }
            sink.add(logits, Tensor::from_vec(vec![b_n, k_n], dl).unwrap());
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[3, 4]));
        let loss = tape.softmax_cross_entropy(logits, &[0, 1, 3]).unwrap();
        assert!((tape.value(loss).item() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn growing_margin_drives_loss_to_zero_monotonically() {
        let mut last = f64::INFINITY;
        for margin in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let mut tape = Tape::<f64>::new();
            let logits = tape.leaf(Tensor::from_vec(vec![1, 2], vec![margin, 0.0]).unwrap());
            let loss = tape.softmax_cross_entropy(logits, &[0]).unwrap();
            let l = tape.value(loss).item();
            assert!(l < last, "loss not decreasing at margin {margin}");
            last = l;
        }
        assert!(last < 1e-13);
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[3]),
            Err(Error::LabelRange { label: 3, num_classes: 3 })
        ));
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_over_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..2 * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::from_vec(vec![2, 3], data.clone()).unwrap());
        let labels = [2usize, 0];
        let loss = tape.softmax_cross_entropy(logits, &labels).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(logits).unwrap();

        let mut probs = vec![0.0; 6];
        softmax_rows(&data, &mut probs, 3);
        for (b, &y) in labels.iter().enumerate() {
            probs[b * 3 + y] -= 1.0;
        }
        for v in &mut probs {
            *v /= 2.0;
        }
        for (a, e) in g.data().iter().zip(&probs) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..5 * 7).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![5, 7], data).unwrap());
        let y = tape.softmax_lastdim(x).unwrap();
        for row in tape.value(y).data().chunks_exact(7) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
