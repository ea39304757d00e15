//! Batch normalization over (B, T, C): per-channel statistics pooled over
//! the batch and time axes.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Per-channel batch mean and (population) variance of a (B,T,C) tensor.
pub fn channel_stats<F: Real>(x: &Tensor<F>) -> (Vec<F>, Vec<F>) {
    let s = x.shape();
    let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
    let count = F::from_f64((b_n * t_n) as f64);
    let mut mean = vec![F::zero(); c_n];
    for row in x.data().chunks_exact(c_n) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut var = vec![F::zero(); c_n];
    for row in x.data().chunks_exact(c_n) {
        for c in 0..c_n {
            let d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v /= count;
    }
    (mean, var)
}

impl<F: Real> Tape<F> {
    /// Training-mode batch norm. Normalizes with batch statistics and
    /// returns them so the caller can fold them into its running averages.
    ///
    /// Zero variance is never an error: `eps` keeps the denominator alive.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<F>, Vec<F>)> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 {
            return Err(Error::dim("batch_norm", format!("rank {}", s.len())));
        }
        let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
        let g_val = self.value(gamma).clone();
        let be_val = self.value(beta).clone();
        if g_val.shape() != [c_n] || be_val.shape() != [c_n] {
            return Err(Error::dim(
                "batch_norm",
                format!("gamma/beta must be [{c_n}]"),
            ));
        }
        let (mean, var) = channel_stats(&x_val);
        let epsf = F::from_f64(eps);
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + epsf).sqrt()).collect();

        let n_rows = b_n * t_n;
        let mut x_hat = vec![F::zero(); n_rows * c_n];
        let mut out = vec![F::zero(); n_rows * c_n];
        for (r, row) in x_val.data().chunks_exact(c_n).enumerate() {
            for c in 0..c_n {
                let xh = (row[c] - mean[c]) * inv_std[c];
                x_hat[r * c_n + c] = xh;
                out[r * c_n + c] = g_val.data()[c] * xh + be_val.data()[c];
            }
        }
        let out = Tensor::from_vec(s.to_vec(), out)?.check_finite("batch_norm")?;
        let x_hat = Tensor::from_vec(s.to_vec(), x_hat)?;

        let mean_out = mean;
        let var_out = var;
        let inv_std_saved = inv_std;
        let out_var = self.push(out, move |grad, sink| {
            let n = F::from_f64(n_rows as f64);
            let g = grad.data();
            let xh = x_hat.data();

            let mut d_gamma = vec![F::zero(); c_n];
            let mut d_beta = vec![F::zero(); c_n];
            for r in 0..n_rows {
                for c in 0..c_n {
                    d_gamma[c] += g[r * c_n + c] * xh[r * c_n + c];
                    d_beta[c] += g[r * c_n + c];
                }
            }

            // dx = gamma * inv_std * (g - mean(g) - x_hat * mean(g * x_hat))
            let mut dx = vec![F::zero(); n_rows * c_n];
            for r in 0..n_rows {
                for c in 0..c_n {
                    let centered = g[r * c_n + c] - d_beta[c] / n - xh[r * c_n + c] * d_gamma[c] / n;
                    dx[r * c_n + c] = g_val.data()[c] * inv_std_saved[c] * centered;
                }
            }
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_n], dx).unwrap());
            sink.add(gamma, Tensor::from_vec(vec![c_n], d_gamma).unwrap());
            sink.add(beta, Tensor::from_vec(vec![c_n], d_beta).unwrap());
        });
        Ok((out_var, mean_out, var_out))
    }

    /// Inference-mode batch norm: a fixed per-channel affine map using the
    /// running statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<F>,
        running_var: &Tensor<F>,
        eps: f64,
    ) -> Result<Var> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 {
            return Err(Error::dim("batch_norm", format!("rank {}", s.len())));
        }
        let c_n = s[2];
        let g_val = self.value(gamma).clone();
        let be_val = self.value(beta).clone();
        if g_val.shape() != [c_n] || be_val.shape() != [c_n] {
            return Err(Error::dim(
                "batch_norm",
                format!("gamma/beta must be [{c_n}]"),
            ));
        }
        let epsf = F::from_f64(eps);
        let inv_std: Vec<F> = running_var
            .data()
            .iter()
            .map(|&v| F::one() / (v + epsf).sqrt())
            .collect();
        let mean = running_mean.data().to_vec();

        let mut out = vec![F::zero(); x_val.numel()];
        for (r, row) in x_val.data().chunks_exact(c_n).enumerate() {
            for c in 0..c_n {
                out[r * c_n + c] = g_val.data()[c] * (row[c] - mean[c]) * inv_std[c] + be_val.data()[c];
            }
        }
        let out = Tensor::from_vec(s.to_vec(), out)?.check_finite("batch_norm")?;

        let x_saved = x_val;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let n_rows = x_saved.numel() / c_n;
            let mut d_gamma = vec![F::zero(); c_n];
            let mut d_beta = vec![F::zero(); c_n];
            let mut dx = vec![F::zero(); x_saved.numel()];
            for r in 0..n_rows {
                for c in 0..c_n {
                    let xh = (x_saved.data()[r * c_n + c] - mean[c]) * inv_std[c];
                    d_gamma[c] += g[r * c_n + c] * xh;
                    d_beta[c] += g[r * c_n + c];
                    dx[r * c_n + c] = g[r * c_n + c] * g_val.data()[c] * inv_std[c];
                }
            }
            sink.add(x, Tensor::from_vec(x_saved.shape().to_vec(), dx).unwrap());
            sink.add(gamma, Tensor::from_vec(vec![c_n], d_gamma).unwrap());
            sink.add(beta, Tensor::from_vec(vec![c_n], d_beta).unwrap());
        }))
    }
}
