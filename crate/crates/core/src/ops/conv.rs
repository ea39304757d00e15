//! Same-padding 1D convolution over (B, T, C) tensors.
//!
//! Lowered to a GEMM: an im2col pass gathers K*Cin-wide patches per output
//! position, the kernel tensor (K, Cin, Cout) is already laid out as the
//! matching (K*Cin, Cout) matrix, and `matrixmultiply` does the rest. The
//! backward pass reuses the patch matrix for the weight gradient and
//! scatters the patch gradient back with col2im.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Zero-padding split for `same` output length: total K-1, floor((K-1)/2) left.
#[inline]
pub fn same_padding(kernel: usize) -> (usize, usize) {
    let left = (kernel - 1) / 2;
    (left, kernel - 1 - left)
}

/// patches[(b*T + t), (k*Cin + ci)] = x_padded[b, t + k, ci]
fn im2col<F: Real>(x: &[F], b_n: usize, t_n: usize, c_in: usize, kernel: usize) -> Vec<F> {
    let (left, _) = same_padding(kernel);
    let kc = kernel * c_in;
    let mut patches = vec![F::zero(); b_n * t_n * kc];
    for b in 0..b_n {
        let x_base = b * t_n * c_in;
        let p_base = b * t_n * kc;
        for k in 0..kernel {
            // rows t where the tap t + k - left lands inside [0, T)
            let t_lo = left.saturating_sub(k);
            let t_hi = (t_n + left).saturating_sub(k).min(t_n);
            for t in t_lo..t_hi {
                let src = x_base + (t + k - left) * c_in;
                let dst = p_base + t * kc + k * c_in;
                patches[dst..dst + c_in].copy_from_slice(&x[src..src + c_in]);
            }
        }
    }
    patches
}

/// Transpose of im2col: scatter-add patch gradients back onto the input.
fn col2im<F: Real>(
    d_patches: &[F],
    b_n: usize,
    t_n: usize,
    c_in: usize,
    kernel: usize,
) -> Vec<F> {
    let (left, _) = same_padding(kernel);
    let kc = kernel * c_in;
    let mut dx = vec![F::zero(); b_n * t_n * c_in];
    for b in 0..b_n {
        let x_base = b * t_n * c_in;
        let p_base = b * t_n * kc;
        for k in 0..kernel {
            let t_lo = left.saturating_sub(k);
            let t_hi = (t_n + left).saturating_sub(k).min(t_n);
            for t in t_lo..t_hi {
                let dst = x_base + (t + k - left) * c_in;
                let src = p_base + t * kc + k * c_in;
                for c in 0..c_in {
                    dx[dst + c] += d_patches[src + c];
                }
            }
        }
    }
    dx
}

impl<F: Real> Tape<F> {
    /// y[b,t,co] = sum_{k,ci} w[k,ci,co] * x_pad[b,t+k,ci] + bias[co]
    ///
    /// Output time length equals input time length for every kernel size;
    /// kernels longer than the series are legal (pure padding overlap).
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let x_val = self.value(x).clone();
        let w_val = self.value(w).clone();
        let b_val = self.value(bias).clone();
        let xs = x_val.shape();
        let ws = w_val.shape();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(Error::dim(
                "conv1d",
                format!("x {:?} and w {:?} must be rank 3", xs, ws),
            ));
        }
        let (b_n, t_n, c_in) = (xs[0], xs[1], xs[2]);
        let (kernel, w_cin, c_out) = (ws[0], ws[1], ws[2]);
        if kernel == 0 {
            return Err(Error::dim("conv1d", "kernel size must be >= 1"));
        }
        if w_cin != c_in {
            return Err(Error::dim(
                "conv1d",
                format!("input has {c_in} channels, kernel expects {w_cin}"),
            ));
        }
        if b_val.shape() != [c_out] {
            return Err(Error::dim(
                "conv1d",
                format!("bias shape {:?}, expected [{c_out}]", b_val.shape()),
            ));
        }

        let kc = kernel * c_in;
        let m = b_n * t_n;
        let patches = im2col(x_val.data(), b_n, t_n, c_in, kernel);
        let mut out = vec![F::zero(); m * c_out];
        unsafe {
            F::gemm(
                m,
                kc,
                c_out,
                F::one(),
                patches.as_ptr(),
                kc as isize,
                1,
                w_val.data().as_ptr(),
                c_out as isize,
                1,
                F::zero(),
                out.as_mut_ptr(),
                c_out as isize,
                1,
            );
        }
        for row in out.chunks_exact_mut(c_out) {
            for (o, &b) in row.iter_mut().zip(b_val.data()) {
                *o += b;
            }
        }
        let out = Tensor::from_vec(vec![b_n, t_n, c_out], out)?.check_finite("conv1d")?;

        let patches = std::sync::Arc::new(patches);
        Ok(self.push(out, move |grad, sink| {
            let dy = grad.data();

            let mut db = vec![F::zero(); c_out];
            for row in dy.chunks_exact(c_out) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            sink.add(bias, Tensor::from_vec(vec![c_out], db).unwrap());

            // dW = patches^T (kc x m) @ dY (m x c_out)
            let mut dw = vec![F::zero(); kc * c_out];
            unsafe {
                F::gemm(
                    kc,
                    m,
                    c_out,
                    F::one(),
                    patches.as_ptr(),
                    1,
                    kc as isize,
                    dy.as_ptr(),
                    c_out as isize,
                    1,
                    F::zero(),
                    dw.as_mut_ptr(),
                    c_out as isize,
                    1,
                );
            }
            sink.add(w, Tensor::from_vec(vec![kernel, c_in, c_out], dw).unwrap());

            // dPatches = dY (m x c_out) @ W^T (c_out x kc), then col2im
            let mut d_patches = vec![F::zero(); m * kc];
            unsafe {
                F::gemm(
                    m,
                    c_out,
                    kc,
                    F::one(),
                    dy.as_ptr(),
                    c_out as isize,
                    1,
                    w_val.data().as_ptr(),
                    1,
                    c_out as isize,
                    F::zero(),
                    d_patches.as_mut_ptr(),
                    kc as isize,
                    1,
                );
            }
            let dx = col2im(&d_patches, b_n, t_n, c_in, kernel);
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_in], dx).unwrap());
        }))
    }
}

/// Direct nested-loop convolution with the same contract as
/// [`Tape::conv1d`]. Test oracle: slow, obviously correct, shares no code
/// with the GEMM path.
pub fn conv1d_reference(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: &Tensor<f64>,
) -> Tensor<f64> {
    let (b_n, t_n, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kernel, _, c_out) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let (left, _) = same_padding(kernel);
    let mut out = vec![0.0; b_n * t_n * c_out];
    for b in 0..b_n {
        for t in 0..t_n {
            for co in 0..c_out {
                let mut acc = bias.data()[co];
                for k in 0..kernel {
                    let src = t as isize + k as isize - left as isize;
                    if src < 0 || src >= t_n as isize {
                        continue;
                    }
                    for ci in 0..c_in {
                        acc += w.data()[(k * c_in + ci) * c_out + co]
                            * x.data()[(b * t_n + src as usize) * c_in + ci];
                    }
                }
                out[(b * t_n + t) * c_out + co] = acc;
            }
        }
    }
    Tensor::from_vec(vec![b_n, t_n, c_out], out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 8, 1]));
        let w = tape.leaf(rand_tensor(&mut rng, &[5, 1, 4]));
        let b = tape.leaf(Tensor::zeros(&[4]));
        let y = tape.conv1d(x, w, b).unwrap();
        assert_eq!(tape.shape(y), &[1, 8, 4]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_one_is_a_scalar_affine_map() {
        // w = 2, b = 3; x = [1, 0, -1] -> [5, 3, 1]
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1, 3, 1], vec![1.0, 0.0, -1.0]).unwrap());
        let w = tape.leaf(Tensor::from_vec(vec![1, 1, 1], vec![2.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(vec![1], vec![3.0]).unwrap());
        let y = tape.conv1d(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0, 3.0, 1.0]);
    }

    #[test]
    fn matches_reference_on_random_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, &[2, 16, 3]);
        let w = rand_tensor(&mut rng, &[5, 3, 4]);
        let b = rand_tensor(&mut rng, &[4]);
        let expect = conv1d_reference(&x, &w, &b);
        let mut tape = Tape::<f64>::new();
        let (xv, wv, bv) = (tape.leaf(x), tape.leaf(w), tape.leaf(b));
        let y = tape.conv1d(xv, wv, bv).unwrap();
        assert!(tape.value(y).max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn same_padding_preserves_length_even_for_huge_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kernel in 1..=9 {
            for t_n in 1..=32 {
                let x = rand_tensor(&mut rng, &[1, t_n, 2]);
                let w = rand_tensor(&mut rng, &[kernel, 2, 3]);
                let b = rand_tensor(&mut rng, &[3]);
                let mut tape = Tape::<f64>::new();
                let (xv, wv, bv) = (tape.leaf(x), tape.leaf(w), tape.leaf(b));
                let y = tape.conv1d(xv, wv, bv).unwrap();
                assert_eq!(tape.shape(y), &[1, t_n, 3], "K={kernel} T={t_n}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 4, 2]));
        let w = tape.leaf(Tensor::zeros(&[3, 3, 4]));
        let b = tape.leaf(Tensor::zeros(&[4]));
        assert!(matches!(
            tape.conv1d(x, w, b),
            Err(Error::Dim { op: "conv1d", .. })
        ));
    }
}
