//! Pooling and nearest-neighbour upsampling along the time axis.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

impl<F: Real> Tape<F> {
    /// Average pool with kernel 2, stride 2: y[t] = (x[2t] + x[2t+1]) / 2.
    ///
    /// Odd input lengths drop the trailing element (floor semantics).
    pub fn avg_pool1d(&mut self, x: Var) -> Result<Var> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 {
            return Err(Error::dim("avg_pool1d", format!("rank {} input", s.len())));
        }
        let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
        if t_n < 2 {
            return Err(Error::DegenerateLength {
                op: "avg_pool1d",
                len: t_n,
                min: 2,
            });
        }
        let t_out = t_n / 2;
        let half = F::from_f64(0.5);
        let src = x_val.data();
        let mut out = vec![F::zero(); b_n * t_out * c_n];
        for b in 0..b_n {
            for t in 0..t_out {
                let i0 = (b * t_n + 2 * t) * c_n;
                let i1 = i0 + c_n;
                let o = (b * t_out + t) * c_n;
                for c in 0..c_n {
                    out[o + c] = (src[i0 + c] + src[i1 + c]) * half;
                }
            }
        }
        let out = Tensor::from_vec(vec![b_n, t_out, c_n], out)?.check_finite("avg_pool1d")?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let mut dx = vec![F::zero(); b_n * t_n * c_n];
            for b in 0..b_n {
                for t in 0..t_out {
                    let o = (b * t_out + t) * c_n;
                    let i0 = (b * t_n + 2 * t) * c_n;
                    for c in 0..c_n {
                        let gv = g[o + c] * half;
                        dx[i0 + c] += gv;
                        dx[i0 + c_n + c] += gv;
                    }
                }
            }
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_n], dx).unwrap());
        }))
    }

    /// Nearest-neighbour upsampling by 2: y[t] = x[floor(t/2)].
    ///
    /// `target_len` must be 2T or 2T+1; the odd case replicates the final
    /// value once more, recovering the exact length of the high branch.
    pub fn upsample1d_nearest(&mut self, x: Var, target_len: usize) -> Result<Var> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 {
            return Err(Error::dim("upsample1d", format!("rank {} input", s.len())));
        }
        let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
        if target_len != 2 * t_n && target_len != 2 * t_n + 1 {
            return Err(Error::dim(
                "upsample1d",
                format!("target {target_len} not in {{{}, {}}}", 2 * t_n, 2 * t_n + 1),
            ));
        }
        let src = x_val.data();
        let mut out = vec![F::zero(); b_n * target_len * c_n];
        for b in 0..b_n {
            for t in 0..target_len {
                let j = (t / 2).min(t_n - 1);
                let i = (b * t_n + j) * c_n;
                let o = (b * target_len + t) * c_n;
                out[o..o + c_n].copy_from_slice(&src[i..i + c_n]);
            }
        }
        let out = Tensor::from_vec(vec![b_n, target_len, c_n], out)?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let mut dx = vec![F::zero(); b_n * t_n * c_n];
            for b in 0..b_n {
                for t in 0..target_len {
                    let j = (t / 2).min(t_n - 1);
                    let i = (b * t_n + j) * c_n;
                    let o = (b * target_len + t) * c_n;
                    for c in 0..c_n {
                        dx[i + c] += g[o + c];
                    }
                }
            }
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_n], dx).unwrap());
        }))
    }

    /// Mean over the time axis: (B,T,C) -> (B,C).
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let x_val = self.value(x).clone();
        let s = x_val.shape();
        if s.len() != 3 {
            return Err(Error::dim("global_avg_pool", format!("rank {}", s.len())));
        }
        let (b_n, t_n, c_n) = (s[0], s[1], s[2]);
        let inv_t = F::from_f64(1.0 / t_n as f64);
        let src = x_val.data();
        let mut out = vec![F::zero(); b_n * c_n];
        for b in 0..b_n {
            for t in 0..t_n {
                let i = (b * t_n + t) * c_n;
                for c in 0..c_n {
                    out[b * c_n + c] += src[i + c];
                }
            }
        }
        for v in &mut out {
            *v *= inv_t;
        }
        let out = Tensor::from_vec(vec![b_n, c_n], out)?.check_finite("global_avg_pool")?;
        Ok(self.push(out, move |grad, sink| {
            let g = grad.data();
            let mut dx = vec![F::zero(); b_n * t_n * c_n];
            for b in 0..b_n {
                for t in 0..t_n {
                    let i = (b * t_n + t) * c_n;
                    for c in 0..c_n {
                        dx[i + c] = g[b * c_n + c] * inv_t;
                    }
                }
            }
            sink.add(x, Tensor::from_vec(vec![b_n, t_n, c_n], dx).unwrap());
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(vals: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(vec![1, vals.len(), 1], vals.to_vec()).unwrap()
    }

    #[test]
    fn pool_takes_pairwise_means() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(series(&[1.0, 3.0, 5.0, 7.0]));
        let y = tape.avg_pool1d(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 6.0]);
    }

    #[test]
    fn pool_drops_trailing_element_of_odd_input() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(series(&[1.0, 3.0, 5.0, 7.0, 9.0]));
        let y = tape.avg_pool1d(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 6.0]);
    }

    #[test]
    fn pool_matches_index_formula_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..2 * 50 * 8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::from_vec(vec![2, 50, 8], data.clone()).unwrap();
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(x);
        let y = tape.avg_pool1d(xv).unwrap();
        let out = tape.value(y).data();
        for b in 0..2 {
            for t in 0..25 {
                for c in 0..8 {
                    let want =
                        (data[(b * 50 + 2 * t) * 8 + c] + data[(b * 50 + 2 * t + 1) * 8 + c]) / 2.0;
                    assert_eq!(out[(b * 25 + t) * 8 + c], want);
                }
            }
        }
    }

    #[test]
    fn pool_rejects_degenerate_length() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(series(&[1.0]));
        assert!(matches!(
            tape.avg_pool1d(x),
            Err(Error::DegenerateLength { len: 1, .. })
        ));
    }

    #[test]
    fn upsample_repeats_nearest() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(series(&[2.0, 6.0]));
        let y4 = tape.upsample1d_nearest(x, 4).unwrap();
        assert_eq!(tape.value(y4).data(), &[2.0, 2.0, 6.0, 6.0]);
        let y5 = tape.upsample1d_nearest(x, 5).unwrap();
        assert_eq!(tape.value(y5).data(), &[2.0, 2.0, 6.0, 6.0, 6.0]);
        assert!(tape.upsample1d_nearest(x, 6).is_err());
        assert!(tape.upsample1d_nearest(x, 3).is_err());
    }

    #[test]
    fn pool_then_upsample_fixes_constant_series() {
        for t_n in [4usize, 5, 9, 16] {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(Tensor::full(&[1, t_n, 3], 2.5));
            let p = tape.avg_pool1d(x).unwrap();
            let u = tape.upsample1d_nearest(p, t_n).unwrap();
            assert_eq!(tape.value(u).data(), tape.value(x).data(), "T={t_n}");
        }
    }

    #[test]
    fn gap_averages_over_time() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1, 3, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]).unwrap());
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 20.0]);
    }
}
