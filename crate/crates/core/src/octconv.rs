//! 1D octave convolution blocks.
//!
//! An octave layer carries a pair of feature maps: a high-frequency branch
//! at full time resolution and a low-frequency branch at half resolution
//! (floor semantics). Three block kinds move data in and out of the pair:
//!
//! * initial: plain tensor -> pair. High branch convolves the input
//!   directly; low branch average-pools first.
//! * intermediate: pair -> pair via four kernel paths. high' = H->H + up(L->H),
//!   low' = pool-then-conv(H->L) + L->L.
//! * final: pair -> plain tensor. Both branches convolve to the full filter
//!   budget, the low result is upsampled, and the two are added.
//!
//! The filter budget of a layer is split by the ratio `alpha`: the initial
//! layer gives round(alpha*f) filters to the high branch, intermediate
//! layers give round(alpha*f) to the low paths and the rest to the high
//! paths. With alpha of 0 or 1 a layer degenerates to a plain convolution
//! and the pair collapses to a single tensor.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Real;

/// Hyperparameters of one octave layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub alpha: f64,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

impl OctLayerSpec {
    pub fn new(filters: usize, kernel: usize, alpha: f64) -> Result<Self> {
        if filters == 0 || kernel == 0 {
            return Err(Error::Config(format!(
                "octave layer needs filters >= 1 and kernel >= 1, got f={filters} k={kernel}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(OctLayerSpec {
            filters,
            kernel,
            alpha,
        })
    }

    /// True when the layer collapses to a plain convolution.
    pub fn is_degenerate(&self) -> bool {
        self.alpha == 0.0 || self.alpha == 1.0
    }

    /// (high, low) output channels of an initial layer: high gets
    /// round(alpha * f), low the remainder.
    pub fn initial_split(&self) -> Result<(usize, usize)> {
        let high = round_half_up(self.alpha * self.filters as f64);
        let low = self.filters - high;
        self.check_split(high, low)
    }

    /// (high, low) output channels of an intermediate or final-input layer:
    /// the low paths get round(alpha * f), the high paths the remainder.
    pub fn intermediate_split(&self) -> Result<(usize, usize)> {
        let low = round_half_up(self.alpha * self.filters as f64);
        let high = self.filters - low;
        self.check_split(high, low)
    }

    fn check_split(&self, high: usize, low: usize) -> Result<(usize, usize)> {
        if !self.is_degenerate() && (high == 0 || low == 0) {
            return Err(Error::Config(format!(
                "alpha {} with {} filters yields an empty branch (high {high}, low {low})",
                self.alpha, self.filters
            )));
        }
        Ok((high, low))
    }
}

/// Feature map flowing between octave blocks: a high/low pair, or a plain
/// tensor when the layer stack is degenerate.
#[derive(Debug, Clone, Copy)]
pub enum OctFeat {
    Plain(Var),
    Pair { high: Var, low: Var },
}

impl OctFeat {
    pub fn expect_plain(&self) -> Result<Var> {
        match self {
            OctFeat::Plain(v) => Ok(*v),
            OctFeat::Pair { .. } => Err(Error::dim("octconv", "expected plain tensor")),
        }
    }
}

/// One convolution path: kernel (K, Cin, Cout) and bias (Cout) tape leaves.
#[derive(Debug, Clone, Copy)]
pub struct OctPath {
    pub w: Var,
    pub b: Var,
}

/// Weights of an initial block.
#[derive(Debug, Clone, Copy)]
pub enum OctInitialWeights {
    Plain(OctPath),
    Split { high: OctPath, low: OctPath },
}

/// Weights of an intermediate block, one path per frequency transition.
#[derive(Debug, Clone, Copy)]
pub enum OctIntermediateWeights {
    Plain(OctPath),
    Split {
        hh: OctPath,
        lh: OctPath,
        hl: OctPath,
        ll: OctPath,
    },
}

/// Weights of a final (merging) block.
#[derive(Debug, Clone, Copy)]
pub enum OctFinalWeights {
    Plain(OctPath),
    Split { high: OctPath, low: OctPath },
}

/// Initial block: split a plain tensor into a frequency pair.
pub fn oct_initial<F: Real>(
    tape: &mut Tape<F>,
    x: Var,
    weights: &OctInitialWeights,
) -> Result<OctFeat> {
    match weights {
        OctInitialWeights::Plain(p) => Ok(OctFeat::Plain(tape.conv1d(x, p.w, p.b)?)),
        OctInitialWeights::Split { high, low } => {
            let h = tape.conv1d(x, high.w, high.b)?;
            let pooled = tape.avg_pool1d(x)?;
            let l = tape.conv1d(pooled, low.w, low.b)?;
            Ok(OctFeat::Pair { high: h, low: l })
        }
    }
}

/// Intermediate block: four-path update of a frequency pair.
pub fn oct_intermediate<F: Real>(
    tape: &mut Tape<F>,
    input: &OctFeat,
    weights: &OctIntermediateWeights,
) -> Result<OctFeat> {
    match (input, weights) {
        (OctFeat::Plain(x), OctIntermediateWeights::Plain(p)) => {
            Ok(OctFeat::Plain(tape.conv1d(*x, p.w, p.b)?))
        }
        (OctFeat::Pair { high, low }, OctIntermediateWeights::Split { hh, lh, hl, ll }) => {
            let t_high = tape.shape(*high)[1];

            let high_intra = tape.conv1d(*high, hh.w, hh.b)?;
            let low_to_high = tape.conv1d(*low, lh.w, lh.b)?;
            let low_to_high = tape.upsample1d_nearest(low_to_high, t_high)?;
            let new_high = tape.add(high_intra, low_to_high)?;

            let pooled_high = tape.avg_pool1d(*high)?;
            let high_to_low = tape.conv1d(pooled_high, hl.w, hl.b)?;
            let low_intra = tape.conv1d(*low, ll.w, ll.b)?;
            let new_low = tape.add(high_to_low, low_intra)?;

            Ok(OctFeat::Pair {
                high: new_high,
                low: new_low,
            })
        }
        _ => Err(Error::dim(
            "oct_intermediate",
            "feature kind does not match weight kind",
        )),
    }
}

/// Final block: merge the pair back into a single tensor.
pub fn oct_final<F: Real>(
    tape: &mut Tape<F>,
    input: &OctFeat,
    weights: &OctFinalWeights,
) -> Result<Var> {
    match (input, weights) {
        (OctFeat::Plain(x), OctFinalWeights::Plain(p)) => tape.conv1d(*x, p.w, p.b),
        (OctFeat::Pair { high, low }, OctFinalWeights::Split { high: hw, low: lw }) => {
            let t_high = tape.shape(*high)[1];
            let from_high = tape.conv1d(*high, hw.w, hw.b)?;
            let from_low = tape.conv1d(*low, lw.w, lw.b)?;
            let from_low = tape.upsample1d_nearest(from_low, t_high)?;
            tape.add(from_high, from_low)
        }
        _ => Err(Error::dim(
            "oct_final",
            "feature kind does not match weight kind",
        )),
    }
}

/// Input channel layout feeding an octave block.
#[derive(Debug, Clone, Copy)]
pub enum OctInChannels {
    Plain(usize),
    Pair { high: usize, low: usize },
}

/// Block kind, for parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctBlockKind {
    Initial,
    Intermediate,
    Final,
}

fn conv_params(kernel: usize, cin: usize, cout: usize) -> usize {
    kernel * cin * cout + cout
}

/// Exact trainable parameter count of one octave block (kernels + biases,
/// summed over its paths).
pub fn oct_param_count(
    kind: OctBlockKind,
    spec: &OctLayerSpec,
    input: OctInChannels,
) -> Result<usize> {
    let k = spec.kernel;
    let f = spec.filters;
    match (kind, input) {
        (OctBlockKind::Initial, OctInChannels::Plain(cin)) => {
            if spec.is_degenerate() {
                return Ok(conv_params(k, cin, f));
            }
            let (c_h, c_l) = spec.initial_split()?;
            Ok(conv_params(k, cin, c_h) + conv_params(k, cin, c_l))
        }
        (OctBlockKind::Intermediate, OctInChannels::Plain(cin)) => {
            if !spec.is_degenerate() {
                return Err(Error::Config(
                    "intermediate block with plain input requires degenerate alpha".into(),
                ));
            }
            Ok(conv_params(k, cin, f))
        }
        (OctBlockKind::Intermediate, OctInChannels::Pair { high, low }) => {
            let (c_h, c_l) = spec.intermediate_split()?;
            Ok(conv_params(k, high, c_h)
                + conv_params(k, low, c_h)
                + conv_params(k, high, c_l)
                + conv_params(k, low, c_l))
        }
        (OctBlockKind::Final, OctInChannels::Plain(cin)) => Ok(conv_params(k, cin, f)),
        (OctBlockKind::Final, OctInChannels::Pair { high, low }) => {
            Ok(conv_params(k, high, f) + conv_params(k, low, f))
        }
        (OctBlockKind::Initial, OctInChannels::Pair { .. }) => Err(Error::Config(
            "initial block cannot take a frequency pair".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape.to_vec(), data).unwrap()
    }

    fn rand_path(
        tape: &mut Tape<f64>,
        rng: &mut ChaCha8Rng,
        k: usize,
        cin: usize,
        cout: usize,
    ) -> OctPath {
        OctPath {
            w: tape.leaf(rand_tensor(rng, &[k, cin, cout])),
            b: tape.leaf(rand_tensor(rng, &[cout])),
        }
    }

    fn zero_path(tape: &mut Tape<f64>, k: usize, cin: usize, cout: usize) -> OctPath {
        OctPath {
            w: tape.leaf(Tensor::zeros(&[k, cin, cout])),
            b: tape.leaf(Tensor::zeros(&[cout])),
        }
    }

    #[test]
    fn initial_split_shapes_follow_alpha_and_floor() {
        let spec = OctLayerSpec::new(128, 8, 0.5).unwrap();
        assert_eq!(spec.initial_split().unwrap(), (64, 64));

        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for (b_n, t_n) in [(2usize, 100usize), (1, 101)] {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(rand_tensor(&mut rng, &[b_n, t_n, 1]));
            let high = rand_path(&mut tape, &mut rng, 8, 1, 64);
            let low = rand_path(&mut tape, &mut rng, 8, 1, 64);
            let out = oct_initial(&mut tape, x, &OctInitialWeights::Split { high, low }).unwrap();
            let OctFeat::Pair { high, low } = out else {
                panic!("expected pair")
            };
            assert_eq!(tape.shape(high), &[b_n, t_n, 64]);
            assert_eq!(tape.shape(low), &[b_n, t_n / 2, 64]);
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[2, 16, 1]));
        let high = OctPath {
            w: tape.leaf(rand_tensor(&mut rng, &[4, 1, 3])),
            b: tape.leaf(Tensor::zeros(&[3])),
        };
        let low = OctPath {
            w: tape.leaf(rand_tensor(&mut rng, &[4, 1, 3])),
            b: tape.leaf(Tensor::zeros(&[3])),
        };
        let out = oct_initial(&mut tape, x, &OctInitialWeights::Split { high, low }).unwrap();
        let OctFeat::Pair { high, low } = out else {
            panic!()
        };
        assert!(tape.value(high).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(low).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn intermediate_shapes_are_forced_by_the_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut tape = Tape::<f64>::new();
        let high_in = tape.leaf(rand_tensor(&mut rng, &[2, 100, 64]));
        let low_in = tape.leaf(rand_tensor(&mut rng, &[2, 50, 64]));
        let spec = OctLayerSpec::new(256, 5, 0.5).unwrap();
        let (c_h, c_l) = spec.intermediate_split().unwrap();
        assert_eq!((c_h, c_l), (128, 128));
        let weights = OctIntermediateWeights::Split {
            hh: rand_path(&mut tape, &mut rng, 5, 64, c_h),
            lh: rand_path(&mut tape, &mut rng, 5, 64, c_h),
            hl: rand_path(&mut tape, &mut rng, 5, 64, c_l),
            ll: rand_path(&mut tape, &mut rng, 5, 64, c_l),
        };
        let input = OctFeat::Pair {
            high: high_in,
            low: low_in,
        };
        let out = oct_intermediate(&mut tape, &input, &weights).unwrap();
        let OctFeat::Pair { high, low } = out else {
            panic!()
        };
        assert_eq!(tape.shape(high), &[2, 100, 128]);
        assert_eq!(tape.shape(low), &[2, 50, 128]);
    }

    /// Each of the four paths matches a hand-composed oracle built from the
    /// reference convolution plus direct pool/upsample index formulas.
    #[test]
    fn intermediate_paths_match_brute_force_composition() {
        use crate::ops::conv::conv1d_reference;

        fn pool_oracle(x: &Tensor<f64>) -> Tensor<f64> {
            let (b_n, t_n, c_n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let t_out = t_n / 2;
            let mut out = vec![0.0; b_n * t_out * c_n];
            for b in 0..b_n {
                for t in 0..t_out {
                    for c in 0..c_n {
                        out[(b * t_out + t) * c_n + c] = (x.data()[(b * t_n + 2 * t) * c_n + c]
                            + x.data()[(b * t_n + 2 * t + 1) * c_n + c])
                            / 2.0;
                    }
                }
            }
            Tensor::from_vec(vec![b_n, t_out, c_n], out).unwrap()
        }

        fn up_oracle(x: &Tensor<f64>, target: usize) -> Tensor<f64> {
            let (b_n, t_n, c_n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut out = vec![0.0; b_n * target * c_n];
            for b in 0..b_n {
                for t in 0..target {
                    let j = (t / 2).min(t_n - 1);
                    for c in 0..c_n {
                        out[(b * target + t) * c_n + c] = x.data()[(b * t_n + j) * c_n + c];
                    }
                }
            }
            Tensor::from_vec(vec![b_n, target, c_n], out).unwrap()
        }

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &t_n in &[12usize, 13] {
            let h_t = rand_tensor(&mut rng, &[2, t_n, 3]);
            let l_t = rand_tensor(&mut rng, &[2, t_n / 2, 2]);
            let k = 5;
            let (c_h, c_l) = (4, 3);

            let mut tape = Tape::<f64>::new();
            let high_in = tape.leaf(h_t.clone());
            let low_in = tape.leaf(l_t.clone());
            let hh = rand_path(&mut tape, &mut rng, k, 3, c_h);
            let lh = rand_path(&mut tape, &mut rng, k, 2, c_h);
            let hl = rand_path(&mut tape, &mut rng, k, 3, c_l);
            let ll = rand_path(&mut tape, &mut rng, k, 2, c_l);
            let weights = OctIntermediateWeights::Split { hh, lh, hl, ll };
            let input = OctFeat::Pair {
                high: high_in,
                low: low_in,
            };
            let out = oct_intermediate(&mut tape, &input, &weights).unwrap();
            let OctFeat::Pair { high, low } = out else {
                panic!()
            };

            let path = |p: &OctPath, tape: &Tape<f64>| {
                (tape.value(p.w).clone(), tape.value(p.b).clone())
            };
            let (hh_w, hh_b) = path(&hh, &tape);
            let (lh_w, lh_b) = path(&lh, &tape);
            let (hl_w, hl_b) = path(&hl, &tape);
            let (ll_w, ll_b) = path(&ll, &tape);

            let want_high = conv1d_reference(&h_t, &hh_w, &hh_b)
                .add(&up_oracle(&conv1d_reference(&l_t, &lh_w, &lh_b), t_n))
                .unwrap();
            let want_low = conv1d_reference(&pool_oracle(&h_t), &hl_w, &hl_b)
                .add(&conv1d_reference(&l_t, &ll_w, &ll_b))
                .unwrap();

            assert!(tape.value(high).max_abs_diff(&want_high) < 1e-12, "T={t_n}");
            assert!(tape.value(low).max_abs_diff(&want_low) < 1e-12, "T={t_n}");
        }
    }

    #[test]
    fn final_merges_to_full_filter_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut tape = Tape::<f64>::new();
        let high = tape.leaf(rand_tensor(&mut rng, &[2, 100, 128]));
        let low = tape.leaf(rand_tensor(&mut rng, &[2, 50, 128]));
        let weights = OctFinalWeights::Split {
            high: rand_path(&mut tape, &mut rng, 3, 128, 128),
            low: rand_path(&mut tape, &mut rng, 3, 128, 128),
        };
        let out = oct_final(&mut tape, &OctFeat::Pair { high, low }, &weights).unwrap();
        assert_eq!(tape.shape(out), &[2, 100, 128]);
    }

    #[test]
    fn blocks_are_linear_in_the_input_with_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x1 = rand_tensor(&mut rng, &[1, 10, 2]);
        let x2 = rand_tensor(&mut rng, &[1, 10, 2]);
        let (a, b) = (0.7, -1.3);
        let combo = x1.scale(a).add(&x2.scale(b)).unwrap();

        let run = |x: &Tensor<f64>, rng_seed: u64| -> (Vec<f64>, Vec<f64>) {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut tape = Tape::<f64>::new();
            let xv = tape.leaf(x.clone());
            let high = OctPath {
                w: tape.leaf(rand_tensor(&mut rng, &[3, 2, 4])),
                b: tape.leaf(Tensor::zeros(&[4])),
            };
            let low = OctPath {
                w: tape.leaf(rand_tensor(&mut rng, &[3, 2, 4])),
                b: tape.leaf(Tensor::zeros(&[4])),
            };
            let out = oct_initial(&mut tape, xv, &OctInitialWeights::Split { high, low }).unwrap();
            let OctFeat::Pair { high, low } = out else {
                panic!()
            };
            (
                tape.value(high).data().to_vec(),
                tape.value(low).data().to_vec(),
            )
        };

        let (h1, l1) = run(&x1, 99);
        let (h2, l2) = run(&x2, 99);
        let (hc, lc) = run(&combo, 99);
        for i in 0..hc.len() {
            assert!((hc[i] - (a * h1[i] + b * h2[i])).abs() < 5e-12);
        }
        for i in 0..lc.len() {
            assert!((lc[i] - (a * l1[i] + b * l2[i])).abs() < 5e-12);
        }
    }

    /// Zeroing the L->H kernel makes the high output independent of the low
    /// input, bit for bit.
    #[test]
    fn zeroed_cross_path_isolates_the_high_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let h_t = rand_tensor(&mut rng, &[1, 8, 2]);
        let l_a = rand_tensor(&mut rng, &[1, 4, 2]);
        let l_b = rand_tensor(&mut rng, &[1, 4, 2]);

        let run = |low_t: &Tensor<f64>| -> Vec<f64> {
            let mut wrng = ChaCha8Rng::seed_from_u64(77);
            let mut tape = Tape::<f64>::new();
            let high_in = tape.leaf(h_t.clone());
            let low_in = tape.leaf(low_t.clone());
            let hh = rand_path(&mut tape, &mut wrng, 3, 2, 3);
            let lh = zero_path(&mut tape, 3, 2, 3);
            let hl = rand_path(&mut tape, &mut wrng, 3, 2, 2);
            let ll = rand_path(&mut tape, &mut wrng, 3, 2, 2);
            let out = oct_intermediate(
                &mut tape,
                &OctFeat::Pair {
                    high: high_in,
                    low: low_in,
                },
                &OctIntermediateWeights::Split { hh, lh, hl, ll },
            )
            .unwrap();
            let OctFeat::Pair { high, .. } = out else {
                panic!()
            };
            tape.value(high).data().to_vec()
        };

        let out_a = run(&l_a);
        let out_b = run(&l_b);
        assert!(out_a
            .iter()
            .zip(&out_b)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_law_holds_across_a_block_stack() {
        // high stays T, low stays floor(T/2), for every T in 2..=257
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for t_n in 2..=257usize {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(rand_tensor(&mut rng, &[1, t_n, 1]));
            let init = OctInitialWeights::Split {
                high: rand_path(&mut tape, &mut rng, 3, 1, 2),
                low: rand_path(&mut tape, &mut rng, 3, 1, 2),
            };
            let inter = OctIntermediateWeights::Split {
                hh: rand_path(&mut tape, &mut rng, 3, 2, 2),
                lh: rand_path(&mut tape, &mut rng, 3, 2, 2),
                hl: rand_path(&mut tape, &mut rng, 3, 2, 2),
                ll: rand_path(&mut tape, &mut rng, 3, 2, 2),
            };
            let fin = OctFinalWeights::Split {
                high: rand_path(&mut tape, &mut rng, 3, 2, 2),
                low: rand_path(&mut tape, &mut rng, 3, 2, 2),
            };
            let p1 = oct_initial(&mut tape, x, &init).unwrap();
            let OctFeat::Pair { high, low } = p1 else {
                panic!()
            };
            assert_eq!(tape.shape(high)[1], t_n);
            assert_eq!(tape.shape(low)[1], t_n / 2);
            let p2 = oct_intermediate(&mut tape, &p1, &inter).unwrap();
            let OctFeat::Pair { high, low } = p2 else {
                panic!()
            };
            assert_eq!(tape.shape(high)[1], t_n);
            assert_eq!(tape.shape(low)[1], t_n / 2);
            let out = oct_final(&mut tape, &p2, &fin).unwrap();
            assert_eq!(tape.shape(out), &[1, t_n, 2]);
        }
    }

    #[test]
    fn param_counts_match_per_path_formulas() {
        let init = OctLayerSpec::new(128, 8, 0.5).unwrap();
        assert_eq!(
            oct_param_count(OctBlockKind::Initial, &init, OctInChannels::Plain(1)).unwrap(),
            1152
        );

        let inter = OctLayerSpec::new(256, 5, 0.5).unwrap();
        assert_eq!(
            oct_param_count(
                OctBlockKind::Intermediate,
                &inter,
                OctInChannels::Pair { high: 64, low: 64 }
            )
            .unwrap(),
            164352
        );

        for alpha in [0.0, 1.0] {
            let spec = OctLayerSpec::new(128, 8, alpha).unwrap();
            assert_eq!(
                oct_param_count(OctBlockKind::Initial, &spec, OctInChannels::Plain(1)).unwrap(),
                8 * 128 + 128
            );
        }
    }

    #[test]
    fn lopsided_alpha_with_tiny_budget_is_rejected() {
        let spec = OctLayerSpec::new(128, 8, 0.001).unwrap();
        assert!(spec.initial_split().is_err());
        let spec = OctLayerSpec::new(4, 3, 0.9).unwrap();
        // round(3.6) = 4 -> low branch would be empty
        assert!(spec.initial_split().is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        let spec = OctLayerSpec::new(5, 3, 0.5).unwrap();
        assert_eq!(spec.initial_split().unwrap(), (3, 2)); // round(2.5) = 3 to high
        assert_eq!(spec.intermediate_split().unwrap(), (2, 3)); // round(2.5) = 3 to low
    }
}
