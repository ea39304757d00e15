//! Central finite-difference verification of every differentiable layer
//! family. Each check builds a scalar loss from leaf inputs, takes the
//! tape gradient, then perturbs every input element by +-h and compares.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::octconv::{
    oct_final, oct_initial, oct_intermediate, OctFeat, OctFinalWeights, OctInitialWeights,
    OctIntermediateWeights, OctPath,
};
use crate::ops::recurrent::{attention_context, lstm_forward, AttentionVars, LstmVars};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Step size of the central differences.
pub const FD_H: f64 = 1e-5;
/// Maximum allowed relative error.
pub const FD_TOL: f64 = 1e-4;

/// Outcome of one layer family's check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub shapes_tested: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

type LossBuilder = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// Compare tape gradients against central differences for one case.
/// Returns the largest elementwise relative error over all inputs.
pub fn check_case(inputs: &[Tensor<f64>], builder: &LossBuilder) -> Result<f64> {
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = builder(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    // analytic gradients
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = builder(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut max_rel = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input.shape());
        for e in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut t = plus[i].clone();
            t.make_mut()[e] += FD_H;
            plus[i] = t;
            let mut minus = inputs.to_vec();
            let mut t = minus[i].clone();
            t.make_mut()[e] -= FD_H;
            minus[i] = t;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_H);
            let ad = analytic.data()[e];
            let rel = (ad - fd).abs() / (ad.abs().max(fd.abs()) + 1e-4);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Values bounded away from zero, for kinked ops like relu.
fn rand_tensor_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * rng.random_range(0.05..1.0)
        })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Project a tensor node to a scalar with fixed random weights, so every
/// output element influences the loss.
fn project(tape: &mut Tape<f64>, out: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let r = rand_tensor(rng, tape.shape(out));
    let rv = tape.leaf(r);
    let prod = tape.mul(out, rv)?;
    tape.sum_all(prod)
}

fn report(op: &str, cases: Vec<f64>) -> GradCheckReport {
    let max_rel_err = cases.iter().cloned().fold(0.0, f64::max);
    GradCheckReport {
        op: op.to_string(),
        shapes_tested: cases.len(),
        max_rel_err,
        tolerance: FD_TOL,
        passed: max_rel_err < FD_TOL,
    }
}

fn check_conv1d() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut cases = Vec::new();
    for (b, t, cin, cout, k) in [(1, 6, 1, 2, 3), (2, 5, 2, 3, 5), (1, 4, 3, 1, 1), (2, 7, 1, 2, 8), (1, 3, 2, 2, 4)] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, cin]),
            rand_tensor(&mut rng, &[k, cin, cout]),
            rand_tensor(&mut rng, &[cout]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let y = tape.conv1d(vars[0], vars[1], vars[2])?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("conv1d", cases))
}

fn check_avg_pool() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut cases = Vec::new();
    for (b, t, c) in [(1, 4, 1), (2, 6, 2), (1, 7, 3), (2, 9, 1), (1, 12, 2)] {
        let inputs = vec![rand_tensor(&mut rng, &[b, t, c])];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let y = tape.avg_pool1d(vars[0])?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("avg_pool1d", cases))
}

fn check_upsample() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut cases = Vec::new();
    for (b, t, c, odd) in [(1, 2, 1, false), (2, 3, 2, true), (1, 4, 3, false), (2, 5, 1, true), (1, 6, 2, false)] {
        let inputs = vec![rand_tensor(&mut rng, &[b, t, c])];
        let target = if odd { 2 * t + 1 } else { 2 * t };
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let y = tape.upsample1d_nearest(vars[0], target)?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("upsample1d_nearest", cases))
}

fn check_batch_norm() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut cases = Vec::new();
    for (b, t, c) in [(2, 3, 1), (2, 4, 2), (3, 2, 3), (1, 8, 2), (2, 6, 4)] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, c]),
            rand_tensor(&mut rng, &[c]),
            rand_tensor(&mut rng, &[c]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let (y, _, _) = tape.batch_norm_train(vars[0], vars[1], vars[2], 1e-3)?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("batch_norm", cases))
}

fn check_dense() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut cases = Vec::new();
    for (shape, d, h) in [
        (vec![2usize, 3usize], 3usize, 2usize),
        (vec![4, 2], 2, 5),
        (vec![1, 6], 6, 1),
        (vec![2, 3, 4], 4, 2),
        (vec![3, 2, 2], 2, 3),
    ] {
        let inputs = vec![
            rand_tensor(&mut rng, &shape),
            rand_tensor(&mut rng, &[d, h]),
            rand_tensor(&mut rng, &[h]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let y = tape.dense(vars[0], vars[1], vars[2])?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("dense", cases))
}

fn check_lstm() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut cases = Vec::new();
    for (b, t, c, h) in [(1usize, 1usize, 2usize, 2usize), (2, 3, 2, 2), (1, 4, 3, 2), (2, 2, 1, 3), (1, 5, 2, 1)] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, c]),
            rand_tensor(&mut rng, &[c, 4 * h]),
            rand_tensor(&mut rng, &[h, 4 * h]),
            rand_tensor(&mut rng, &[4 * h]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let out = lstm_forward(
                tape,
                vars[0],
                &LstmVars {
                    kernel: vars[1],
                    recurrent: vars[2],
                    bias: vars[3],
                    units: h,
                },
            )?;
            let mut prng = ChaCha8Rng::seed_from_u64(proj_seed);
            let p1 = project(tape, out.last, &mut prng)?;
            let p2 = project(tape, out.sequence, &mut prng)?;
            tape.add(p1, p2)
        })?);
    }
    Ok(report("lstm", cases))
}

fn check_attention() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut cases = Vec::new();
    for (b, t, h) in [(1, 1, 2), (2, 3, 2), (1, 4, 3), (2, 2, 4), (1, 6, 2)] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, h]),
            rand_tensor(&mut rng, &[h, h]),
            rand_tensor(&mut rng, &[h]),
            rand_tensor(&mut rng, &[h, 1]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let ctx = attention_context(
                tape,
                vars[0],
                &AttentionVars {
                    w: vars[1],
                    b: vars[2],
                    v: vars[3],
                },
            )?;
            project(tape, ctx, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("attention", cases))
}

/// All four frequency paths of an intermediate block, checked through
/// the pair outputs.
fn check_oct_intermediate() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut cases = Vec::new();
    for (b, t, ch, cl, k, oh, ol) in [
        (1, 4, 1, 1, 3, 2, 1),
        (2, 6, 2, 1, 5, 1, 2),
        (1, 5, 2, 2, 3, 2, 2),
        (1, 8, 1, 2, 4, 2, 1),
        (2, 7, 2, 1, 1, 1, 1),
    ] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, ch]),
            rand_tensor(&mut rng, &[b, t / 2, cl]),
            rand_tensor(&mut rng, &[k, ch, oh]),
            rand_tensor(&mut rng, &[oh]),
            rand_tensor(&mut rng, &[k, cl, oh]),
            rand_tensor(&mut rng, &[oh]),
            rand_tensor(&mut rng, &[k, ch, ol]),
            rand_tensor(&mut rng, &[ol]),
            rand_tensor(&mut rng, &[k, cl, ol]),
            rand_tensor(&mut rng, &[ol]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let feat = OctFeat::Pair {
                high: vars[0],
                low: vars[1],
            };
            let weights = OctIntermediateWeights::Split {
                hh: OctPath { w: vars[2], b: vars[3] },
                lh: OctPath { w: vars[4], b: vars[5] },
                hl: OctPath { w: vars[6], b: vars[7] },
                ll: OctPath { w: vars[8], b: vars[9] },
            };
            let out = oct_intermediate(tape, &feat, &weights)?;
            let OctFeat::Pair { high, low } = out else {
                unreachable!()
            };
            let mut prng = ChaCha8Rng::seed_from_u64(proj_seed);
            let p1 = project(tape, high, &mut prng)?;
            let p2 = project(tape, low, &mut prng)?;
            tape.add(p1, p2)
        })?);
    }
    Ok(report("oct_intermediate(4 paths)", cases))
}

fn check_oct_initial() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut cases = Vec::new();
    for (b, t, cin, k, oh, ol) in [
        (1, 4, 1, 3, 1, 1),
        (2, 6, 2, 5, 2, 1),
        (1, 8, 1, 8, 1, 2),
        (2, 5, 2, 3, 2, 2),
        (1, 9, 1, 2, 1, 1),
    ] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, cin]),
            rand_tensor(&mut rng, &[k, cin, oh]),
            rand_tensor(&mut rng, &[oh]),
            rand_tensor(&mut rng, &[k, cin, ol]),
            rand_tensor(&mut rng, &[ol]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let out = oct_initial(
                tape,
                vars[0],
                &OctInitialWeights::Split {
                    high: OctPath { w: vars[1], b: vars[2] },
                    low: OctPath { w: vars[3], b: vars[4] },
                },
            )?;
            let OctFeat::Pair { high, low } = out else {
                unreachable!()
            };
            let mut prng = ChaCha8Rng::seed_from_u64(proj_seed);
            let p1 = project(tape, high, &mut prng)?;
            let p2 = project(tape, low, &mut prng)?;
            tape.add(p1, p2)
        })?);
    }
    Ok(report("oct_initial(2 paths)", cases))
}

fn check_oct_final() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut cases = Vec::new();
    for (b, t, ch, cl, k, f) in [
        (1, 4, 1, 1, 3, 2),
        (2, 6, 2, 1, 5, 1),
        (1, 5, 2, 2, 3, 2),
        (1, 7, 1, 2, 1, 3),
        (2, 8, 2, 2, 4, 1),
    ] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, t, ch]),
            rand_tensor(&mut rng, &[b, t / 2, cl]),
            rand_tensor(&mut rng, &[k, ch, f]),
            rand_tensor(&mut rng, &[f]),
            rand_tensor(&mut rng, &[k, cl, f]),
            rand_tensor(&mut rng, &[f]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let out = oct_final(
                tape,
                &OctFeat::Pair {
                    high: vars[0],
                    low: vars[1],
                },
                &OctFinalWeights::Split {
                    high: OctPath { w: vars[2], b: vars[3] },
                    low: OctPath { w: vars[4], b: vars[5] },
                },
            )?;
            project(tape, out, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("oct_final(2 paths)", cases))
}

fn check_softmax_xent() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut cases = Vec::new();
    for (b, k) in [(1, 2), (3, 4), (2, 5), (4, 3), (2, 2)] {
        let inputs = vec![rand_tensor(&mut rng, &[b, k])];
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        cases.push(check_case(&inputs, &move |tape, vars| {
            tape.softmax_cross_entropy(vars[0], &labels)
        })?);
    }
    Ok(report("softmax_cross_entropy", cases))
}

fn check_relu_gap_shuffle() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let mut cases = Vec::new();
    for (b, t, c) in [(1, 4, 2), (2, 3, 1), (1, 6, 3), (2, 5, 2), (3, 2, 2)] {
        let inputs = vec![rand_tensor_off_kink(&mut rng, &[b, t, c])];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let r = tape.relu(vars[0])?;
            let s = tape.dimension_shuffle(r)?;
            let s2 = tape.dimension_shuffle(s)?;
            let g = tape.global_avg_pool(s2)?;
            project(tape, g, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("relu+shuffle+gap", cases))
}

fn check_dropout() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut cases = Vec::new();
    for (b, c) in [(2, 4), (1, 8), (3, 3), (2, 6), (4, 2)] {
        let inputs = vec![rand_tensor(&mut rng, &[b, c])];
        let mask_seed = rng.random::<u64>();
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            // mask is redrawn from the same seed on every FD evaluation
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let y = tape.dropout(vars[0], 0.5, &mut mask_rng)?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("dropout(fixed mask)", cases))
}

fn check_concat_softmax() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(114);
    let mut cases = Vec::new();
    for (b, c1, c2) in [(2, 2, 3), (1, 4, 1), (3, 2, 2), (2, 1, 5), (1, 3, 3)] {
        let inputs = vec![
            rand_tensor(&mut rng, &[b, c1]),
            rand_tensor(&mut rng, &[b, c2]),
        ];
        let proj_seed = rng.random::<u64>();
        cases.push(check_case(&inputs, &move |tape, vars| {
            let joined = tape.concat_lastdim(vars[0], vars[1])?;
            let sm = tape.softmax_lastdim(joined)?;
            project(tape, sm, &mut ChaCha8Rng::seed_from_u64(proj_seed))
        })?);
    }
    Ok(report("concat+softmax", cases))
}

/// Run every family. Double precision, h = 1e-5, tolerance 1e-4, at least
/// five shapes per family.
pub fn run_all() -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        check_conv1d()?,
        check_avg_pool()?,
        check_upsample()?,
        check_batch_norm()?,
        check_lstm()?,
        check_attention()?,
        check_dense()?,
        check_oct_initial()?,
        check_oct_intermediate()?,
        check_oct_final()?,
        check_softmax_xent()?,
        check_relu_gap_shuffle()?,
        check_dropout()?,
        check_concat_softmax()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_family_passes() {
        for r in run_all().unwrap() {
            assert!(
                r.passed,
                "{} failed: max rel err {} >= {}",
                r.op, r.max_rel_err, r.tolerance
            );
        }
    }

    #[test]
    fn a_deliberately_wrong_backward_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let inputs = vec![rand_tensor(&mut rng, &[2, 3])];
        let err = check_case(&inputs, &|tape, vars| {
            // forward sin, backward claims cos(2x) instead of cos(x)
            let y = tape.custom_unary(
                vars[0],
                |x| x.map(|v| v.sin()),
                |grad, x| {
                    grad.zip(x, "bad_back", |g, v| g * (2.0 * v).cos())
                        .unwrap()
                },
            )?;
            project(tape, y, &mut ChaCha8Rng::seed_from_u64(7))
        })
        .unwrap();
        assert!(err > FD_TOL, "wrong backward slipped through: {err}");
    }
}
