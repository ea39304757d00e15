//! Training loop (Adam with plateau decay) and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SeriesSplit;
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ParamId};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};

/// Floating-point width of a training run. Tests and oracles always use
/// double; single precision is an opt-in for faster runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Precision> {
        match s {
            "f32" | "single" => Ok(Precision::Single),
            "f64" | "double" => Ok(Precision::Double),
            other => Err(Error::Config(format!(
                "unknown precision '{other}', expected f32|f64"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }
}

/// Knobs of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after `lr_patience` epochs
    /// without a training-loss improvement.
    pub lr_decay_factor: f64,
    pub lr_patience: usize,
    pub lr_floor: f64,
    pub seed: u64,
    pub precision: Precision,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_decay_factor: 0.7071,
            lr_patience: 50,
            lr_floor: 1e-4,
            seed: 0,
            precision: Precision::Double,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: double precision, 200 epochs.
    pub fn desk() -> Self {
        TrainConfig::default()
    }

    /// Full-scale preset: single precision, 500 epochs.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 500,
            precision: Precision::Single,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loss trajectory of a finished run.
pub struct TrainHistory {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Epoch whose parameters were kept (lowest training loss).
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Adam<F: Real> {
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
    slot_of: std::collections::HashMap<ParamId, usize>,
    t: usize,
}

impl<F: Real> Adam<F> {
    fn new(model: &Model<F>) -> Self {
        let ids = model.store.trainable_ids();
        let mut m = Vec::with_capacity(ids.len());
        let mut v = Vec::with_capacity(ids.len());
        let mut slot_of = std::collections::HashMap::new();
        for (slot, &id) in ids.iter().enumerate() {
            m.push(Tensor::zeros(model.store.get(id).shape()));
            v.push(Tensor::zeros(model.store.get(id).shape()));
            slot_of.insert(id, slot);
        }
        Adam { m, v, slot_of, t: 0 }
    }

    fn step(
        &mut self,
        model: &mut Model<F>,
        grads: &[(ParamId, Tensor<F>)],
        lr: f64,
        cfg: &TrainConfig,
    ) {
        self.t += 1;
        let b1 = F::from_f64(cfg.beta1);
        let b2 = F::from_f64(cfg.beta2);
        let eps = F::from_f64(cfg.adam_eps);
        let bias1 = F::one() - F::from_f64(cfg.beta1.powi(self.t as i32));
        let bias2 = F::one() - F::from_f64(cfg.beta2.powi(self.t as i32));
        let lr = F::from_f64(lr);
        for (id, grad) in grads {
            let slot = self.slot_of[id];
            let mut m = self.m[slot].clone();
            let mut v = self.v[slot].clone();
            for ((m_i, v_i), &g) in m
                .make_mut()
                .iter_mut()
                .zip(v.make_mut().iter_mut())
                .zip(grad.data())
            {
                *m_i = b1 * *m_i + (F::one() - b1) * g;
                *v_i = b2 * *v_i + (F::one() - b2) * g * g;
            }
            let mut value = model.store.get(*id).clone();
            for ((p, &m_i), &v_i) in value
                .make_mut()
                .iter_mut()
                .zip(m.data())
                .zip(v.data())
            {
                let m_hat = m_i / bias1;
                let v_hat = v_i / bias2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
            model.store.set(*id, value);
            self.m[slot] = m;
            self.v[slot] = v;
        }
    }
}

/// Gather rows `idxs` of an (N, Q, 1) tensor into a batch, converting to
/// the training precision.
fn gather_batch<F: Real>(x: &Tensor<f64>, idxs: &[usize]) -> Tensor<F> {
    let q = x.shape()[1];
    let mut data = Vec::with_capacity(idxs.len() * q);
    for &i in idxs {
        data.extend(x.data()[i * q..(i + 1) * q].iter().map(|&v| F::from_f64(v)));
    }
    Tensor::from_vec(vec![idxs.len(), q, 1], data).unwrap()
}

/// Minimize softmax cross-entropy on the training split. Keeps the
/// parameters from the epoch with the lowest training loss. Deterministic
/// given the seed (single-threaded).
pub fn train<F: Real>(
    model: &mut Model<F>,
    train_split: &SeriesSplit,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_split.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let n = train_split.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut lr = cfg.learning_rate;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<Vec<(ParamId, Tensor<F>)>> = None;
    let mut since_improvement = 0usize;
    let mut losses = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = gather_batch::<F>(&train_split.x, batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train_split.labels[i]).collect();

            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let (out, touched) = model
                .forward_with_leaves(&mut tape, xv, Mode::Train, &mut rng)
                .map_err(|e| nan_to_abort(e, epoch))?;
            let loss = tape
                .softmax_cross_entropy(out.logits, &labels)
                .map_err(|e| nan_to_abort(e, epoch))?;
            let loss_val = tape.value(loss).item().as_f64();
            if !loss_val.is_finite() {
                return Err(Error::NanLoss { epoch });
            }
            epoch_loss += loss_val * batch.len() as f64;

            let grads = tape.backward(loss)?;
            let mut param_grads = Vec::with_capacity(touched.len());
            for (id, var) in &touched {
                let g = grads.get_or_zeros(*var, model.store.get(*id).shape());
                if !g.all_finite() {
                    return Err(Error::NanLoss { epoch });
                }
                param_grads.push((*id, g));
            }
            adam.step(model, &param_grads, lr, cfg);
        }
        epoch_loss /= n as f64;
        losses.push(epoch_loss);

        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            best_epoch = epoch;
            since_improvement = 0;
            best_params = Some(
                model
                    .store
                    .trainable_ids()
                    .into_iter()
                    .map(|id| (id, model.store.get(id).clone()))
                    .collect(),
            );
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.lr_patience {
                lr = (lr * cfg.lr_decay_factor).max(cfg.lr_floor);
                since_improvement = 0;
            }
        }
    }

    if let Some(params) = best_params {
        for (id, value) in params {
            model.store.set(id, value);
        }
    }
    Ok(TrainHistory {
        losses,
        best_epoch,
        epochs_run: cfg.epochs,
    })
}

fn nan_to_abort(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NanLoss { epoch },
        other => other,
    }
}

/// Predicted class per row: argmax of the logits, ties broken by the
/// lowest class index.
pub fn predict<F: Real>(model: &mut Model<F>, x: &Tensor<f64>) -> Result<Vec<usize>> {
    let n = x.shape()[0];
    let mut preds = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in (0..n).collect::<Vec<_>>().chunks(64) {
        let xb = gather_batch::<F>(x, chunk);
        let mut tape = Tape::new();
        let xv = tape.leaf(xb);
        let out = model.forward(&mut tape, xv, Mode::Infer, &mut rng)?;
        let logits = tape.value(out.logits);
        let k = logits.shape()[1];
        for row in logits.data().chunks_exact(k) {
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            preds.push(best);
        }
    }
    Ok(preds)
}

/// Fraction of correctly classified series in a split.
pub fn evaluate<F: Real>(model: &mut Model<F>, split: &SeriesSplit) -> Result<f64> {
    let preds = predict(model, &split.x)?;
    let correct = preds
        .iter()
        .zip(&split.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / split.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_toy, SynthKind};
    use crate::model::{ArchKind, ModelHyper};

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let ds = synth_toy(SynthKind::Sine, 4, 16, 1, 0.2).unwrap().normalized();
        let mut model = Model::<f64>::build(ArchKind::Fcn, 3, 16, ModelHyper::default(), 5).unwrap();
        let before: Vec<Tensor<f64>> = model
            .store
            .trainable_ids()
            .into_iter()
            .map(|id| model.store.get(id).clone())
            .collect();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            seed: 3,
            ..TrainConfig::default()
        };
        train(&mut model, &ds.train, &cfg).unwrap();
        for (id, old) in model.store.trainable_ids().into_iter().zip(before) {
            assert!(model.store.get(id).bits_eq(&old));
        }
    }

    #[test]
    fn training_does_not_mutate_the_dataset() {
        let ds = synth_toy(SynthKind::Sine, 3, 16, 2, 0.2).unwrap().normalized();
        let before = ds.train.x.clone();
        let mut model = Model::<f64>::build(ArchKind::Fcn, 3, 16, ModelHyper::default(), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        train(&mut model, &ds.train, &cfg).unwrap();
        assert!(ds.train.x.bits_eq(&before));
    }

    #[test]
    fn evaluate_counts_correct_predictions() {
        // craft a dataset and check against a hand confusion count
        let ds = synth_toy(SynthKind::NoiseTrend, 2, 8, 7, 0.0).unwrap();
        let mut model =
            Model::<f64>::build(ArchKind::Fcn, 3, 8, ModelHyper::default(), 11).unwrap();
        let preds = predict(&mut model, &ds.test.x).unwrap();
        let acc = evaluate(&mut model, &ds.test).unwrap();
        let manual = preds
            .iter()
            .zip(&ds.test.labels)
            .filter(|(p, l)| p == l)
            .count() as f64
            / ds.test.len() as f64;
        assert_eq!(acc, manual);
    }

    #[test]
    fn diverging_run_aborts_with_epoch() {
        let ds = synth_toy(SynthKind::Sine, 4, 16, 4, 0.2).unwrap().normalized();
        let mut model = Model::<f64>::build(ArchKind::Fcn, 3, 16, ModelHyper::default(), 5).unwrap();
        // the step size must push weights past sqrt(f64::MAX) so batch-norm
        // variance overflows; anything smaller is renormalized away
        let cfg = TrainConfig {
            epochs: 8,
            learning_rate: 1e200,
            seed: 3,
            ..TrainConfig::default()
        };
        match train(&mut model, &ds.train, &cfg) {
            Err(Error::NanLoss { .. }) => {}
            other => panic!("expected NanLoss, got {other:?}", other = other.err()),
        }
    }
}
