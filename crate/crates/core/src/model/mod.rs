//! Model graphs: the eight paper architectures over a shared parameter
//! store, built deterministically from a seed.

mod fcn;
mod layers;
mod lstm_branch;
mod resnet;

pub use layers::{
    AttentionLayer, BatchNormLayer, ConvLayer, DenseLayer, LstmLayer, OctFinalLayer,
    OctInitialLayer, OctIntermediateLayer, BN_EPS, BN_MOMENTUM,
};

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

pub const FCN_FILTERS: [usize; 3] = [128, 256, 128];
pub const FCN_KERNELS: [usize; 3] = [8, 5, 3];
pub const RESNET_FILTERS: [usize; 3] = [64, 128, 128];
pub const RESNET_KERNELS: [usize; 3] = [8, 5, 3];

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

struct ParamItem<F: Real> {
    name: String,
    value: Tensor<F>,
    trainable: bool,
}

/// Named registry of parameters and buffers (running statistics).
pub struct ParamStore<F: Real> {
    items: Vec<ParamItem<F>>,
    by_name: HashMap<String, usize>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            items: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.items.len();
        self.by_name.insert(name.clone(), id);
        self.items.push(ParamItem {
            name,
            value,
            trainable,
        });
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.items[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<F>) {
        debug_assert_eq!(self.items[id.0].value.shape(), value.shape());
        self.items[id.0].value = value;
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.items[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.items.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.items.len())
            .filter(|&i| self.items[i].trainable)
            .map(ParamId)
            .collect()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.items[id.0].trainable
    }

    /// Number of scalar values across trainable parameters.
    pub fn param_count(&self) -> usize {
        self.items
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    /// Scalar count of trainable parameters whose name starts with `prefix`.
    pub fn param_count_prefixed(&self, prefix: &str) -> usize {
        self.items
            .iter()
            .filter(|p| p.trainable && p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    /// Copy every value from `other`, matched by name. Both stores must hold
    /// exactly the same names with the same shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Config(format!(
                "store size mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for item in &other.items {
            let id = self.id_of(&item.name).ok_or_else(|| {
                Error::Config(format!("parameter {} missing in target store", item.name))
            })?;
            if self.get(id).shape() != item.value.shape() {
                return Err(Error::Config(format!(
                    "parameter {} shape mismatch: {:?} vs {:?}",
                    item.name,
                    self.get(id).shape(),
                    item.value.shape()
                )));
            }
            self.items[id.0].value = item.value.clone();
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<F>, bool)> {
        self.items
            .iter()
            .map(|p| (p.name.as_str(), &p.value, p.trainable))
    }
}

/// Uniform fan-in/fan-out scaled initialization (Glorot).
pub fn glorot_uniform<F: Real>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Forward pass mode: training uses batch statistics and active dropout,
/// inference uses running statistics and no stochastic nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Everything a layer needs while recording one forward pass.
pub struct Fwd<'a, F: Real> {
    pub tape: &'a mut Tape<F>,
    pub store: &'a mut ParamStore<F>,
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
    leaf_cache: HashMap<ParamId, Var>,
    trace: Option<Vec<(String, Var)>>,
}

impl<'a, F: Real> Fwd<'a, F> {
    pub fn new(
        tape: &'a mut Tape<F>,
        store: &'a mut ParamStore<F>,
        mode: Mode,
        rng: &'a mut ChaCha8Rng,
    ) -> Self {
        Fwd {
            tape,
            store,
            mode,
            rng,
            leaf_cache: HashMap::new(),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Tape leaf for a parameter, shared across uses within this pass.
    pub fn leaf(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.leaf_cache.get(&id) {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone());
        self.leaf_cache.insert(id, v);
        v
    }

    /// Leaf vars of every trainable parameter touched so far, with ids.
    pub fn touched_params(&self) -> Vec<(ParamId, Var)> {
        let mut v: Vec<(ParamId, Var)> = self
            .leaf_cache
            .iter()
            .filter(|(id, _)| self.store.is_trainable(**id))
            .map(|(&id, &var)| (id, var))
            .collect();
        v.sort_by_key(|(id, _)| id.0);
        v
    }

    pub(crate) fn tap(&mut self, name: &str, var: Var) {
        if let Some(trace) = &mut self.trace {
            trace.push((name.to_string(), var));
        }
    }

    pub fn take_trace(&mut self) -> Vec<(String, Var)> {
        self.trace.take().unwrap_or_default()
    }
}

/// The eight architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Fcn,
    OctFcn,
    ResNet,
    OctResNet,
    LstmFcn,
    LstmOctFcn,
    AlstmFcn,
    AlstmOctFcn,
}

impl ArchKind {
    pub const ALL: [ArchKind; 8] = [
        ArchKind::Fcn,
        ArchKind::OctFcn,
        ArchKind::ResNet,
        ArchKind::OctResNet,
        ArchKind::LstmFcn,
        ArchKind::LstmOctFcn,
        ArchKind::AlstmFcn,
        ArchKind::AlstmOctFcn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Fcn => "fcn",
            ArchKind::OctFcn => "octfcn",
            ArchKind::ResNet => "resnet",
            ArchKind::OctResNet => "octresnet",
            ArchKind::LstmFcn => "lstmfcn",
            ArchKind::LstmOctFcn => "lstm-octfcn",
            ArchKind::AlstmFcn => "alstmfcn",
            ArchKind::AlstmOctFcn => "alstm-octfcn",
        }
    }

    pub fn parse(name: &str) -> Result<ArchKind> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model '{name}', expected one of: {}",
                    Self::ALL.map(|a| a.name()).join(", ")
                ))
            })
    }

    pub fn is_oct(&self) -> bool {
        matches!(
            self,
            ArchKind::OctFcn | ArchKind::OctResNet | ArchKind::LstmOctFcn | ArchKind::AlstmOctFcn
        )
    }

    pub fn has_lstm_branch(&self) -> bool {
        matches!(
            self,
            ArchKind::LstmFcn | ArchKind::LstmOctFcn | ArchKind::AlstmFcn | ArchKind::AlstmOctFcn
        )
    }

    pub fn has_attention(&self) -> bool {
        matches!(self, ArchKind::AlstmFcn | ArchKind::AlstmOctFcn)
    }
}

/// Architecture-level hyperparameters the paper leaves configurable.
#[derive(Debug, Clone, Copy)]
pub struct ModelHyper {
    /// High/low filter split ratio of the octave layers.
    pub alpha: f64,
    /// LSTM units of the recurrent branch.
    pub lstm_units: usize,
    /// Dropout rate on the recurrent branch.
    pub dropout: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        ModelHyper {
            alpha: 0.5,
            lstm_units: 8,
            dropout: 0.8,
        }
    }
}

pub(crate) enum Body {
    Fcn {
        backbone: fcn::Backbone,
        classifier: DenseLayer,
    },
    Res {
        stack: resnet::ResStack,
        classifier: DenseLayer,
    },
    LstmFcn {
        backbone: fcn::Backbone,
        branch: lstm_branch::LstmBranch,
        classifier: DenseLayer,
    },
}

/// Outputs of one forward pass.
pub struct ForwardOut {
    /// Pre-softmax class scores, (B, K).
    pub logits: Var,
    /// Global-average-pooled features of the convolutional branch, (B, C).
    pub features: Var,
}

/// A built architecture plus its parameter store.
pub struct Model<F: Real> {
    pub arch: ArchKind,
    pub num_classes: usize,
    /// Series length the graph was built for. Binding for architectures
    /// with a recurrent branch (the dimension shuffle turns the length
    /// into the LSTM input width); convolutional stacks accept any length.
    pub input_len: usize,
    pub hyper: ModelHyper,
    pub store: ParamStore<F>,
    body: Body,
}

impl<F: Real> Model<F> {
    /// Build `arch` for `num_classes` over series of length `input_len`,
    /// parameters drawn deterministically from `seed`.
    pub fn build(
        arch: ArchKind,
        num_classes: usize,
        input_len: usize,
        hyper: ModelHyper,
        seed: u64,
    ) -> Result<Model<F>> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if input_len < 2 {
            return Err(Error::Config(format!(
                "input_len must be >= 2, got {input_len}"
            )));
        }
        if !(0.0..=1.0).contains(&hyper.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", hyper.alpha)));
        }
        if hyper.lstm_units == 0 {
            return Err(Error::Config("lstm_units must be >= 1".into()));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = if arch.is_oct() { Some(hyper.alpha) } else { None };

        let body = if arch.has_lstm_branch() {
            let backbone = fcn::Backbone::build(&mut store, &mut rng, alpha)?;
            let branch = lstm_branch::LstmBranch::build(
                &mut store,
                &mut rng,
                input_len,
                hyper.lstm_units,
                arch.has_attention(),
                hyper.dropout,
            )?;
            let feat = backbone.out_channels() + hyper.lstm_units;
            let classifier = DenseLayer::new(&mut store, &mut rng, "classifier", feat, num_classes);
            Body::LstmFcn {
                backbone,
                branch,
                classifier,
            }
        } else {
            match arch {
                ArchKind::Fcn | ArchKind::OctFcn => {
                    let backbone = fcn::Backbone::build(&mut store, &mut rng, alpha)?;
                    let classifier = DenseLayer::new(
                        &mut store,
                        &mut rng,
                        "classifier",
                        backbone.out_channels(),
                        num_classes,
                    );
                    Body::Fcn {
                        backbone,
                        classifier,
                    }
                }
                _ => {
                    let stack = resnet::ResStack::build(&mut store, &mut rng, alpha)?;
                    let classifier = DenseLayer::new(
                        &mut store,
                        &mut rng,
                        "classifier",
                        stack.out_channels(),
                        num_classes,
                    );
                    Body::Res { stack, classifier }
                }
            }
        };
        Ok(Model {
            arch,
            num_classes,
            input_len,
            hyper,
            store,
            body,
        })
    }

    /// Record one forward pass on `tape`. Input is (B, Q, 1).
    pub fn forward(
        &mut self,
        tape: &mut Tape<F>,
        x: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardOut> {
        let mut cx = Fwd::new(tape, &mut self.store, mode, rng);
        let out = forward_body(&self.body, &mut cx, x)?;
        Ok(out)
    }

    /// Forward pass that also collects per-block activation taps.
    pub fn forward_traced(
        &mut self,
        tape: &mut Tape<F>,
        x: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ForwardOut, Vec<(String, Var)>)> {
        let mut cx = Fwd::new(tape, &mut self.store, mode, rng).with_trace();
        let out = forward_body(&self.body, &mut cx, x)?;
        let trace = cx.take_trace();
        Ok((out, trace))
    }

    /// Forward pass that also returns the touched trainable parameters and
    /// their tape leaves (for optimizer steps and gradient probes).
    pub fn forward_with_leaves(
        &mut self,
        tape: &mut Tape<F>,
        x: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ForwardOut, Vec<(ParamId, Var)>)> {
        let mut cx = Fwd::new(tape, &mut self.store, mode, rng);
        let out = forward_body(&self.body, &mut cx, x)?;
        let touched = cx.touched_params();
        Ok((out, touched))
    }

    /// Class probabilities for a batch, inference mode.
    pub fn predict_proba(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, xv, Mode::Infer, &mut rng)?;
        let probs = tape.softmax_lastdim(out.logits)?;
        Ok(tape.value(probs).clone())
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }
}

fn forward_body<F: Real>(body: &Body, cx: &mut Fwd<F>, x: Var) -> Result<ForwardOut> {
    let xs = cx.tape.shape(x);
    if xs.len() != 3 || xs[2] != 1 {
        return Err(Error::dim(
            "model",
            format!("input must be (B, Q, 1), got {xs:?}"),
        ));
    }
    match body {
        Body::Fcn {
            backbone,
            classifier,
        } => {
            let feat_map = backbone.forward(cx, x)?;
            let features = cx.tape.global_avg_pool(feat_map)?;
            let logits = classifier.forward(cx, features)?;
            Ok(ForwardOut { logits, features })
        }
        Body::Res { stack, classifier } => {
            let feat_map = stack.forward(cx, x)?;
            let features = cx.tape.global_avg_pool(feat_map)?;
            let logits = classifier.forward(cx, features)?;
            Ok(ForwardOut { logits, features })
        }
        Body::LstmFcn {
            backbone,
            branch,
            classifier,
        } => {
            let feat_map = backbone.forward(cx, x)?;
            let features = cx.tape.global_avg_pool(feat_map)?;
            let recurrent = branch.forward(cx, x)?;
            let joined = cx.tape.concat_lastdim(features, recurrent)?;
            let logits = classifier.forward(cx, joined)?;
            Ok(ForwardOut { logits, features })
        }
    }
}
