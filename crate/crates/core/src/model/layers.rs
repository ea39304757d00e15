//! Layer building blocks: thin wrappers pairing parameters in the store
//! with the tape ops that consume them.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::octconv::{
    oct_final, oct_initial, oct_intermediate, OctFeat, OctFinalWeights, OctInitialWeights,
    OctIntermediateWeights, OctLayerSpec, OctPath,
};
use crate::ops::recurrent::{attention_context, lstm_forward, AttentionVars, LstmVars};
use crate::tape::Var;
use crate::tensor::{Real, Tensor};

use super::{glorot_uniform, Fwd, Mode, ParamId, ParamStore};

pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

pub struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub out_channels: usize,
}

impl ConvLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        kernel: usize,
        cin: usize,
        cout: usize,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            glorot_uniform(rng, &[kernel, cin, cout], kernel * cin, kernel * cout),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]), true);
        ConvLayer {
            w,
            b,
            kernel,
            out_channels: cout,
        }
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let w = cx.leaf(self.w);
        let b = cx.leaf(self.b);
        cx.tape.conv1d(x, w, b)
    }

    pub(crate) fn path<F: Real>(&self, cx: &mut Fwd<F>) -> OctPath {
        OctPath {
            w: cx.leaf(self.w),
            b: cx.leaf(self.b),
        }
    }
}

pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            glorot_uniform(rng, &[d_in, d_out], d_in, d_out),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[d_out]), true);
        DenseLayer { w, b }
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let w = cx.leaf(self.w);
        let b = cx.leaf(self.b);
        cx.tape.dense(x, w, b)
    }
}

/// Batch norm with running statistics kept as non-trainable buffers.
pub struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub run_mean: ParamId,
    pub run_var: ParamId,
}

impl BatchNormLayer {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, channels: usize) -> Self {
        BatchNormLayer {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], F::one()), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            run_mean: store.add(format!("{name}.run_mean"), Tensor::zeros(&[channels]), false),
            run_var: store.add(
                format!("{name}.run_var"),
                Tensor::full(&[channels], F::one()),
                false,
            ),
        }
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let gamma = cx.leaf(self.gamma);
        let beta = cx.leaf(self.beta);
        match cx.mode {
            Mode::Train => {
                let (y, mean, var) = cx.tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                self.fold_running(cx.store, &mean, &var);
                Ok(y)
            }
            Mode::Infer => {
                let mean = cx.store.get(self.run_mean).clone();
                let var = cx.store.get(self.run_var).clone();
                cx.tape.batch_norm_infer(x, gamma, beta, &mean, &var, BN_EPS)
            }
        }
    }

    fn fold_running<F: Real>(&self, store: &mut ParamStore<F>, mean: &[F], var: &[F]) {
        let m = F::from_f64(BN_MOMENTUM);
        let one_minus = F::one() - m;
        let mut rm = store.get(self.run_mean).clone();
        for (r, &b) in rm.make_mut().iter_mut().zip(mean) {
            *r = *r * m + b * one_minus;
        }
        store.set(self.run_mean, rm);
        let mut rv = store.get(self.run_var).clone();
        for (r, &b) in rv.make_mut().iter_mut().zip(var) {
            *r = *r * m + b * one_minus;
        }
        store.set(self.run_var, rv);
    }
}

pub struct LstmLayer {
    pub kernel: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub units: usize,
}

impl LstmLayer {
    /// Gate blocks ordered (input, forget, candidate, output); the forget
    /// bias starts at 1.
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        input_dim: usize,
        units: usize,
    ) -> Self {
        let kernel = store.add(
            format!("{name}.kernel"),
            glorot_uniform(rng, &[input_dim, 4 * units], input_dim, 4 * units),
            true,
        );
        let recurrent = store.add(
            format!("{name}.recurrent"),
            glorot_uniform(rng, &[units, 4 * units], units, 4 * units),
            true,
        );
        let mut bias = vec![F::zero(); 4 * units];
        for b in bias.iter_mut().skip(units).take(units) {
            *b = F::one();
        }
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::from_vec(vec![4 * units], bias).unwrap(),
            true,
        );
        LstmLayer {
            kernel,
            recurrent,
            bias,
            units,
        }
    }

    /// Returns (last hidden state, full state sequence).
    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<(Var, Var)> {
        let vars = LstmVars {
            kernel: cx.leaf(self.kernel),
            recurrent: cx.leaf(self.recurrent),
            bias: cx.leaf(self.bias),
            units: self.units,
        };
        let out = lstm_forward(cx.tape, x, &vars)?;
        Ok((out.last, out.sequence))
    }
}

pub struct AttentionLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl AttentionLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        state_dim: usize,
    ) -> Self {
        AttentionLayer {
            w: store.add(
                format!("{name}.w"),
                glorot_uniform(rng, &[state_dim, state_dim], state_dim, state_dim),
                true,
            ),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[state_dim]), true),
            v: store.add(
                format!("{name}.v"),
                glorot_uniform(rng, &[state_dim, 1], state_dim, 1),
                true,
            ),
        }
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, states: Var) -> Result<Var> {
        let vars = AttentionVars {
            w: cx.leaf(self.w),
            b: cx.leaf(self.b),
            v: cx.leaf(self.v),
        };
        attention_context(cx.tape, states, &vars)
    }
}

/// Initial octave layer with its split decided at build time.
///
/// In the degenerate case (alpha 0 or 1) the layer registers a single
/// convolution under the same `{name}.conv` naming a plain architecture
/// uses, so degenerate octave models mirror their base model's store.
pub enum OctInitialLayer {
    Plain(ConvLayer),
    Split { high: ConvLayer, low: ConvLayer },
}

impl OctInitialLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: &OctLayerSpec,
        cin: usize,
    ) -> Result<Self> {
        if spec.is_degenerate() {
            let conv = ConvLayer::new(
                store,
                rng,
                &format!("{name}.conv"),
                spec.kernel,
                cin,
                spec.filters,
            );
            return Ok(OctInitialLayer::Plain(conv));
        }
        let (c_h, c_l) = spec.initial_split()?;
        Ok(OctInitialLayer::Split {
            high: ConvLayer::new(store, rng, &format!("{name}.high"), spec.kernel, cin, c_h),
            low: ConvLayer::new(store, rng, &format!("{name}.low"), spec.kernel, cin, c_l),
        })
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<OctFeat> {
        let weights = match self {
            OctInitialLayer::Plain(c) => OctInitialWeights::Plain(c.path(cx)),
            OctInitialLayer::Split { high, low } => OctInitialWeights::Split {
                high: high.path(cx),
                low: low.path(cx),
            },
        };
        oct_initial(cx.tape, x, &weights)
    }

    pub fn out_channels(&self) -> (usize, usize) {
        match self {
            OctInitialLayer::Plain(c) => (c.out_channels, 0),
            OctInitialLayer::Split { high, low } => (high.out_channels, low.out_channels),
        }
    }
}

pub enum OctIntermediateLayer {
    Plain(ConvLayer),
    Split {
        hh: ConvLayer,
        lh: ConvLayer,
        hl: ConvLayer,
        ll: ConvLayer,
    },
}

impl OctIntermediateLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: &OctLayerSpec,
        in_channels: (usize, usize),
    ) -> Result<Self> {
        let (in_h, in_l) = in_channels;
        if spec.is_degenerate() {
            let conv = ConvLayer::new(
                store,
                rng,
                &format!("{name}.conv"),
                spec.kernel,
                in_h,
                spec.filters,
            );
            return Ok(OctIntermediateLayer::Plain(conv));
        }
        let (c_h, c_l) = spec.intermediate_split()?;
        let k = spec.kernel;
        Ok(OctIntermediateLayer::Split {
            hh: ConvLayer::new(store, rng, &format!("{name}.hh"), k, in_h, c_h),
            lh: ConvLayer::new(store, rng, &format!("{name}.lh"), k, in_l, c_h),
            hl: ConvLayer::new(store, rng, &format!("{name}.hl"), k, in_h, c_l),
            ll: ConvLayer::new(store, rng, &format!("{name}.ll"), k, in_l, c_l),
        })
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, input: &OctFeat) -> Result<OctFeat> {
        let weights = match self {
            OctIntermediateLayer::Plain(c) => OctIntermediateWeights::Plain(c.path(cx)),
            OctIntermediateLayer::Split { hh, lh, hl, ll } => OctIntermediateWeights::Split {
                hh: hh.path(cx),
                lh: lh.path(cx),
                hl: hl.path(cx),
                ll: ll.path(cx),
            },
        };
        oct_intermediate(cx.tape, input, &weights)
    }

    pub fn out_channels(&self) -> (usize, usize) {
        match self {
            OctIntermediateLayer::Plain(c) => (c.out_channels, 0),
            OctIntermediateLayer::Split { hh, hl, .. } => (hh.out_channels, hl.out_channels),
        }
    }
}

pub enum OctFinalLayer {
    Plain(ConvLayer),
    Split { high: ConvLayer, low: ConvLayer },
}

impl OctFinalLayer {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: &OctLayerSpec,
        in_channels: (usize, usize),
    ) -> Result<Self> {
        let (in_h, in_l) = in_channels;
        if spec.is_degenerate() {
            let conv = ConvLayer::new(
                store,
                rng,
                &format!("{name}.conv"),
                spec.kernel,
                in_h,
                spec.filters,
            );
            return Ok(OctFinalLayer::Plain(conv));
        }
        Ok(OctFinalLayer::Split {
            high: ConvLayer::new(
                store,
                rng,
                &format!("{name}.high"),
                spec.kernel,
                in_h,
                spec.filters,
            ),
            low: ConvLayer::new(
                store,
                rng,
                &format!("{name}.low"),
                spec.kernel,
                in_l,
                spec.filters,
            ),
        })
    }

    pub fn forward<F: Real>(&self, cx: &mut Fwd<F>, input: &OctFeat) -> Result<Var> {
        let weights = match self {
            OctFinalLayer::Plain(c) => OctFinalWeights::Plain(c.path(cx)),
            OctFinalLayer::Split { high, low } => OctFinalWeights::Split {
                high: high.path(cx),
                low: low.path(cx),
            },
        };
        oct_final(cx.tape, input, &weights)
    }

    pub fn out_channels(&self) -> usize {
        match self {
            OctFinalLayer::Plain(c) => c.out_channels,
            OctFinalLayer::Split { high, .. } => high.out_channels,
        }
    }
}
