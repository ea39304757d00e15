//! Three-block convolutional backbone shared by FCN, OctFCN and the
//! LSTM hybrids: filters {128, 256, 128}, kernels {8, 5, 3}, each block
//! conv -> batch norm -> ReLU. The octave variant normalizes and
//! activates each frequency branch separately while the pair exists and
//! the merged tensor in the final block.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::octconv::{OctFeat, OctLayerSpec};
use crate::tape::Var;
use crate::tensor::Real;

use super::layers::{
    BatchNormLayer, ConvLayer, OctFinalLayer, OctInitialLayer, OctIntermediateLayer,
};
use super::{Fwd, ParamStore, FCN_FILTERS, FCN_KERNELS};

pub(crate) struct ConvBnBlock {
    conv: ConvLayer,
    bn: BatchNormLayer,
}

impl ConvBnBlock {
    pub(crate) fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        kernel: usize,
        cin: usize,
        cout: usize,
    ) -> Self {
        ConvBnBlock {
            conv: ConvLayer::new(store, rng, &format!("{name}.conv"), kernel, cin, cout),
            bn: BatchNormLayer::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let y = self.conv.forward(cx, x)?;
        let y = self.bn.forward(cx, y)?;
        cx.tape.relu(y)
    }
}

/// Batch norm applied per frequency branch, or once when degenerate.
pub(crate) enum OctBn {
    Plain(BatchNormLayer),
    Pair {
        high: BatchNormLayer,
        low: BatchNormLayer,
    },
}

impl OctBn {
    pub(crate) fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        channels: (usize, usize),
    ) -> Self {
        let (c_h, c_l) = channels;
        if c_l == 0 {
            OctBn::Plain(BatchNormLayer::new(store, &format!("{name}.bn"), c_h))
        } else {
            OctBn::Pair {
                high: BatchNormLayer::new(store, &format!("{name}.bn_high"), c_h),
                low: BatchNormLayer::new(store, &format!("{name}.bn_low"), c_l),
            }
        }
    }

    /// BN then ReLU on each branch of the feature.
    pub(crate) fn forward_relu<F: Real>(&self, cx: &mut Fwd<F>, feat: &OctFeat) -> Result<OctFeat> {
        let normed = self.forward(cx, feat)?;
        relu_feat(cx, &normed)
    }

    pub(crate) fn forward<F: Real>(&self, cx: &mut Fwd<F>, feat: &OctFeat) -> Result<OctFeat> {
        match (self, feat) {
            (OctBn::Plain(bn), OctFeat::Plain(v)) => Ok(OctFeat::Plain(bn.forward(cx, *v)?)),
            (OctBn::Pair { high, low }, OctFeat::Pair { high: h, low: l }) => Ok(OctFeat::Pair {
                high: high.forward(cx, *h)?,
                low: low.forward(cx, *l)?,
            }),
            _ => Err(crate::error::Error::dim(
                "oct_bn",
                "feature kind does not match norm kind",
            )),
        }
    }
}

pub(crate) fn relu_feat<F: Real>(cx: &mut Fwd<F>, feat: &OctFeat) -> Result<OctFeat> {
    match feat {
        OctFeat::Plain(v) => Ok(OctFeat::Plain(cx.tape.relu(*v)?)),
        OctFeat::Pair { high, low } => Ok(OctFeat::Pair {
            high: cx.tape.relu(*high)?,
            low: cx.tape.relu(*low)?,
        }),
    }
}

pub(crate) fn tap_feat<F: Real>(cx: &mut Fwd<F>, name: &str, feat: &OctFeat) {
    match feat {
        OctFeat::Plain(v) => cx.tap(name, *v),
        OctFeat::Pair { high, low } => {
            cx.tap(&format!("{name}.high"), *high);
            cx.tap(&format!("{name}.low"), *low);
        }
    }
}

struct OctFcnStack {
    init: OctInitialLayer,
    bn1: OctBn,
    mid: OctIntermediateLayer,
    bn2: OctBn,
    fin: OctFinalLayer,
    bn3: BatchNormLayer,
}

pub(crate) enum Backbone {
    Plain(Vec<ConvBnBlock>),
    Oct(Box<OctFcnStack>),
}

impl Backbone {
    /// `alpha`: None builds the plain stack, Some(a) the octave stack.
    pub(crate) fn build<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        alpha: Option<f64>,
    ) -> Result<Backbone> {
        match alpha {
            None => {
                let mut blocks = Vec::new();
                let mut cin = 1;
                for (i, (&f, &k)) in FCN_FILTERS.iter().zip(&FCN_KERNELS).enumerate() {
                    blocks.push(ConvBnBlock::new(
                        store,
                        rng,
                        &format!("block{}", i + 1),
                        k,
                        cin,
                        f,
                    ));
                    cin = f;
                }
                Ok(Backbone::Plain(blocks))
            }
            Some(alpha) => {
                let spec1 = OctLayerSpec::new(FCN_FILTERS[0], FCN_KERNELS[0], alpha)?;
                let spec2 = OctLayerSpec::new(FCN_FILTERS[1], FCN_KERNELS[1], alpha)?;
                let spec3 = OctLayerSpec::new(FCN_FILTERS[2], FCN_KERNELS[2], alpha)?;

                let init = OctInitialLayer::new(store, rng, "block1", &spec1, 1)?;
                let bn1 = OctBn::new(store, "block1", init.out_channels());
                let mid = OctIntermediateLayer::new(store, rng, "block2", &spec2, init.out_channels())?;
                let bn2 = OctBn::new(store, "block2", mid.out_channels());
                let fin = OctFinalLayer::new(store, rng, "block3", &spec3, mid.out_channels())?;
                let bn3 = BatchNormLayer::new(store, "block3.bn", fin.out_channels());
                Ok(Backbone::Oct(Box::new(OctFcnStack {
                    init,
                    bn1,
                    mid,
                    bn2,
                    fin,
                    bn3,
                })))
            }
        }
    }

    /// Channel count of the final feature map.
    pub(crate) fn out_channels(&self) -> usize {
        match self {
            Backbone::Plain(blocks) => blocks.last().unwrap().conv.out_channels,
            Backbone::Oct(stack) => stack.fin.out_channels(),
        }
    }

    /// (B,Q,1) -> (B,Q,128) feature map, pre-GAP.
    pub(crate) fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        match self {
            Backbone::Plain(blocks) => {
                let mut h = x;
                for (i, block) in blocks.iter().enumerate() {
                    h = block.forward(cx, h)?;
                    cx.tap(&format!("block{}", i + 1), h);
                }
                Ok(h)
            }
            Backbone::Oct(stack) => {
                let p1 = stack.init.forward(cx, x)?;
                let p1 = stack.bn1.forward_relu(cx, &p1)?;
                tap_feat(cx, "block1", &p1);

                let p2 = stack.mid.forward(cx, &p1)?;
                let p2 = stack.bn2.forward_relu(cx, &p2)?;
                tap_feat(cx, "block2", &p2);

                let merged = stack.fin.forward(cx, &p2)?;
                let normed = stack.bn3.forward(cx, merged)?;
                let out = cx.tape.relu(normed)?;
                cx.tap("block3", out);
                Ok(out)
            }
        }
    }
}
