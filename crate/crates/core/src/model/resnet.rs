//! Residual stacks: three blocks of three conv (or octave) stages, filters
//! {64, 128, 128}, kernels {8, 5, 3} within each block. The block input is
//! added back before the final ReLU, through a kernel-1 projection when
//! channel counts differ.
//!
//! In the octave variant the skip is carried as a frequency pair and merged
//! pathwise. The last stage of the last block folds the pair into a single
//! tensor, so that block's skip uses a kernel-1 merging projection.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::octconv::{OctFeat, OctLayerSpec};
use crate::tape::Var;
use crate::tensor::Real;

use super::fcn::{relu_feat, tap_feat, OctBn};
use super::layers::{
    BatchNormLayer, ConvLayer, OctFinalLayer, OctInitialLayer, OctIntermediateLayer,
};
use super::{Fwd, ParamStore, RESNET_FILTERS, RESNET_KERNELS};

struct PlainResBlock {
    convs: Vec<ConvLayer>,
    bns: Vec<BatchNormLayer>,
    skip: Option<ConvLayer>,
    out_channels: usize,
}

impl PlainResBlock {
    fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        filters: usize,
    ) -> Self {
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut c = cin;
        for (i, &k) in RESNET_KERNELS.iter().enumerate() {
            let stage = format!("{name}.stage{}", i + 1);
            convs.push(ConvLayer::new(store, rng, &format!("{stage}.conv"), k, c, filters));
            bns.push(BatchNormLayer::new(store, &format!("{stage}.bn"), filters));
            c = filters;
        }
        let skip = (cin != filters)
            .then(|| ConvLayer::new(store, rng, &format!("{name}.skip.conv"), 1, cin, filters));
        PlainResBlock {
            convs,
            bns,
            skip,
            out_channels: filters,
        }
    }

    fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, (conv, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            h = conv.forward(cx, h)?;
            h = bn.forward(cx, h)?;
            if i + 1 < self.convs.len() {
                h = cx.tape.relu(h)?;
            }
        }
        let shortcut = match &self.skip {
            Some(proj) => proj.forward(cx, x)?,
            None => x,
        };
        let merged = cx.tape.add(h, shortcut)?;
        cx.tape.relu(merged)
    }
}

/// One octave stage: layer + per-branch batch norm.
enum OctStage {
    Initial(OctInitialLayer),
    Intermediate(OctIntermediateLayer),
    Final(OctFinalLayer),
}

impl OctStage {
    fn forward<F: Real>(&self, cx: &mut Fwd<F>, input: &OctFeat) -> Result<OctFeat> {
        match self {
            OctStage::Initial(l) => l.forward(cx, input.expect_plain()?),
            OctStage::Intermediate(l) => l.forward(cx, input),
            OctStage::Final(l) => Ok(OctFeat::Plain(l.forward(cx, input)?)),
        }
    }

    fn out_channels(&self) -> (usize, usize) {
        match self {
            OctStage::Initial(l) => l.out_channels(),
            OctStage::Intermediate(l) => l.out_channels(),
            OctStage::Final(l) => (l.out_channels(), 0),
        }
    }
}

/// Shortcut projection of an octave residual block.
enum OctSkip {
    Identity,
    /// Plain 1x1 conv (degenerate stacks with a channel change).
    Plain(ConvLayer),
    /// Plain input, pair output: 1x1 conv to the high branch, pool then
    /// 1x1 conv to the low branch.
    Split { high: ConvLayer, low: ConvLayer },
    /// Pair to pair with a channel change: per-branch 1x1 convs.
    PerBranch { high: ConvLayer, low: ConvLayer },
    /// Pair input, single output: kernel-1 merging projection.
    Merge(OctFinalLayer),
}

impl OctSkip {
    fn forward<F: Real>(&self, cx: &mut Fwd<F>, input: &OctFeat) -> Result<OctFeat> {
        match self {
            OctSkip::Identity => Ok(*input),
            OctSkip::Plain(conv) => Ok(OctFeat::Plain(conv.forward(cx, input.expect_plain()?)?)),
            OctSkip::Split { high, low } => {
                let x = input.expect_plain()?;
                let h = high.forward(cx, x)?;
                let pooled = cx.tape.avg_pool1d(x)?;
                let l = low.forward(cx, pooled)?;
                Ok(OctFeat::Pair { high: h, low: l })
            }
            OctSkip::PerBranch { high, low } => match input {
                OctFeat::Pair { high: h, low: l } => Ok(OctFeat::Pair {
                    high: high.forward(cx, *h)?,
                    low: low.forward(cx, *l)?,
                }),
                OctFeat::Plain(_) => Err(Error::dim("oct_skip", "expected pair")),
            },
            OctSkip::Merge(l) => Ok(OctFeat::Plain(l.forward(cx, input)?)),
        }
    }
}

struct OctResBlock {
    stages: Vec<OctStage>,
    bns: Vec<OctBn>,
    skip: OctSkip,
    out_channels: (usize, usize),
}

impl OctResBlock {
    /// `merging` marks the network's last block, whose third stage folds the
    /// pair back into a plain tensor.
    fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: (usize, usize), // (high, low); low == 0 means plain input
        filters: usize,
        alpha: f64,
        first_of_network: bool,
        merging: bool,
    ) -> Result<Self> {
        let mut stages = Vec::new();
        let mut bns = Vec::new();
        let mut ch = input;
        for (i, &k) in RESNET_KERNELS.iter().enumerate() {
            let spec = OctLayerSpec::new(filters, k, alpha)?;
            let stage_name = format!("{name}.stage{}", i + 1);
            let last = i + 1 == RESNET_KERNELS.len();
            let stage = if first_of_network && i == 0 {
                OctStage::Initial(OctInitialLayer::new(store, rng, &stage_name, &spec, ch.0)?)
            } else if merging && last {
                OctStage::Final(OctFinalLayer::new(store, rng, &stage_name, &spec, ch)?)
            } else {
                OctStage::Intermediate(OctIntermediateLayer::new(
                    store, rng, &stage_name, &spec, ch,
                )?)
            };
            ch = stage.out_channels();
            bns.push(OctBn::new(store, &stage_name, ch));
            stages.push(stage);
        }

        let skip = Self::build_skip(store, rng, name, input, ch, alpha)?;
        Ok(OctResBlock {
            stages,
            bns,
            skip,
            out_channels: ch,
        })
    }

    fn build_skip<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: (usize, usize),
        output: (usize, usize),
        alpha: f64,
    ) -> Result<OctSkip> {
        let skip_name = format!("{name}.skip");
        match (input, output) {
            (i, o) if i == o => Ok(OctSkip::Identity),
            ((ci, 0), (co, 0)) => Ok(OctSkip::Plain(ConvLayer::new(
                store,
                rng,
                &format!("{skip_name}.conv"),
                1,
                ci,
                co,
            ))),
            ((ci, 0), (c_h, c_l)) => Ok(OctSkip::Split {
                high: ConvLayer::new(store, rng, &format!("{skip_name}.high"), 1, ci, c_h),
                low: ConvLayer::new(store, rng, &format!("{skip_name}.low"), 1, ci, c_l),
            }),
            ((in_h, in_l), (co, 0)) => {
                let spec = OctLayerSpec::new(co, 1, alpha)?;
                Ok(OctSkip::Merge(OctFinalLayer::new(
                    store,
                    rng,
                    &skip_name,
                    &spec,
                    (in_h, in_l),
                )?))
            }
            ((in_h, in_l), (c_h, c_l)) => Ok(OctSkip::PerBranch {
                high: ConvLayer::new(store, rng, &format!("{skip_name}.high"), 1, in_h, c_h),
                low: ConvLayer::new(store, rng, &format!("{skip_name}.low"), 1, in_l, c_l),
            }),
        }
    }

    fn forward<F: Real>(&self, cx: &mut Fwd<F>, input: &OctFeat) -> Result<OctFeat> {
        let mut h = *input;
        let n = self.stages.len();
        for (i, (stage, bn)) in self.stages.iter().zip(&self.bns).enumerate() {
            h = stage.forward(cx, &h)?;
            h = bn.forward(cx, &h)?;
            if i + 1 < n {
                h = relu_feat(cx, &h)?;
            }
        }
        let shortcut = self.skip.forward(cx, input)?;
        let merged = match (&h, &shortcut) {
            (OctFeat::Plain(a), OctFeat::Plain(b)) => OctFeat::Plain(cx.tape.add(*a, *b)?),
            (
                OctFeat::Pair { high: ah, low: al },
                OctFeat::Pair { high: bh, low: bl },
            ) => OctFeat::Pair {
                high: cx.tape.add(*ah, *bh)?,
                low: cx.tape.add(*al, *bl)?,
            },
            _ => {
                return Err(Error::dim(
                    "oct_resblock",
                    "shortcut kind does not match block output",
                ))
            }
        };
        relu_feat(cx, &merged)
    }
}

enum ResBlocks {
    Plain(Vec<PlainResBlock>),
    Oct(Vec<OctResBlock>),
}

pub(crate) struct ResStack {
    blocks: ResBlocks,
}

impl ResStack {
    pub(crate) fn build<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut ChaCha8Rng,
        alpha: Option<f64>,
    ) -> Result<ResStack> {
        match alpha {
            None => {
                let mut blocks = Vec::new();
                let mut cin = 1;
                for (i, &f) in RESNET_FILTERS.iter().enumerate() {
                    blocks.push(PlainResBlock::new(
                        store,
                        rng,
                        &format!("block{}", i + 1),
                        cin,
                        f,
                    ));
                    cin = f;
                }
                Ok(ResStack {
                    blocks: ResBlocks::Plain(blocks),
                })
            }
            Some(alpha) => {
                let mut blocks = Vec::new();
                let mut ch = (1usize, 0usize);
                let last = RESNET_FILTERS.len() - 1;
                for (i, &f) in RESNET_FILTERS.iter().enumerate() {
                    let block = OctResBlock::new(
                        store,
                        rng,
                        &format!("block{}", i + 1),
                        ch,
                        f,
                        alpha,
                        i == 0,
                        i == last,
                    )?;
                    ch = block.out_channels;
                    blocks.push(block);
                }
                Ok(ResStack {
                    blocks: ResBlocks::Oct(blocks),
                })
            }
        }
    }

    pub(crate) fn out_channels(&self) -> usize {
        match &self.blocks {
            ResBlocks::Plain(blocks) => blocks.last().unwrap().out_channels,
            ResBlocks::Oct(blocks) => blocks.last().unwrap().out_channels.0,
        }
    }

    pub(crate) fn forward<F: Real>(&self, cx: &mut Fwd<F>, x: Var) -> Result<Var> {
        match &self.blocks {
            ResBlocks::Plain(blocks) => {
                let mut h = x;
                for (i, block) in blocks.iter().enumerate() {
                    h = block.forward(cx, h)?;
                    cx.tap(&format!("block{}", i + 1), h);
                }
                Ok(h)
            }
            ResBlocks::Oct(blocks) => {
                let mut feat = OctFeat::Plain(x);
                for (i, block) in blocks.iter().enumerate() {
                    feat = block.forward(cx, &feat)?;
                    tap_feat(cx, &format!("block{}", i + 1), &feat);
                }
                feat.expect_plain()
            }
        }
    }
}
