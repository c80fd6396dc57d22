//! Residual spatial-interaction + channel-aggregation blocks.

mod attention;
mod ffn;
mod sepconv;

pub use attention::{window_attention, WindowAttention};
pub use ffn::Ffn;
pub use sepconv::SepConv;

use s2c_tensor::Var;

use crate::config::{BlockSpec, SpatialKind};
use crate::error::Result;
use crate::layers::{expect_channels, LayerNorm};
use crate::params::{Ctx, ParamBuilder, ParamStore};
use crate::profile::{self, Bucket};

/// Spatial interaction operator of one block.
#[derive(Debug, Clone)]
pub enum Spatial {
    /// Passes its input through unchanged and owns no parameters.
    Identity,
    SepConv(SepConv),
    Attention(WindowAttention),
}

pub fn identity_interaction(x: &Var) -> Var {
    x.clone()
}

impl Spatial {
    pub fn new(pb: &mut ParamBuilder, spec: BlockSpec) -> Self {
        match spec.spatial {
            SpatialKind::Identity => Self::Identity,
            SpatialKind::SepConv => pb.scope("sepconv", |pb| Self::SepConv(SepConv::new(pb, spec))),
            SpatialKind::Attention => {
                pb.scope("attn", |pb| Self::Attention(WindowAttention::new(pb, spec)))
            }
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        match self {
            Self::Identity => Ok(identity_interaction(x)),
            Self::SepConv(op) => op.forward(ctx, x),
            Self::Attention(op) => op.forward(ctx, x),
        }
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::SepConv(op) => op.check(store),
            Self::Attention(op) => op.check(store),
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        match self {
            Self::Identity => 0,
            Self::SepConv(op) => op.macs(h, w),
            Self::Attention(op) => op.macs(h, w),
        }
    }
}

/// `y1 = x + Spatial(LN1(x))`, `y2 = y1 + FFN(LN2(y1))`.
#[derive(Debug, Clone)]
pub struct S2cBlock {
    pub spec: BlockSpec,
    pub norm1: LayerNorm,
    pub spatial: Spatial,
    /// `None` when channel aggregation is disabled.
    pub channel: Option<(LayerNorm, Ffn)>,
}

impl S2cBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, spec: BlockSpec) -> Result<Self> {
        spec.validate()?;
        Ok(pb.scope(name, |pb| {
            let norm1 = LayerNorm::new(pb, "norm1", spec.channels);
            let spatial = Spatial::new(pb, spec);
            let channel = spec.channel_aggregation.then(|| {
                (
                    LayerNorm::new(pb, "norm2", spec.channels),
                    pb.scope("ffn", |pb| Ffn::new(pb, spec)),
                )
            });
            Self {
                spec,
                norm1,
                spatial,
                channel,
            }
        }))
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, self.spec.channels, "block")?;
        let t = self.norm1.forward(ctx, x);
        let s = profile::region(Bucket::Spatial, || self.spatial.forward(ctx, &t))?;
        let y = x.add(&s);
        match &self.channel {
            None => Ok(y),
            Some((norm2, ffn)) => {
                let t = norm2.forward(ctx, &y);
                let f = profile::region(Bucket::Channel, || ffn.forward(ctx, &t))?;
                Ok(y.add(&f))
            }
        }
    }

    /// Verify every owned parameter has the shape the spec implies.
    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.norm1.check(store)?;
        self.spatial.check(store)?;
        if let Some((norm2, ffn)) = &self.channel {
            norm2.check(store)?;
            ffn.check(store)?;
        }
        Ok(())
    }

    pub fn spatial_macs(&self, h: usize, w: usize) -> u64 {
        self.spatial.macs(h, w)
    }

    pub fn channel_macs(&self, h: usize, w: usize) -> u64 {
        self.channel.as_ref().map_or(0, |(_, f)| f.macs(h, w))
    }
}

/// A run of identical blocks at one resolution.
#[derive(Debug, Clone)]
pub struct BlockStack {
    pub label: String,
    pub blocks: Vec<S2cBlock>,
}

impl BlockStack {
    pub fn new(pb: &mut ParamBuilder, label: &str, spec: BlockSpec, count: usize) -> Result<Self> {
        let blocks = pb.scope(label, |pb| {
            (0..count)
                .map(|i| S2cBlock::new(pb, &i.to_string(), spec))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Self {
            label: label.to_string(),
            blocks,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        profile::stage(&self.label, || {
            self.blocks
                .iter()
                .try_fold(x.clone(), |h, block| block.forward(ctx, &h))
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.blocks.iter().try_for_each(|b| b.check(store))
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.blocks.iter().map(|b| b.spatial_macs(h, w) + b.channel_macs(h, w)).sum()
    }
}
