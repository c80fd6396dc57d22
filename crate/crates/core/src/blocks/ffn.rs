//! Position-wise channel aggregation (1×1 convolutions).

use s2c_tensor::Var;

use crate::config::{BlockSpec, FfnKind};
use crate::error::Result;
use crate::layers::{expect_channels, Conv};
use crate::params::{Ctx, ParamBuilder, ParamStore};

#[derive(Debug, Clone)]
pub struct Ffn {
    pub spec: BlockSpec,
    pub w1: Conv,
    /// Second input projection (additive and gated forms only).
    pub w2: Option<Conv>,
    pub w_out: Conv,
}

impl Ffn {
    pub fn new(pb: &mut ParamBuilder, spec: BlockSpec) -> Self {
        let (c, hidden) = (spec.channels, spec.hidden());
        let w1 = Conv::pointwise(pb, "w1", c, hidden);
        let w2 = match spec.ffn {
            FfnKind::Vanilla => None,
            FfnKind::Additive | FfnKind::Gated => Some(Conv::pointwise(pb, "w2", c, hidden)),
        };
        Self {
            spec,
            w1,
            w2,
            w_out: Conv::pointwise(pb, "w_out", hidden, c),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, self.spec.channels, "ffn")?;
        let a = self.w1.forward(ctx, x);
        let hidden = match (&self.spec.ffn, &self.w2) {
            (FfnKind::Vanilla, _) => a.gelu(),
            (FfnKind::Additive, Some(w2)) => a.gelu().add(&w2.forward(ctx, x).silu()),
            (FfnKind::Gated, Some(w2)) => a.gelu().mul(&w2.forward(ctx, x)),
            (kind, None) => unreachable!("{kind:?} ffn built without a second projection"),
        };
        Ok(self.w_out.forward(ctx, &hidden))
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.w1.check(store)?;
        if let Some(w2) = &self.w2 {
            w2.check(store)?;
        }
        self.w_out.check(store)
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.w1.macs(h, w) + self.w2.as_ref().map_or(0, |c| c.macs(h, w)) + self.w_out.macs(h, w)
    }
}
