//! Depthwise-separable spatial mixing: `pw ∘ dw ∘ GELU ∘ pw`.

use s2c_tensor::Var;

use crate::config::BlockSpec;
use crate::error::Result;
use crate::layers::{expect_channels, Conv};
use crate::params::{Ctx, ParamBuilder, ParamStore};

#[derive(Debug, Clone)]
pub struct SepConv {
    pub spec: BlockSpec,
    pub pw_in: Conv,
    pub dw: Conv,
    pub pw_out: Conv,
}

impl SepConv {
    pub fn new(pb: &mut ParamBuilder, spec: BlockSpec) -> Self {
        let c = spec.channels;
        Self {
            spec,
            pw_in: Conv::pointwise(pb, "pw_in", c, c),
            dw: Conv::depthwise(pb, "dw", c, spec.dw_kernel),
            pw_out: Conv::pointwise(pb, "pw_out", c, c),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, self.spec.channels, "sepconv")?;
        let t = self.pw_in.forward(ctx, x).gelu();
        let t = self.dw.forward(ctx, &t);
        Ok(self.pw_out.forward(ctx, &t))
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.pw_in.check(store)?;
        self.dw.check(store)?;
        self.pw_out.check(store)
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.pw_in.macs(h, w) + self.dw.macs(h, w) + self.pw_out.macs(h, w)
    }
}
