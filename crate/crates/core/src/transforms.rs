//! Analysis / synthesis transforms and their hyper counterparts.

use s2c_tensor::Var;

use crate::blocks::BlockStack;
use crate::config::{ModelConfig, StageSpec};
use crate::error::{Result, S2cError};
use crate::layers::{expect_channels, Conv, ConvUp};
use crate::params::{Ctx, ParamBuilder, ParamStore};
use crate::profile;

const RESAMPLE_KERNEL: usize = 5;

fn stack(pb: &mut ParamBuilder, cfg: &ModelConfig, label: &str, stage: &StageSpec) -> Result<BlockStack> {
    BlockStack::new(pb, label, cfg.block_spec(stage), stage.blocks)
}

/// `x → y`: four stride-2 downsamplers with block stacks at H/4, H/8, H/16.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub down: Vec<Conv>,
    pub stages: Vec<BlockStack>,
    pub proj: Conv,
}

impl Analysis {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let [c1, c2, c3] = [0, 1, 2].map(|i| cfg.main_stages[i].channels);
        let k = RESAMPLE_KERNEL;
        pb.scope("g_a", |pb| {
            Ok(Self {
                down: vec![
                    Conv::down(pb, "down0", 3, c1, k),
                    Conv::down(pb, "down1", c1, c1, k),
                    Conv::down(pb, "down2", c1, c2, k),
                    Conv::down(pb, "down3", c2, c3, k),
                ],
                stages: (0..3)
                    .map(|i| stack(pb, cfg, &format!("stage{}", i + 1), &cfg.main_stages[i]))
                    .collect::<Result<_>>()?,
                proj: Conv::pointwise(pb, "proj", c3, cfg.latent_channels),
            })
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, 3, "analysis input")?;
        let (_, _, h, w) = x.dims4();
        if h % 16 != 0 || w % 16 != 0 {
            return Err(S2cError::Dimension(format!(
                "analysis needs sides divisible by 16, got {h}x{w}"
            )));
        }
        profile::stage("g_a", || {
            let mut t = self.down[0].forward(ctx, x);
            t = self.down[1].forward(ctx, &t);
            t = self.stages[0].forward(ctx, &t)?;
            t = self.down[2].forward(ctx, &t);
            t = self.stages[1].forward(ctx, &t)?;
            t = self.down[3].forward(ctx, &t);
            t = self.stages[2].forward(ctx, &t)?;
            Ok(self.proj.forward(ctx, &t))
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.down.iter().try_for_each(|c| c.check(store))?;
        self.stages.iter().try_for_each(|s| s.check(store))?;
        self.proj.check(store)
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let d = &self.down;
        d[0].macs(h / 2, w / 2)
            + d[1].macs(h / 4, w / 4)
            + self.stages[0].macs(h / 4, w / 4)
            + d[2].macs(h / 8, w / 8)
            + self.stages[1].macs(h / 8, w / 8)
            + d[3].macs(h / 16, w / 16)
            + self.stages[2].macs(h / 16, w / 16)
            + self.proj.macs(h / 16, w / 16)
    }
}

/// `ŷ → x̂`: mirror of [`Analysis`]; the H/16 stage uses the encoder's third
/// stage kind, and so on back up.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub proj: Conv,
    pub stages: Vec<BlockStack>,
    pub up: Vec<ConvUp>,
}

impl Synthesis {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let [c1, c2, c3] = [0, 1, 2].map(|i| cfg.main_stages[i].channels);
        let k = RESAMPLE_KERNEL;
        pb.scope("g_s", |pb| {
            Ok(Self {
                proj: Conv::pointwise(pb, "proj", cfg.latent_channels, c3),
                stages: (0..3)
                    .map(|i| stack(pb, cfg, &format!("stage{}", i + 1), &cfg.main_stages[2 - i]))
                    .collect::<Result<_>>()?,
                up: vec![
                    ConvUp::new(pb, "up0", c3, c2, k),
                    ConvUp::new(pb, "up1", c2, c1, k),
                    ConvUp::new(pb, "up2", c1, c1, k),
                    ConvUp::new(pb, "up3", c1, 3, k),
                ],
            })
        })
    }

    pub fn forward(&self, ctx: &Ctx, y_hat: &Var) -> Result<Var> {
        expect_channels(y_hat, self.proj.cin, "synthesis input")?;
        profile::stage("g_s", || {
            let mut t = self.proj.forward(ctx, y_hat);
            t = self.stages[0].forward(ctx, &t)?;
            t = self.up[0].forward(ctx, &t);
            t = self.stages[1].forward(ctx, &t)?;
            t = self.up[1].forward(ctx, &t);
            t = self.stages[2].forward(ctx, &t)?;
            t = self.up[2].forward(ctx, &t);
            Ok(self.up[3].forward(ctx, &t))
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.proj.check(store)?;
        self.stages.iter().try_for_each(|s| s.check(store))?;
        self.up.iter().try_for_each(|c| c.check(store))
    }

    /// Cost at output size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let u = &self.up;
        self.proj.macs(h / 16, w / 16)
            + self.stages[0].macs(h / 16, w / 16)
            + u[0].macs(h / 16, w / 16)
            + self.stages[1].macs(h / 8, w / 8)
            + u[1].macs(h / 8, w / 8)
            + self.stages[2].macs(h / 4, w / 4)
            + u[2].macs(h / 4, w / 4)
            + u[3].macs(h / 2, w / 2)
    }
}

/// `y → z`: two stride-2 downsamplers around a block stack.
#[derive(Debug, Clone)]
pub struct HyperAnalysis {
    pub down0: Conv,
    pub stage: BlockStack,
    pub down1: Conv,
}

impl HyperAnalysis {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let st = cfg.hyper_stages[0];
        pb.scope("h_a", |pb| {
            Ok(Self {
                down0: Conv::down(pb, "down0", cfg.latent_channels, st.channels, RESAMPLE_KERNEL),
                stage: stack(pb, cfg, "stage", &st)?,
                down1: Conv::down(pb, "down1", st.channels, cfg.entropy.hyper_channels, RESAMPLE_KERNEL),
            })
        })
    }

    pub fn forward(&self, ctx: &Ctx, y: &Var) -> Result<Var> {
        expect_channels(y, self.down0.cin, "hyper analysis input")?;
        profile::stage("h_a", || {
            let t = self.down0.forward(ctx, y);
            let t = self.stage.forward(ctx, &t)?;
            Ok(self.down1.forward(ctx, &t))
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.down0.check(store)?;
        self.stage.check(store)?;
        self.down1.check(store)
    }

    /// Cost at latent size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.down0.macs(h / 2, w / 2) + self.stage.macs(h / 2, w / 2) + self.down1.macs(h / 4, w / 4)
    }
}

/// `ẑ → 2·C₄` hyper features (μ and raw σ for the hyperprior-only mode).
#[derive(Debug, Clone)]
pub struct HyperSynthesis {
    pub up0: ConvUp,
    pub stage: BlockStack,
    pub up1: ConvUp,
}

impl HyperSynthesis {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let st = cfg.hyper_stages[1];
        pb.scope("h_s", |pb| {
            Ok(Self {
                up0: ConvUp::new(pb, "up0", cfg.entropy.hyper_channels, st.channels, RESAMPLE_KERNEL),
                stage: stack(pb, cfg, "stage", &st)?,
                up1: ConvUp::new(pb, "up1", st.channels, 2 * cfg.latent_channels, RESAMPLE_KERNEL),
            })
        })
    }

    pub fn forward(&self, ctx: &Ctx, z_hat: &Var) -> Result<Var> {
        expect_channels(z_hat, self.up0.cin, "hyper synthesis input")?;
        profile::stage("h_s", || {
            let t = self.up0.forward(ctx, z_hat);
            let t = self.stage.forward(ctx, &t)?;
            Ok(self.up1.forward(ctx, &t))
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.up0.check(store)?;
        self.stage.check(store)?;
        self.up1.check(store)
    }

    /// Cost at latent size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        self.up0.macs(h / 4, w / 4) + self.stage.macs(h / 2, w / 2) + self.up1.macs(h / 2, w / 2)
    }
}
