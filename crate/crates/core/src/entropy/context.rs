//! Channel-group + checkerboard context model for the Gaussian parameters.
//!
//! Latent channels are split into groups decoded in order; inside a group
//! the checkerboard anchors `(h + w) even` come first. Parameters of a slice
//! depend on the hyper features, earlier groups (through a context-mining
//! network of SepConv blocks) and, for non-anchors, the anchors of the
//! same group (through a 5×5 convolution). A parameter-aggregation network
//! of identity blocks fuses these into `(μ, σ)`.

use std::fmt;
use std::ops::Range;

use s2c_tensor::{Tensor, Var};

use crate::blocks::BlockStack;
use crate::config::{BlockSpec, ContextMode, ModelConfig, SpatialKind};
use crate::error::{Result, S2cError};
use crate::layers::{expect_channels, Conv};
use crate::params::{Ctx, ParamBuilder, ParamStore};

pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    All,
    Anchor,
    NonAnchor,
}

impl Phase {
    pub fn contains(self, y: usize, x: usize) -> bool {
        match self {
            Self::All => true,
            Self::Anchor => (y + x) % 2 == 0,
            Self::NonAnchor => (y + x) % 2 == 1,
        }
    }

    /// `[n, c, h, w]` indicator of this phase's positions.
    pub fn mask(self, n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[n, c, h, w], |i| {
            let p = i % (h * w);
            f64::from(u8::from(self.contains(p / w, p % w)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub group: usize,
    pub phase: Phase,
    pub channels: Range<usize>,
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group {} {:?}", self.group, self.phase)
    }
}

/// Split `2w` channels into `(μ, σ)`.
fn split_params(raw: &Var, w: usize) -> (Var, Var) {
    let mu = raw.narrow_channels(0, w);
    let sigma = raw.narrow_channels(w, w).softplus().lower_bound(SIGMA_FLOOR);
    (mu, sigma)
}

#[derive(Debug, Clone)]
struct Mining {
    conv_in: Conv,
    blocks: BlockStack,
    conv_out: Conv,
}

#[derive(Debug, Clone)]
struct Aggregation {
    conv_in: Conv,
    blocks: BlockStack,
    conv_out: Conv,
}

impl Aggregation {
    fn forward(&self, ctx: &Ctx, inputs: &[Var]) -> Result<Var> {
        let x = Var::concat_channels(inputs);
        let h = self.conv_in.forward(ctx, &x).gelu();
        let h = self.blocks.forward(ctx, &h)?;
        Ok(self.conv_out.forward(ctx, &h))
    }
}

#[derive(Debug, Clone)]
pub struct EntropyContext {
    pub mode: ContextMode,
    pub widths: Vec<usize>,
    pub checkerboard: bool,
    pub latent_channels: usize,
    mining: Vec<Option<Mining>>,
    spatial: Vec<Option<Conv>>,
    aggregation: Vec<Aggregation>,
}

impl EntropyContext {
    pub fn new(pb: &mut ParamBuilder, cfg: &ModelConfig) -> Result<Self> {
        let e = &cfg.entropy;
        let c4 = cfg.latent_channels;
        let mut out = Self {
            mode: e.context_mode,
            widths: e.group_widths.clone(),
            checkerboard: e.checkerboard,
            latent_channels: c4,
            mining: Vec::new(),
            spatial: Vec::new(),
            aggregation: Vec::new(),
        };
        if e.context_mode == ContextMode::HyperpriorOnly {
            out.widths = vec![c4];
            out.checkerboard = false;
            return Ok(out);
        }
        let cc = e.context_channels;
        let block = |kind: SpatialKind| {
            let mut s = cfg.block_spec(&crate::config::StageSpec::new(
                crate::config::StageKind::C,
                1,
                cc,
            ));
            s.spatial = kind;
            s
        };
        let mining_spec: BlockSpec = block(SpatialKind::SepConv);
        let agg_spec: BlockSpec = block(SpatialKind::Identity);
        let mut done = 0;
        for (g, &w) in e.group_widths.iter().enumerate() {
            pb.scope(&format!("group{g}"), |pb| -> Result<()> {
                out.mining.push(if g == 0 {
                    None
                } else {
                    Some(pb.scope("mining", |pb| -> Result<Mining> {
                        Ok(Mining {
                            conv_in: Conv::same(pb, "conv_in", done, cc, 3),
                            blocks: BlockStack::new(pb, "blocks", mining_spec, e.context_blocks)?,
                            conv_out: Conv::same(pb, "conv_out", cc, 2 * w, 3),
                        })
                    })?)
                });
                out.spatial.push(
                    e.checkerboard
                        .then(|| Conv::same(pb, "spatial", w, 2 * w, 5)),
                );
                let agg_in = 2 * c4 + if g > 0 { 2 * w } else { 0 } + if e.checkerboard { 2 * w } else { 0 };
                out.aggregation.push(pb.scope("aggregation", |pb| -> Result<Aggregation> {
                    Ok(Aggregation {
                        conv_in: Conv::pointwise(pb, "conv_in", agg_in, cc),
                        blocks: BlockStack::new(pb, "blocks", agg_spec, e.aggregation_blocks)?,
                        conv_out: Conv::pointwise(pb, "conv_out", cc, 2 * w),
                    })
                })?);
                Ok(())
            })?;
            done += w;
        }
        Ok(out)
    }

    pub fn slices(&self) -> Vec<Slice> {
        let mut out = Vec::new();
        let mut start = 0;
        for (g, &w) in self.widths.iter().enumerate() {
            let phases: &[Phase] = if self.checkerboard {
                &[Phase::Anchor, Phase::NonAnchor]
            } else {
                &[Phase::All]
            };
            for &phase in phases {
                out.push(Slice {
                    group: g,
                    phase,
                    channels: start..start + w,
                });
            }
            start += w;
        }
        out
    }

    pub fn cursor(&self, hyper: Var) -> Result<ContextCursor<'_>> {
        expect_channels(&hyper, 2 * self.latent_channels, "context hyper features")?;
        Ok(ContextCursor {
            model: self,
            slices: self.slices(),
            next: 0,
            pending: None,
            hyper,
            decoded: Vec::new(),
            group: None,
            mu: Vec::new(),
            sigma: Vec::new(),
        })
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        for m in self.mining.iter().flatten() {
            m.conv_in.check(store)?;
            m.blocks.check(store)?;
            m.conv_out.check(store)?;
        }
        for s in self.spatial.iter().flatten() {
            s.check(store)?;
        }
        for a in &self.aggregation {
            a.conv_in.check(store)?;
            a.blocks.check(store)?;
            a.conv_out.check(store)?;
        }
        Ok(())
    }

    /// Multiply-accumulates of the whole context model at latent size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = 0;
        for m in self.mining.iter().flatten() {
            total += m.conv_in.macs(h, w) + m.conv_out.macs(h, w);
            total += m.blocks.blocks.iter().map(|b| b.spatial_macs(h, w) + b.channel_macs(h, w)).sum::<u64>();
        }
        for s in self.spatial.iter().flatten() {
            total += s.macs(h, w);
        }
        let phases = if self.checkerboard { 2 } else { 1 };
        for a in &self.aggregation {
            let once = a.conv_in.macs(h, w)
                + a.conv_out.macs(h, w)
                + a.blocks.blocks.iter().map(|b| b.channel_macs(h, w)).sum::<u64>();
            total += phases * once;
        }
        total
    }
}

/// Gaussian parameters of one slice over the full spatial grid of its group.
#[derive(Clone)]
pub struct SliceParams {
    pub mu: Var,
    pub sigma: Var,
    /// Positions belonging to the slice (`None` = all).
    pub mask: Option<Tensor>,
}

struct GroupState {
    mining: Option<Var>,
    anchor_hat: Option<Var>,
    anchor_params: Option<(Var, Var)>,
}

/// Sequential driver: ask for a slice's parameters, then hand back its
/// reconstructed values before moving on. Requests out of order fail.
pub struct ContextCursor<'m> {
    model: &'m EntropyContext,
    slices: Vec<Slice>,
    next: usize,
    pending: Option<SliceParams>,
    hyper: Var,
    decoded: Vec<Var>,
    group: Option<GroupState>,
    mu: Vec<Var>,
    sigma: Vec<Var>,
}

pub struct ContextOutput {
    pub y_hat: Var,
    pub mu: Var,
    pub sigma: Var,
}

impl ContextCursor<'_> {
    pub fn next_slice(&self) -> Option<&Slice> {
        self.slices.get(self.next)
    }

    fn out_of_order(&self, requested: &Slice) -> S2cError {
        S2cError::OutOfOrder {
            expected: self
                .next_slice()
                .map_or_else(|| "end of slices".to_string(), ToString::to_string),
            requested: requested.to_string(),
        }
    }

    pub fn params(&mut self, ctx: &Ctx, slice: &Slice) -> Result<SliceParams> {
        if self.next_slice() != Some(slice) || self.pending.is_some() {
            return Err(self.out_of_order(slice));
        }
        let m = self.model;
        let (n, _, h, w) = self.hyper.dims4();
        let width = slice.channels.len();
        if m.mode == ContextMode::HyperpriorOnly {
            let (mu, sigma) = split_params(&self.hyper, m.latent_channels);
            let p = SliceParams { mu, sigma, mask: None };
            self.pending = Some(p.clone());
            return Ok(p);
        }
        let g = slice.group;
        if self.group.is_none() {
            let mining = match &m.mining[g] {
                None => None,
                Some(net) => {
                    let prev = Var::concat_channels(&self.decoded);
                    let t = net.conv_in.forward(ctx, &prev).gelu();
                    let t = net.blocks.forward(ctx, &t)?;
                    Some(net.conv_out.forward(ctx, &t))
                }
            };
            self.group = Some(GroupState {
                mining,
                anchor_hat: None,
                anchor_params: None,
            });
        }
        let state = self.group.as_ref().expect("group state initialised");
        let mut inputs = vec![self.hyper.clone()];
        inputs.extend(state.mining.clone());
        if m.checkerboard {
            let spatial = match (slice.phase, &state.anchor_hat) {
                (Phase::Anchor, _) => Var::constant(Tensor::zeros(&[n, 2 * width, h, w])),
                (Phase::NonAnchor, Some(anchors)) => {
                    m.spatial[g].as_ref().expect("spatial context conv").forward(ctx, anchors)
                }
                _ => return Err(self.out_of_order(slice)),
            };
            inputs.push(spatial);
        }
        let raw = m.aggregation[g].forward(ctx, &inputs)?;
        let (mu, sigma) = split_params(&raw, width);
        let mask = (slice.phase != Phase::All).then(|| slice.phase.mask(n, width, h, w));
        let p = SliceParams { mu, sigma, mask };
        self.pending = Some(p.clone());
        Ok(p)
    }

    /// Record the reconstruction of the current slice. Values outside the
    /// slice's positions are zeroed so they cannot leak into later context.
    pub fn submit(&mut self, slice: &Slice, y_hat: Var) -> Result<()> {
        if self.next_slice() != Some(slice) {
            return Err(self.out_of_order(slice));
        }
        let Some(params) = self.pending.take() else {
            return Err(self.out_of_order(slice));
        };
        if y_hat.shape() != params.mu.shape() {
            return Err(S2cError::Dimension(format!(
                "slice values {:?}, expected {:?}",
                y_hat.shape(),
                params.mu.shape()
            )));
        }
        self.next += 1;
        match (slice.phase, &params.mask) {
            (Phase::All, _) | (_, None) => {
                self.decoded.push(y_hat);
                self.mu.push(params.mu);
                self.sigma.push(params.sigma);
                self.group = None;
            }
            (Phase::Anchor, Some(mask)) => {
                let state = self.group.as_mut().expect("group in progress");
                state.anchor_hat = Some(y_hat.mul_const(mask));
                state.anchor_params = Some((params.mu.mul_const(mask), params.sigma.mul_const(mask)));
            }
            (Phase::NonAnchor, Some(mask)) => {
                let state = self.group.take().expect("group in progress");
                let anchors = state.anchor_hat.expect("anchors decoded");
                let (mu_a, sigma_a) = state.anchor_params.expect("anchor params");
                self.decoded.push(anchors.add(&y_hat.mul_const(mask)));
                self.mu.push(mu_a.add(&params.mu.mul_const(mask)));
                self.sigma.push(sigma_a.add(&params.sigma.mul_const(mask)));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<ContextOutput> {
        if self.next != self.slices.len() {
            let expected = self.slices[self.next].to_string();
            return Err(S2cError::OutOfOrder {
                expected,
                requested: "finish".into(),
            });
        }
        Ok(ContextOutput {
            y_hat: Var::concat_channels(&self.decoded),
            mu: Var::concat_channels(&self.mu),
            sigma: Var::concat_channels(&self.sigma),
        })
    }
}
