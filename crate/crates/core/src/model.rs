//! The assembled codec: transforms, hyperprior and context entropy model
//! under one parameter store.

use s2c_tensor::ops::Padding;
use s2c_tensor::{Tensor, Var};

use crate::config::{ModelConfig, SIZE_MULTIPLE};
use crate::entropy::{gaussian_likelihood, rate_estimate, ContextCursor, EntropyContext, FactorizedPrior, Quantizer, RateEstimate};
use crate::error::{Result, S2cError};
use crate::params::{Ctx, ParamBuilder, ParamStore};
use crate::transforms::{Analysis, HyperAnalysis, HyperSynthesis, Synthesis};

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub g_a: Analysis,
    pub g_s: Synthesis,
    pub h_a: HyperAnalysis,
    pub h_s: HyperSynthesis,
    pub prior: FactorizedPrior,
    pub context: EntropyContext,
}

/// Everything a forward pass produces. `lik_y` / `lik_z` are per-element
/// bin probabilities (floored); `y_hat` is what the decoder sees.
pub struct ForwardOutput {
    pub x_hat: Var,
    pub y: Var,
    pub y_hat: Var,
    pub z: Var,
    pub z_hat: Var,
    pub mu: Var,
    pub sigma: Var,
    pub lik_y: Var,
    pub lik_z: Var,
}

impl ForwardOutput {
    /// Estimated bits per pixel against the original (unpadded) pixel count.
    pub fn rate(&self, num_pixels: usize) -> RateEstimate {
        rate_estimate(self.lik_y.value(), self.lik_z.value(), num_pixels)
    }
}

/// Reflect-pad `[N, 3, H, W]` at the bottom/right up to multiples of 64.
pub fn pad_input(x: &Tensor) -> Tensor {
    let (_, _, h, w) = x.dims4();
    Var::constant(x.clone())
        .pad_reflect(Padding::to_multiple(h, w, SIZE_MULTIPLE))
        .value()
        .clone()
}

/// Undo [`pad_input`].
pub fn crop_output(x: &Var, h: usize, w: usize) -> Result<Var> {
    let (_, _, ph, pw) = x.dims4();
    if h > ph || w > pw {
        return Err(S2cError::Dimension(format!("cannot crop {ph}x{pw} to {h}x{w}")));
    }
    Ok(x.crop(0, 0, h, w))
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut params, seed);
        let g_a = Analysis::new(&mut pb, &config)?;
        let g_s = Synthesis::new(&mut pb, &config)?;
        let h_a = HyperAnalysis::new(&mut pb, &config)?;
        let h_s = HyperSynthesis::new(&mut pb, &config)?;
        let prior = pb.scope("prior", |pb| FactorizedPrior::new(pb, config.entropy.hyper_channels));
        let context = pb.scope("context", |pb| EntropyContext::new(pb, &config))?;
        let model = Self {
            config,
            params,
            g_a,
            g_s,
            h_a,
            h_s,
            prior,
            context,
        };
        model.check()?;
        Ok(model)
    }

    /// Validate every parameter shape against the module structure.
    pub fn check(&self) -> Result<()> {
        let s = &self.params;
        self.g_a.check(s)?;
        self.g_s.check(s)?;
        self.h_a.check(s)?;
        self.h_s.check(s)?;
        self.context.check(s)
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// Multiply-accumulates of one forward pass at input size `h × w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (lh, lw) = (h / 16, w / 16);
        self.g_a.macs(h, w)
            + self.g_s.macs(h, w)
            + self.h_a.macs(lh, lw)
            + self.h_s.macs(lh, lw)
            + self.context.macs(lh, lw)
    }

    pub fn check_input(&self, x: &Var) -> Result<()> {
        let (_, c, h, w) = x.dims4();
        if c != 3 || h == 0 || w == 0 || h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
            return Err(S2cError::Dimension(format!(
                "model input must be [N, 3, H, W] with H, W multiples of {SIZE_MULTIPLE}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Hyper path shared by training and coding: `z`, its quantized forms,
    /// the factorized likelihood and the hyper features for the context model.
    pub fn hyper(&self, ctx: &Ctx, y: &Var, q: &mut Quantizer) -> Result<(Var, Var, Var, Var)> {
        let z = self.h_a.forward(ctx, y)?;
        let qz = q.apply(&z, None);
        let lik_z = self.prior.likelihood(ctx, &qz.rate)?;
        let hyper = self.h_s.forward(ctx, &qz.decode)?;
        Ok((z, qz.decode, lik_z, hyper))
    }

    pub fn cursor(&self, hyper: Var) -> Result<ContextCursor<'_>> {
        self.context.cursor(hyper)
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var, mut q: Quantizer) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let y = self.g_a.forward(ctx, x)?;
        let (z, z_hat, lik_z, hyper) = self.hyper(ctx, &y, &mut q)?;
        let mut cursor = self.cursor(hyper)?;
        // Rate-path values assembled per slice the same way the cursor assembles decode values.
        let mut rate_parts: Vec<Var> = Vec::new();
        let mut pending_anchor: Option<Var> = None;
        while let Some(slice) = cursor.next_slice().cloned() {
            let p = cursor.params(ctx, &slice)?;
            let ys = y.narrow_channels(slice.channels.start, slice.channels.len());
            let qs = q.apply(&ys, Some(&p.mu));
            match &p.mask {
                None => rate_parts.push(qs.rate),
                Some(mask) => {
                    let part = qs.rate.mul_const(mask);
                    match pending_anchor.take() {
                        None => pending_anchor = Some(part),
                        Some(a) => rate_parts.push(a.add(&part)),
                    }
                }
            }
            cursor.submit(&slice, qs.decode)?;
        }
        let ctx_out = cursor.finish()?;
        let y_rate = Var::concat_channels(&rate_parts);
        let lik_y = gaussian_likelihood(&y_rate, &ctx_out.mu, &ctx_out.sigma)?;
        let x_hat = self.g_s.forward(ctx, &ctx_out.y_hat)?;
        Ok(ForwardOutput {
            x_hat,
            y,
            y_hat: ctx_out.y_hat,
            z,
            z_hat,
            mu: ctx_out.mu,
            sigma: ctx_out.sigma,
            lik_y,
            lik_z,
        })
    }
}

#[cfg(test)]
mod tests;
