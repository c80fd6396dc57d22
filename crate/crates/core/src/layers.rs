//! Parameterized conv / transposed-conv / layer-norm layers.

use s2c_tensor::ops::Conv2dOpts;
use s2c_tensor::Var;

use crate::error::{Result, S2cError};
use crate::params::{Ctx, ParamBuilder, ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub opts: Conv2dOpts,
}

impl Conv {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        opts: Conv2dOpts,
    ) -> Self {
        let per_group = cin / opts.groups;
        let bound = 1.0 / ((per_group * kernel * kernel) as f64).sqrt();
        pb.scope(name, |pb| Self {
            weight: pb.uniform("weight", &[cout, per_group, kernel, kernel], bound),
            bias: pb.uniform("bias", &[cout], bound),
            cin,
            cout,
            kernel,
            opts,
        })
    }

    /// Stride-1 convolution that keeps the spatial size.
    pub fn same(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, kernel: usize) -> Self {
        Self::new(pb, name, cin, cout, kernel, Conv2dOpts::same(kernel))
    }

    pub fn pointwise(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize) -> Self {
        Self::same(pb, name, cin, cout, 1)
    }

    pub fn depthwise(pb: &mut ParamBuilder, name: &str, channels: usize, kernel: usize) -> Self {
        Self::new(
            pb,
            name,
            channels,
            channels,
            kernel,
            Conv2dOpts::same(kernel).groups(channels),
        )
    }

    /// Stride-2 `k×k` downsampler.
    pub fn down(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, kernel: usize) -> Self {
        Self::new(pb, name, cin, cout, kernel, Conv2dOpts::same(kernel).stride(2))
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        x.conv2d(ctx.p(self.weight), Some(ctx.p(self.bias)), self.opts)
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        let per_group = self.cin / self.opts.groups;
        expect_shape(store, self.weight, &[self.cout, per_group, self.kernel, self.kernel])?;
        expect_shape(store, self.bias, &[self.cout])
    }

    /// Multiply-accumulates for an output of `oh × ow`.
    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        (self.cout * (self.cin / self.opts.groups) * self.kernel * self.kernel * oh * ow) as u64
    }
}

/// Stride-2 transposed convolution that exactly doubles the spatial size.
#[derive(Debug, Clone)]
pub struct ConvUp {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl ConvUp {
    pub fn new(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, kernel: usize) -> Self {
        let bound = 1.0 / ((cout * kernel * kernel) as f64).sqrt();
        pb.scope(name, |pb| Self {
            weight: pb.uniform("weight", &[cin, cout, kernel, kernel], bound),
            bias: pb.uniform("bias", &[cout], bound),
            cin,
            cout,
            kernel,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        x.conv_transpose2d(
            ctx.p(self.weight),
            Some(ctx.p(self.bias)),
            2,
            self.kernel / 2,
            1,
        )
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        expect_shape(store, self.weight, &[self.cin, self.cout, self.kernel, self.kernel])?;
        expect_shape(store, self.bias, &[self.cout])
    }

    /// Multiply-accumulates given the *input* size `ih × iw`.
    pub fn macs(&self, ih: usize, iw: usize) -> u64 {
        (self.cin * self.cout * self.kernel * self.kernel * ih * iw) as u64
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

pub const LN_EPS: f64 = 1e-6;

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        pb.scope(name, |pb| Self {
            gamma: pb.constant("weight", &[channels], 1.0),
            beta: pb.constant("bias", &[channels], 0.0),
            channels,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Var {
        x.layer_norm_channels(ctx.p(self.gamma), ctx.p(self.beta), LN_EPS)
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        expect_shape(store, self.gamma, &[self.channels])?;
        expect_shape(store, self.beta, &[self.channels])
    }
}

pub(crate) fn expect_shape(store: &ParamStore, id: ParamId, shape: &[usize]) -> Result<()> {
    let got = store.get(id).shape();
    if got != shape {
        return Err(S2cError::ParamShape(format!(
            "{}: expected {shape:?}, found {got:?}",
            store.name(id)
        )));
    }
    Ok(())
}

/// Fail with a parameter-shape error unless `x` has `channels` channels.
pub(crate) fn expect_channels(x: &Var, channels: usize, what: &str) -> Result<()> {
    if x.shape().len() != 4 || x.shape()[1] != channels {
        return Err(S2cError::ParamShape(format!(
            "{what}: expected {channels} input channels, got shape {:?}",
            x.shape()
        )));
    }
    Ok(())
}
