//! PSNR and multi-scale SSIM for images in `[0, 1]`.

use s2c_tensor::ops::Conv2dOpts;
use s2c_tensor::{Tensor, Var};

use crate::error::{Result, S2cError};

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
/// Smallest side for which the coarsest scale still holds one full window.
pub const MS_SSIM_MIN_SIDE: usize = WINDOW << 4;

fn same_shape(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() || x.numel() == 0 {
        return Err(S2cError::Dimension(format!("metric inputs {:?} vs {:?}", x.shape(), y.shape())));
    }
    Ok(())
}

pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64> {
    same_shape(x, y)?;
    let s: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / x.numel() as f64)
}

/// `10·log₁₀(1 / MSE)`; identical inputs give `+∞`.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

fn gaussian_taps() -> Vec<f64> {
    let half = (WINDOW / 2) as f64;
    let g: Vec<f64> = (0..WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-mode Gaussian filtering of every channel.
fn blur(x: &Var) -> Var {
    let c = x.dims4().1;
    let g = gaussian_taps();
    let kernel = Tensor::from_fn(&[c, 1, WINDOW, WINDOW], |i| {
        let k = i % (WINDOW * WINDOW);
        g[k / WINDOW] * g[k % WINDOW]
    });
    x.conv2d(&Var::constant(kernel), None, Conv2dOpts::default().groups(c))
}

fn halve(x: &Var) -> Var {
    let c = x.dims4().1;
    let kernel = Tensor::full(&[c, 1, 2, 2], 0.25);
    x.conv2d(&Var::constant(kernel), None, Conv2dOpts::default().stride(2).groups(c))
}

/// Per-`(image, channel)` SSIM and contrast-structure terms at one scale.
fn ssim_terms(x: &Var, y: &Var) -> (Var, Var) {
    let c = x.dims4().1;
    let stats = blur(&Var::concat_channels(&[x.clone(), y.clone(), x.square(), y.square(), x.mul(y)]));
    let part = |i: usize| stats.narrow_channels(i * c, c);
    let (mx, my) = (part(0), part(1));
    let (mx2, my2, mxy) = (mx.square(), my.square(), mx.mul(&my));
    let vx = part(2).sub(&mx2);
    let vy = part(3).sub(&my2);
    let cov = part(4).sub(&mxy);
    let cs = cov.mul_scalar(2.0).add_scalar(C2).div(&vx.add(&vy).add_scalar(C2));
    let lum = mxy.mul_scalar(2.0).add_scalar(C1).div(&mx2.add(&my2).add_scalar(C1));
    (lum.mul(&cs).mean_spatial(), cs.mean_spatial())
}

/// Differentiable MS-SSIM averaged over images and channels.
pub fn ms_ssim_var(x: &Var, y: &Var) -> Result<Var> {
    same_shape(x.value(), y.value())?;
    let (_, _, h, w) = x.dims4();
    if h.min(w) < MS_SSIM_MIN_SIDE {
        return Err(S2cError::InvalidArgument(format!(
            "MS-SSIM needs sides of at least {MS_SSIM_MIN_SIDE} px, got {h}x{w}"
        )));
    }
    let (mut a, mut b) = (x.clone(), y.clone());
    let mut acc: Option<Var> = None;
    let last = MS_SSIM_WEIGHTS.len() - 1;
    for (j, &wj) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b);
        let term = if j == last { ssim } else { cs }.relu().powf(wj);
        acc = Some(match acc {
            None => term,
            Some(p) => p.mul(&term),
        });
        if j < last {
            a = halve(&a);
            b = halve(&b);
        }
    }
    Ok(acc.expect("five scales").mean())
}

pub fn ms_ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    let v = ms_ssim_var(&Var::constant(x.clone()), &Var::constant(y.clone()))?;
    Ok(v.value().data()[0])
}
