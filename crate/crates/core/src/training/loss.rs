//! `L = R(ŷ) + R(ẑ) + λ·D`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use s2c_tensor::{Tensor, Var};

use crate::entropy::total_bits;
use crate::error::{Result, S2cError};
use crate::evaluation::{ms_ssim_var, psnr_from_mse};
use crate::model::ForwardOutput;

/// MSE is taken on the 0–255 scale so the usual λ ladder balances rate and
/// distortion on `[0, 1]` images.
pub const MSE_SCALE: f64 = 255.0 * 255.0;

pub const MSE_LAMBDAS: [f64; 7] = [0.0017, 0.0025, 0.0035, 0.0067, 0.0130, 0.0250, 0.050];
pub const MS_SSIM_LAMBDAS: [f64; 6] = [3.0, 5.0, 8.0, 16.0, 36.0, 64.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Msssim,
}

impl Metric {
    pub fn lambdas(self) -> &'static [f64] {
        match self {
            Self::Mse => &MSE_LAMBDAS,
            Self::Msssim => &MS_SSIM_LAMBDAS,
        }
    }

    /// Position of `lambda` on this metric's ladder (255 when off-ladder).
    pub fn lambda_index(self, lambda: f64) -> u8 {
        self.lambdas()
            .iter()
            .position(|&l| (l - lambda).abs() <= 1e-12 * l)
            .map_or(255, |i| i as u8)
    }
}

impl FromStr for Metric {
    type Err = S2cError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Self::Mse),
            "msssim" | "ms-ssim" | "ms_ssim" => Ok(Self::Msssim),
            other => Err(S2cError::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mse => "mse",
            Self::Msssim => "msssim",
        })
    }
}

pub fn rd_objective(bpp_y: f64, bpp_z: f64, lambda: f64, distortion: f64) -> f64 {
    bpp_y + bpp_z + lambda * distortion
}

pub fn distortion(x: &Tensor, x_hat: &Var, metric: Metric) -> Result<Var> {
    let target = Var::constant(x.clone());
    match metric {
        Metric::Mse => Ok(x_hat.sub(&target).square().mean().mul_scalar(MSE_SCALE)),
        Metric::Msssim => Ok(ms_ssim_var(&target, x_hat)?.neg().add_scalar(1.0)),
    }
}

/// Scalars of one loss evaluation plus the differentiable total.
pub struct RdTerms {
    pub loss: Var,
    pub bpp_y: f64,
    pub bpp_z: f64,
    pub distortion: f64,
    pub psnr: f64,
}

pub fn rd_loss(out: &ForwardOutput, x: &Tensor, num_pixels: usize, lambda: f64, metric: Metric) -> Result<RdTerms> {
    let per_px = 1.0 / num_pixels as f64;
    let rate_y = total_bits(&out.lik_y).mul_scalar(per_px);
    let rate_z = total_bits(&out.lik_z).mul_scalar(per_px);
    let d = distortion(x, &out.x_hat, metric)?;
    let loss = rate_y.add(&rate_z).add(&d.mul_scalar(lambda));
    let mse = crate::evaluation::mse(x, out.x_hat.value())?;
    Ok(RdTerms {
        bpp_y: rate_y.value().data()[0],
        bpp_z: rate_z.value().data()[0],
        distortion: d.value().data()[0],
        psnr: psnr_from_mse(mse),
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use s2c_tensor::ops::gradcheck::finite_difference_report;

    #[test]
    fn objective_arithmetic() {
        assert!((rd_objective(0.30, 0.02, 0.0130, 0.01) - 0.32013).abs() < 1e-15);
        assert_eq!(rd_objective(0.0, 0.0, 0.05, 0.0), 0.0);
    }

    #[test]
    fn perfect_reconstruction_costs_nothing() {
        let x = Tensor::from_fn(&[1, 3, 4, 4], |i| i as f64 / 48.0);
        let d = distortion(&x, &Var::constant(x.clone()), Metric::Mse).unwrap();
        assert_eq!(d.value().data()[0], 0.0);
    }

    #[test]
    fn mse_term_gradient() {
        let lambda = 0.013;
        let x = Tensor::from_fn(&[1, 3, 4, 5], |i| (i as f64 * 0.3).sin() * 0.5 + 0.5);
        let x_hat = Tensor::from_fn(&[1, 3, 4, 5], |i| (i as f64 * 0.17).cos() * 0.5 + 0.5);
        let rep = finite_difference_report(
            std::slice::from_ref(&x_hat),
            |v| distortion(&x, &v[0], Metric::Mse).unwrap().mul_scalar(lambda),
            1e-6,
            |_, _| true,
        );
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
        let leaf = Var::leaf(x_hat.clone(), true);
        let g = distortion(&x, &leaf, Metric::Mse).unwrap().mul_scalar(lambda).backward();
        let n = x.numel() as f64;
        for ((&gv, &a), &b) in g.get(&leaf).unwrap().data().iter().zip(x_hat.data()).zip(x.data()) {
            let want = MSE_SCALE * 2.0 * lambda * (a - b) / n;
            assert!((gv - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn ladders() {
        assert_eq!(Metric::Mse.lambda_index(0.013), 4);
        assert_eq!(Metric::Msssim.lambda_index(64.0), 5);
        assert_eq!(Metric::Mse.lambda_index(0.02), 255);
        assert_eq!("ms-ssim".parse::<Metric>().unwrap(), Metric::Msssim);
    }
}
