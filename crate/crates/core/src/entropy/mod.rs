//! Quantization, likelihood models, rate estimation and the context model.

pub mod context;
pub mod factorized;
pub mod gaussian;
pub mod quantize;

pub use context::{ContextCursor, ContextOutput, EntropyContext, Phase, Slice, SliceParams, SIGMA_FLOOR};
pub use factorized::FactorizedPrior;
pub use gaussian::{bin_probability, gaussian_likelihood};
pub use quantize::{quantize_eval, Quantized, Quantizer};

use s2c_tensor::{Tensor, Var};

/// Smallest probability any element is charged, matching 16-bit tables.
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / 65536.0;

/// `Σ −log₂ p` as a differentiable scalar.
pub fn total_bits(likelihood: &Var) -> Var {
    likelihood.ln().sum().mul_scalar(-std::f64::consts::LOG2_E)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub bpp_y: f64,
    pub bpp_z: f64,
}

impl RateEstimate {
    pub fn total(&self) -> f64 {
        self.bpp_y + self.bpp_z
    }
}

pub fn bits(likelihood: &Tensor) -> f64 {
    likelihood.data().iter().map(|p| -p.log2()).sum()
}

/// Bits per pixel, normalized by the original (unpadded) pixel count
/// `N · H · W`.
pub fn rate_estimate(lik_y: &Tensor, lik_z: &Tensor, num_pixels: usize) -> RateEstimate {
    let px = num_pixels as f64;
    RateEstimate {
        bpp_y: bits(lik_y) / px,
        bpp_z: bits(lik_z) / px,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        let half = Tensor::full(&[1, 16, 16, 16], 0.5);
        let r = rate_estimate(&half, &Tensor::full(&[1], 1.0), 256 * 256);
        assert_eq!(r.bpp_y, 0.0625);
        assert_eq!(r.bpp_z, 0.0);
        let floored = Tensor::full(&[3], LIKELIHOOD_FLOOR);
        assert_eq!(bits(&floored), 48.0);
        let v = total_bits(&Var::constant(half));
        assert!((v.value().data()[0] - 4096.0).abs() < 1e-9);
    }
}
