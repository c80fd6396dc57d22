//! `ŷ = Q(y − μ) + μ` and its training relaxations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use s2c_tensor::special::round_half_away;
use s2c_tensor::{Tensor, Var};

use crate::config::QuantizerMode;

pub enum Quantizer<'a> {
    /// Hard rounding, half away from zero.
    Eval,
    Train {
        rng: &'a mut ChaCha8Rng,
        mode: QuantizerMode,
    },
}

/// Quantized latents for the two consumers: the likelihood (rate) and the decoder.
pub struct Quantized {
    pub rate: Var,
    pub decode: Var,
}

pub fn quantize_eval(y: &Tensor, mu: &Tensor) -> Tensor {
    y.zip_map(mu, |a, m| round_half_away(a - m) + m)
}

pub fn uniform_noise(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-0.5..0.5))
}

impl Quantizer<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Self::Train { .. })
    }

    /// Quantize `y` around `mu`; a `None` offset means zero.
    pub fn apply(&mut self, y: &Var, mu: Option<&Var>) -> Quantized {
        match self {
            Self::Eval => {
                let r = match mu {
                    Some(m) => y.sub(m).round_ste().add(m),
                    None => y.round_ste(),
                };
                Quantized {
                    rate: r.clone(),
                    decode: r,
                }
            }
            Self::Train { rng, mode } => {
                let noisy = y.add_const(&uniform_noise(y.shape(), rng));
                let decode = match mode {
                    QuantizerMode::Noise => noisy.clone(),
                    QuantizerMode::NoiseAndSte => match mu {
                        Some(m) => y.sub(m).round_ste().add(m),
                        None => y.round_ste(),
                    },
                };
                Quantized {
                    rate: noisy,
                    decode,
                }
            }
        }
    }
}
