//! Small configurations shared by unit tests.

use s2c_tensor::Tensor;

use crate::config::{ContextMode, EntropyConfig, FfnKind, ModelConfig, StageKind, StageSpec};

/// A few thousand parameters; every module type present.
pub fn tiny(kinds: [StageKind; 3]) -> ModelConfig {
    ModelConfig {
        variant_name: "tiny".into(),
        main_stages: vec![
            StageSpec::new(kinds[0], 1, 8),
            StageSpec::new(kinds[1], 1, 8),
            StageSpec::new(kinds[2], 1, 16),
        ],
        latent_channels: 12,
        hyper_stages: vec![StageSpec::new(StageKind::C, 1, 8), StageSpec::new(StageKind::C, 1, 8)],
        ffn: FfnKind::Gated,
        channel_aggregation: true,
        window_size: 4,
        dw_kernel: 3,
        expansion_ratio: 2,
        head_dim: 4,
        entropy: EntropyConfig {
            context_mode: ContextMode::Scctx,
            group_widths: vec![2, 4, 6],
            hyper_channels: 6,
            context_channels: 8,
            ..EntropyConfig::default()
        },
    }
}

pub fn tiny_hybrid() -> ModelConfig {
    tiny([StageKind::C, StageKind::A, StageKind::A])
}

/// Smooth-ish pseudo image in `[0, 1]`.
pub fn image(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let s = seed as f64;
    Tensor::from_fn(&[n, 3, h, w], |i| {
        let p = i as f64;
        0.5 + 0.25 * (p * 0.013 + s).sin() + 0.2 * ((p * 0.37 + 1.7 * s).sin() * (p * 0.0071).cos())
    })
}
