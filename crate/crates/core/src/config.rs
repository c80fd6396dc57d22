//! Declarative model descriptions and the named presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, S2cError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialKind {
    Identity,
    SepConv,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    Vanilla,
    Additive,
    Gated,
}

impl FromStr for FfnKind {
    type Err = S2cError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Self::Vanilla),
            "additive" => Ok(Self::Additive),
            "gated" => Ok(Self::Gated),
            other => Err(S2cError::Config(format!("unknown ffn kind {other:?}"))),
        }
    }
}

/// Stage letter: `C` = SepConv blocks, `A` = attention blocks, `I` = identity blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StageKind {
    C,
    A,
    I,
}

impl StageKind {
    pub fn spatial(self) -> SpatialKind {
        match self {
            Self::C => SpatialKind::SepConv,
            Self::A => SpatialKind::Attention,
            Self::I => SpatialKind::Identity,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Self::C => 'C',
            Self::A => 'A',
            Self::I => 'I',
        }
    }
}

impl FromStr for StageKind {
    type Err = S2cError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" | "c" | "sepconv" | "conv" => Ok(Self::C),
            "A" | "a" | "attention" => Ok(Self::A),
            "I" | "i" | "identity" => Ok(Self::I),
            other => Err(S2cError::Config(format!("invalid stage kind {other:?}"))),
        }
    }
}

impl TryFrom<String> for StageKind {
    type Error = S2cError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StageKind> for String {
    fn from(k: StageKind) -> String {
        k.letter().to_string()
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub kind: StageKind,
    pub blocks: usize,
    pub channels: usize,
}

impl StageSpec {
    pub const fn new(kind: StageKind, blocks: usize, channels: usize) -> Self {
        Self {
            kind,
            blocks,
            channels,
        }
    }
}

/// Everything needed to shape one residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub spatial: SpatialKind,
    pub ffn: FfnKind,
    /// `false` drops the FFN sub-block entirely ("without channel aggregation").
    pub channel_aggregation: bool,
    pub channels: usize,
    pub window_size: usize,
    pub dw_kernel: usize,
    pub expansion_ratio: usize,
    pub heads: usize,
}

impl BlockSpec {
    pub fn new(spatial: SpatialKind, ffn: FfnKind, channels: usize) -> Self {
        Self {
            spatial,
            ffn,
            channel_aggregation: true,
            channels,
            window_size: 8,
            dw_kernel: 5,
            expansion_ratio: 4,
            heads: (channels / 32).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(S2cError::Config(msg));
        if self.channels == 0 || self.window_size == 0 || self.expansion_ratio == 0 {
            return bad(format!("block sizes must be positive: {self:?}"));
        }
        if self.dw_kernel % 2 == 0 {
            return bad(format!("depthwise kernel must be odd, got {}", self.dw_kernel));
        }
        if self.spatial == SpatialKind::Attention
            && (self.heads == 0 || self.channels % self.heads != 0)
        {
            return bad(format!(
                "{} channels not divisible by {} heads",
                self.channels, self.heads
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn hidden(&self) -> usize {
        self.channels * self.expansion_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    HyperpriorOnly,
    Scctx,
}

/// How `Q` is relaxed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMode {
    /// Uniform noise on the rate path, straight-through rounding for the decoder.
    NoiseAndSte,
    /// Uniform noise on both paths.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    pub context_mode: ContextMode,
    /// Channel widths of the sequentially coded groups; must sum to the latent width.
    pub group_widths: Vec<usize>,
    pub checkerboard: bool,
    pub hyper_channels: usize,
    /// Width of the context-mining and parameter-aggregation networks.
    pub context_channels: usize,
    pub context_blocks: usize,
    pub aggregation_blocks: usize,
    pub quantizer: QuantizerMode,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            context_mode: ContextMode::Scctx,
            group_widths: vec![16, 16, 32, 64, 192],
            checkerboard: true,
            hyper_channels: 192,
            context_channels: 192,
            context_blocks: 1,
            aggregation_blocks: 1,
            quantizer: QuantizerMode::NoiseAndSte,
        }
    }
}

impl EntropyConfig {
    pub fn num_channel_groups(&self) -> usize {
        self.group_widths.len()
    }

    /// Uneven split of `channels` mirroring the default 16/16/32/64/192 shape.
    pub fn uneven_groups(channels: usize) -> Vec<usize> {
        if channels < 20 {
            return vec![channels];
        }
        let a = channels / 20;
        let b = a;
        let c = channels / 10;
        let d = channels / 5;
        vec![a, b, c, d, channels - a - b - c - d]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant_name: String,
    /// Stages at H/4, H/8 and H/16.
    pub main_stages: Vec<StageSpec>,
    pub latent_channels: usize,
    /// Block stacks inside the hyper analysis and hyper synthesis transforms.
    pub hyper_stages: Vec<StageSpec>,
    pub ffn: FfnKind,
    #[serde(default = "default_true")]
    pub channel_aggregation: bool,
    #[serde(default = "default_window")]
    pub window_size: usize,
    #[serde(default = "default_dw_kernel")]
    pub dw_kernel: usize,
    #[serde(default = "default_expansion")]
    pub expansion_ratio: usize,
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    #[serde(default)]
    pub entropy: EntropyConfig,
}

fn default_true() -> bool {
    true
}
fn default_window() -> usize {
    8
}
fn default_dw_kernel() -> usize {
    5
}
fn default_expansion() -> usize {
    4
}
fn default_head_dim() -> usize {
    32
}

/// Input sides must be multiples of this (16x main, 4x hyper).
pub const SIZE_MULTIPLE: usize = 64;

pub const PRESET_NAMES: &[&str] = &[
    "s2c-identity",
    "s2c-conv",
    "s2c-attention",
    "hybrid-s",
    "hybrid-m",
    "hybrid-l",
    "hybrid-t",
    "arrangement-ccc",
    "arrangement-aaa",
    "arrangement-acc",
    "arrangement-cca",
    "arrangement-caa",
    "desk",
];

impl ModelConfig {
    fn standard(name: &str, kinds: [StageKind; 3], blocks: [usize; 3]) -> Self {
        let widths = [192, 192, 192];
        Self {
            variant_name: name.to_string(),
            main_stages: (0..3)
                .map(|i| StageSpec::new(kinds[i], blocks[i], widths[i]))
                .collect(),
            latent_channels: 320,
            hyper_stages: vec![
                StageSpec::new(StageKind::C, 1, 192),
                StageSpec::new(StageKind::C, 1, 192),
            ],
            ffn: FfnKind::Gated,
            channel_aggregation: true,
            window_size: 8,
            dw_kernel: 5,
            expansion_ratio: 4,
            head_dim: 32,
            entropy: EntropyConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        use StageKind::{A, C, I};
        let cfg = match name {
            "s2c-identity" | "identity" => Self::standard("s2c-identity", [I, I, I], [3, 3, 3]),
            "s2c-conv" | "conv" => Self::standard("s2c-conv", [C, C, C], [3, 3, 3]),
            "s2c-attention" | "attention" => {
                Self::standard("s2c-attention", [A, A, A], [3, 3, 3])
            }
            "hybrid-s" => Self::standard("hybrid-s", [C, A, A], [3, 3, 3]),
            "hybrid-m" => Self::standard("hybrid-m", [C, A, A], [3, 5, 5]),
            "hybrid-l" => Self::standard("hybrid-l", [C, A, A], [3, 8, 8]),
            "hybrid-t" => {
                let mut c = Self::standard("hybrid-t", [C, A, A], [3, 5, 8]);
                for (s, w) in c.main_stages.iter_mut().zip([96, 192, 256]) {
                    s.channels = w;
                }
                c
            }
            "arrangement-ccc" => Self::standard(name, [C, C, C], [3, 3, 3]),
            "arrangement-aaa" => Self::standard(name, [A, A, A], [3, 3, 3]),
            "arrangement-acc" => Self::standard(name, [A, C, C], [3, 3, 3]),
            "arrangement-cca" => Self::standard(name, [C, C, A], [3, 3, 3]),
            "arrangement-caa" => Self::standard(name, [C, A, A], [3, 3, 3]),
            "desk" => Self::desk(),
            other => {
                return Err(S2cError::Config(format!(
                    "unknown preset {other:?}; known presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Narrow Hybrid-S shaped model that trains at CPU speed.
    fn desk() -> Self {
        use StageKind::{A, C};
        Self {
            variant_name: "desk".into(),
            main_stages: vec![
                StageSpec::new(C, 1, 32),
                StageSpec::new(A, 1, 48),
                StageSpec::new(A, 1, 64),
            ],
            latent_channels: 64,
            hyper_stages: vec![StageSpec::new(C, 1, 32), StageSpec::new(C, 1, 32)],
            ffn: FfnKind::Gated,
            channel_aggregation: true,
            window_size: 8,
            dw_kernel: 5,
            expansion_ratio: 2,
            head_dim: 16,
            entropy: EntropyConfig {
                group_widths: vec![4, 4, 8, 16, 32],
                hyper_channels: 32,
                context_channels: 32,
                ..EntropyConfig::default()
            },
        }
    }

    /// Stable one-byte id written into bitstream headers.
    pub fn variant_id(&self) -> u8 {
        PRESET_NAMES
            .iter()
            .position(|n| *n == self.variant_name)
            .map_or(255, |i| i as u8 + 1)
    }

    pub fn arrangement(&self) -> String {
        self.main_stages.iter().map(|s| s.kind.letter()).collect()
    }

    pub fn block_spec(&self, stage: &StageSpec) -> BlockSpec {
        let mut spec = BlockSpec::new(stage.kind.spatial(), self.ffn, stage.channels);
        spec.channel_aggregation = self.channel_aggregation;
        spec.window_size = self.window_size;
        spec.dw_kernel = self.dw_kernel;
        spec.expansion_ratio = self.expansion_ratio;
        spec.heads = (stage.channels / self.head_dim.max(1)).max(1);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(S2cError::Config(msg));
        if self.main_stages.len() != 3 {
            return bad(format!("expected 3 main stages, got {}", self.main_stages.len()));
        }
        if self.hyper_stages.len() != 2 {
            return bad(format!("expected 2 hyper stages, got {}", self.hyper_stages.len()));
        }
        if self.latent_channels == 0 || self.entropy.hyper_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        for stage in self.main_stages.iter().chain(&self.hyper_stages) {
            if stage.channels == 0 {
                return bad(format!("stage {stage:?} has zero channels"));
            }
            self.block_spec(stage).validate()?;
        }
        let e = &self.entropy;
        if e.group_widths.is_empty() || e.group_widths.contains(&0) {
            return bad(format!("invalid group widths {:?}", e.group_widths));
        }
        let total: usize = e.group_widths.iter().sum();
        if total != self.latent_channels {
            return bad(format!(
                "group widths {:?} sum to {total}, latent has {} channels",
                e.group_widths, self.latent_channels
            ));
        }
        if e.context_mode == ContextMode::Scctx && e.context_channels == 0 {
            return bad("context_channels must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| S2cError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("model config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| S2cError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip_through_toml() {
        for name in PRESET_NAMES {
            let cfg = ModelConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ModelConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg);
            assert_ne!(cfg.variant_id(), 255);
        }
    }

    #[test]
    fn standard_preset_shapes() {
        let widths = |c: &ModelConfig| -> Vec<usize> {
            let mut v: Vec<usize> = c.main_stages.iter().map(|s| s.channels).collect();
            v.push(c.latent_channels);
            v
        };
        let blocks = |c: &ModelConfig| -> Vec<usize> { c.main_stages.iter().map(|s| s.blocks).collect() };
        for name in ["s2c-identity", "s2c-conv", "s2c-attention", "hybrid-s"] {
            assert_eq!(widths(&ModelConfig::preset(name).unwrap()), [192, 192, 192, 320]);
        }
        assert_eq!(ModelConfig::preset("s2c-identity").unwrap().arrangement(), "III");
        assert_eq!(ModelConfig::preset("hybrid-s").unwrap().arrangement(), "CAA");
        assert_eq!(blocks(&ModelConfig::preset("hybrid-s").unwrap()), [3, 3, 3]);
        assert_eq!(blocks(&ModelConfig::preset("hybrid-m").unwrap()), [3, 5, 5]);
        assert_eq!(blocks(&ModelConfig::preset("hybrid-l").unwrap()), [3, 8, 8]);
        let t = ModelConfig::preset("hybrid-t").unwrap();
        assert_eq!(widths(&t), [96, 192, 256, 320]);
        assert_eq!(blocks(&t), [3, 5, 8]);
        for (name, arr) in [
            ("arrangement-ccc", "CCC"),
            ("arrangement-aaa", "AAA"),
            ("arrangement-acc", "ACC"),
            ("arrangement-cca", "CCA"),
            ("arrangement-caa", "CAA"),
        ] {
            assert_eq!(ModelConfig::preset(name).unwrap().arrangement(), arr);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::preset("foo").is_err());
        assert!("X".parse::<StageKind>().is_err());
        assert!("swiglu".parse::<FfnKind>().is_err());
        let mut c = ModelConfig::preset("hybrid-s").unwrap();
        c.entropy.group_widths = vec![16, 16];
        assert!(c.validate().is_err());
        let mut spec = BlockSpec::new(SpatialKind::Attention, FfnKind::Gated, 30);
        spec.heads = 4;
        assert!(spec.validate().is_err());
        spec.heads = 3;
        spec.dw_kernel = 4;
        assert!(spec.validate().is_err());
        let text = ModelConfig::preset("hybrid-s")
            .unwrap()
            .to_toml_string()
            .replacen("kind = \"C\"", "kind = \"Q\"", 1);
        assert!(ModelConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn uneven_groups_partition() {
        assert_eq!(EntropyConfig::uneven_groups(320), vec![16, 16, 32, 64, 192]);
        for c in 1..200 {
            assert_eq!(EntropyConfig::uneven_groups(c).iter().sum::<usize>(), c);
        }
    }
}
