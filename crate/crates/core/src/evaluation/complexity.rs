//! Parameter and FLOP accounting. FLOPs are `2 ×` multiply-accumulates,
//! counted analytically per layer (biases, norms and activations excluded).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::blocks::BlockStack;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Complexity {
    pub params: usize,
    /// Parameter count per top-level module (`g_a`, `g_s`, `h_a`, `h_s`, `prior`, `context`).
    pub params_by_module: BTreeMap<String, usize>,
    pub flops: u64,
    /// Spatial-interaction and channel-aggregation FLOPs inside the block
    /// stacks of the analysis and synthesis transforms.
    pub spatial_flops: u64,
    pub channel_flops: u64,
}

fn split(stack: &BlockStack, h: usize, w: usize) -> (u64, u64) {
    stack
        .blocks
        .iter()
        .fold((0, 0), |(s, c), b| (s + b.spatial_macs(h, w), c + b.channel_macs(h, w)))
}

/// Counts for one forward pass at input size `h × w`.
pub fn count_params_flops(model: &Model, h: usize, w: usize) -> Complexity {
    let params_by_module = ["g_a", "g_s", "h_a", "h_s", "prior", "context"]
        .iter()
        .map(|m| (m.to_string(), model.params.numel_under(&format!("{m}."))))
        .collect();
    let mut parts = Vec::new();
    for (i, div) in [4, 8, 16].into_iter().enumerate() {
        parts.push(split(&model.g_a.stages[i], h / div, w / div));
    }
    for (i, div) in [16, 8, 4].into_iter().enumerate() {
        parts.push(split(&model.g_s.stages[i], h / div, w / div));
    }
    let (spatial, channel) = parts.iter().fold((0, 0), |(s, c), (a, b)| (s + a, c + b));
    Complexity {
        params: model.num_params(),
        params_by_module,
        flops: 2 * model.macs(h, w),
        spatial_flops: 2 * spatial,
        channel_flops: 2 * channel,
    }
}
