//! Effective receptive fields: how strongly each input pixel moves one
//! central output position, plus the exact reach of a layer stack computed
//! by interval arithmetic.

use std::path::Path;

use serde::Serialize;
use s2c_tensor::ops::reflect_index;
use s2c_tensor::{Tensor, Var};

use crate::blocks::{BlockStack, Spatial};
use crate::error::{Result, S2cError};
use crate::layers::Conv;
use crate::model::Model;
use crate::transforms::Analysis;

pub const MIN_PROBES: usize = 8;

/// Spatial footprint of one layer along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReachOp {
    /// Zero-padded convolution.
    Conv { kernel: usize, stride: usize, padding: usize },
    /// Non-overlapping windows with reflect padding up to a multiple of `size`.
    Window { size: usize },
}

impl ReachOp {
    fn of_conv(c: &Conv) -> Self {
        Self::Conv {
            kernel: c.kernel,
            stride: c.opts.stride,
            padding: c.opts.padding,
        }
    }

    fn output_len(self, n: usize) -> usize {
        match self {
            Self::Conv { kernel, stride, padding } => (n + 2 * padding - kernel) / stride + 1,
            Self::Window { .. } => n,
        }
    }

    /// Input positions feeding outputs `[lo, hi]` of a layer with input length `n`.
    fn back(self, (lo, hi): (usize, usize), n: usize) -> (usize, usize) {
        match self {
            Self::Conv { kernel, stride, padding } => {
                let a = (lo * stride).saturating_sub(padding);
                let b = (hi * stride + kernel - 1).saturating_sub(padding).min(n - 1);
                (a, b)
            }
            Self::Window { size } => {
                let start = lo / size * size;
                let end = (hi / size + 1) * size;
                (start..end).map(|i| reflect_index(i as isize, n)).fold((usize::MAX, 0), |(a, b), j| (a.min(j), b.max(j)))
            }
        }
    }
}

fn stack_ops(stack: &BlockStack, out: &mut Vec<ReachOp>) {
    for b in &stack.blocks {
        match &b.spatial {
            Spatial::Identity => {}
            Spatial::SepConv(op) => out.push(ReachOp::of_conv(&op.dw)),
            Spatial::Attention(op) => out.push(ReachOp::Window {
                size: op.spec.window_size,
            }),
        }
    }
}

/// Per-axis footprint of the analysis transform in execution order.
/// Position-wise parts (norms, FFNs, 1×1 convs) do not widen the reach and
/// residual paths only add a subset of it.
pub fn analysis_reach(g_a: &Analysis) -> Vec<ReachOp> {
    let mut ops = vec![ReachOp::of_conv(&g_a.down[0]), ReachOp::of_conv(&g_a.down[1])];
    stack_ops(&g_a.stages[0], &mut ops);
    ops.push(ReachOp::of_conv(&g_a.down[2]));
    stack_ops(&g_a.stages[1], &mut ops);
    ops.push(ReachOp::of_conv(&g_a.down[3]));
    stack_ops(&g_a.stages[2], &mut ops);
    ops
}

/// Inclusive range of input positions that can influence output `index`
/// along an axis of length `input_len`.
pub fn reach_interval(ops: &[ReachOp], input_len: usize, index: usize) -> (usize, usize) {
    let mut lens = vec![input_len];
    for op in ops {
        lens.push(op.output_len(*lens.last().expect("non-empty")));
    }
    assert!(index < lens[ops.len()], "output index {index} out of range");
    ops.iter()
        .zip(&lens)
        .rev()
        .fold((index, index), |iv, (op, &n)| op.back(iv, n))
}

#[derive(Debug, Clone)]
pub struct ErfMap {
    /// `[H, W]`, non-negative, maximum exactly 1.
    pub grid: Tensor,
    /// Output position the gradients were taken at.
    pub center: (usize, usize),
    pub probes: usize,
}

/// Inclusive `(top, bottom, left, right)` box of the nonzero entries.
pub type SupportBox = (usize, usize, usize, usize);

impl ErfMap {
    fn dims(&self) -> (usize, usize) {
        (self.grid.shape()[0], self.grid.shape()[1])
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.grid.data()[r * self.dims().1 + c]
    }

    pub fn support_box(&self) -> Option<SupportBox> {
        let (h, w) = self.dims();
        let mut b: Option<SupportBox> = None;
        for r in 0..h {
            for c in 0..w {
                if self.at(r, c) != 0.0 {
                    b = Some(match b {
                        None => (r, r, c, c),
                        Some((t, bo, l, ri)) => (t.min(r), bo.max(r), l.min(c), ri.max(c)),
                    });
                }
            }
        }
        b
    }

    /// Grayscale heatmap, brightest at the maximum.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (h, w) = self.dims();
        let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([(self.at(y as usize, x as usize) * 255.0).round() as u8])
        });
        img.save(path).map_err(|e| S2cError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| S2cError::Data(format!("{}: {e}", path.display()));
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(err)?;
        let (_, w) = self.dims();
        for row in self.grid.data().chunks(w) {
            wtr.write_record(row.iter().map(|v| format!("{v:.6e}"))).map_err(err)?;
        }
        wtr.flush().map_err(|e| S2cError::io(path, e))
    }
}

/// Mean over probes of `|∂ Σ_c f(x)[c, center] / ∂x|` summed over input
/// channels, normalized to a maximum of 1. `probes` is `[N, 3, H, W]` with
/// `N ≥ 8`; the default center is the middle of the output grid.
pub fn effective_receptive_field(
    f: impl Fn(&Var) -> Result<Var>,
    probes: &Tensor,
    center: Option<(usize, usize)>,
) -> Result<ErfMap> {
    let (n, c, h, w) = probes.dims4();
    if n < MIN_PROBES {
        return Err(S2cError::InvalidArgument(format!(
            "ERF needs at least {MIN_PROBES} probe images, got {n}"
        )));
    }
    let x = Var::leaf(probes.clone(), true);
    let out = f(&x)?;
    let (on, oc, oh, ow) = out.dims4();
    let (cy, cx) = center.unwrap_or((oh / 2, ow / 2));
    if cy >= oh || cx >= ow {
        return Err(S2cError::InvalidArgument(format!(
            "center ({cy}, {cx}) outside the {oh}x{ow} output"
        )));
    }
    let mut mask = Tensor::zeros(&[on, oc, oh, ow]);
    for b in 0..on {
        for ch in 0..oc {
            mask.set4(b, ch, cy, cx, 1.0);
        }
    }
    let grads = out.mul_const(&mask).sum().backward();
    let g = grads
        .get(&x)
        .ok_or_else(|| S2cError::InvalidArgument("output does not depend on the input".into()))?;
    let mut grid = Tensor::zeros(&[h, w]);
    let gd = grid.data_mut();
    for b in 0..n {
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    gd[r * w + col] += g.at4(b, ch, r, col).abs() / n as f64;
                }
            }
        }
    }
    let max = grid.max_abs();
    if !(max > 0.0 && max.is_finite()) {
        return Err(S2cError::InvalidArgument(
            "input gradient is zero or non-finite; configuration is not differentiable here".into(),
        ));
    }
    Ok(ErfMap {
        grid: grid.map(|v| v / max),
        center: (cy, cx),
        probes: n,
    })
}

/// ERF of the analysis transform's latent center.
pub fn encoder_erf(model: &Model, probes: &Tensor) -> Result<ErfMap> {
    let ctx = model.params.bind(false);
    effective_receptive_field(|x| model.g_a.forward(&ctx, x), probes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, StageKind};
    use crate::testutil::{image, tiny};

    fn probes(side: usize) -> Tensor {
        let imgs: Vec<Tensor> = (0..8).map(|i| image(1, side, side, 40 + i)).collect();
        Tensor::stack_batch(&imgs)
    }

    fn without_ca(mut cfg: ModelConfig) -> ModelConfig {
        cfg.channel_aggregation = false;
        cfg
    }

    fn reach_box(model: &Model, side: usize, center: (usize, usize)) -> SupportBox {
        let ops = analysis_reach(&model.g_a);
        let (t, b) = reach_interval(&ops, side, center.0);
        let (l, r) = reach_interval(&ops, side, center.1);
        (t, b, l, r)
    }

    #[test]
    fn conv_reach_by_hand() {
        let k5s2 = ReachOp::Conv { kernel: 5, stride: 2, padding: 2 };
        // one stride-2 5×5 layer: output 3 sees inputs 4..=8
        assert_eq!(reach_interval(&[k5s2], 16, 3), (4, 8));
        // two layers: 3 → 4..=8 → 6..=18, clipped at the border
        assert_eq!(reach_interval(&[k5s2, k5s2], 32, 3), (6, 18));
        assert_eq!(reach_interval(&[k5s2, k5s2], 32, 0), (0, 6));
        let win = ReachOp::Window { size: 4 };
        assert_eq!(reach_interval(&[win], 16, 5), (4, 7));
        // last window of a 6-long axis pads with reflections of 4 and 3
        assert_eq!(reach_interval(&[win], 6, 5), (3, 5));
    }

    /// Strided convs, norms and identity blocks only: the gradient vanishes
    /// exactly outside the reach box and fills it.
    #[test]
    fn strided_baseline_support_is_exact() {
        let model = Model::new(without_ca(tiny([StageKind::I; 3])), 1).unwrap();
        let erf = encoder_erf(&model, &probes(128)).unwrap();
        assert_eq!(erf.support_box(), Some(reach_box(&model, 128, erf.center)));
        assert!(erf.grid.data().iter().all(|&v| v >= 0.0));
        assert_eq!(erf.grid.data().iter().copied().fold(0.0, f64::max), 1.0);
        let again = encoder_erf(&model, &probes(128)).unwrap();
        assert_eq!(again.grid, erf.grid);
    }

    #[test]
    fn channel_aggregation_never_shrinks_support() {
        for kinds in [[StageKind::I; 3], [StageKind::C, StageKind::A, StageKind::A]] {
            let plain = Model::new(without_ca(tiny(kinds)), 2).unwrap();
            let full = Model::new(tiny(kinds), 2).unwrap();
            let a = encoder_erf(&plain, &probes(128)).unwrap();
            let b = encoder_erf(&full, &probes(128)).unwrap();
            for (x, y) in a.grid.data().iter().zip(b.grid.data()) {
                assert!(*x == 0.0 || *y != 0.0, "support lost with FFNs ({kinds:?})");
            }
        }
    }

    #[test]
    fn window_reach_matches_measured_support() {
        // aligned windows at 128², and reflect-padded ones (window 8 over a 4-wide last stage) at 64²
        for (side, window) in [(128, 4), (64, 8)] {
            let mut cfg = without_ca(tiny([StageKind::A; 3]));
            cfg.window_size = window;
            let model = Model::new(cfg, 3).unwrap();
            let erf = encoder_erf(&model, &probes(side)).unwrap();
            assert_eq!(erf.support_box(), Some(reach_box(&model, side, erf.center)), "side {side}");
        }
    }

    #[test]
    fn needs_eight_probes() {
        let model = Model::new(tiny([StageKind::I; 3]), 0).unwrap();
        let few = probes(64).narrow_batch(0, 7);
        assert!(matches!(encoder_erf(&model, &few), Err(S2cError::InvalidArgument(_))));
    }

    #[test]
    fn outputs() {
        let model = Model::new(tiny([StageKind::I; 3]), 0).unwrap();
        let erf = encoder_erf(&model, &probes(64)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        erf.save_png(&dir.path().join("erf.png")).unwrap();
        erf.save_csv(&dir.path().join("erf.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("erf.csv")).unwrap();
        assert_eq!(text.lines().count(), 64);
        assert_eq!(image::open(dir.path().join("erf.png")).unwrap().width(), 64);
    }
}
