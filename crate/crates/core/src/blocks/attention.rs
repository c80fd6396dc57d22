//! Non-overlapping window multi-head self-attention.

use s2c_tensor::linalg::gemm;
use s2c_tensor::ops::Padding;
use s2c_tensor::{Tensor, Var};

use crate::config::BlockSpec;
use crate::error::Result;
use crate::layers::{expect_channels, Conv};
use crate::params::{Ctx, ParamBuilder, ParamStore};

/// Geometry shared by the forward and backward passes.
#[derive(Debug, Clone, Copy)]
struct Windows {
    head_dim: usize,
    window: usize,
    h: usize,
    w: usize,
}

impl Windows {
    fn tokens(&self) -> usize {
        self.window * self.window
    }

    fn count(&self) -> usize {
        (self.h / self.window) * (self.w / self.window)
    }

    /// Flat spatial offsets of every token of window `wi`, in raster order.
    fn positions(&self, wi: usize) -> Vec<usize> {
        let per_row = self.w / self.window;
        let (wy, wx) = (wi / per_row, wi % per_row);
        let mut pos = Vec::with_capacity(self.tokens());
        for ty in 0..self.window {
            for tx in 0..self.window {
                pos.push((wy * self.window + ty) * self.w + wx * self.window + tx);
            }
        }
        pos
    }

    /// Copy channels `[c0, c0 + head_dim)` at `pos` into a `[tokens, head_dim]` matrix.
    fn gather(&self, src: &[f64], c0: usize, pos: &[usize], dst: &mut [f64]) {
        let plane = self.h * self.w;
        let d = self.head_dim;
        for (t, &p) in pos.iter().enumerate() {
            for j in 0..d {
                dst[t * d + j] = src[(c0 + j) * plane + p];
            }
        }
    }

    fn scatter_add(&self, src: &[f64], c0: usize, pos: &[usize], dst: &mut [f64]) {
        let plane = self.h * self.w;
        let d = self.head_dim;
        for (t, &p) in pos.iter().enumerate() {
            for j in 0..d {
                dst[(c0 + j) * plane + p] += src[t * d + j];
            }
        }
    }
}

fn softmax_rows(s: &mut [f64], n: usize) {
    for row in s.chunks_mut(n) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Attention over `qkv = [Q; K; V]` stacked on the channel axis
/// (`[N, 3C, H, W]`, `H` and `W` multiples of `window`), returning `[N, C, H, W]`.
/// Head `h` owns channels `[h·d, (h+1)·d)` of each of Q, K and V.
pub fn window_attention(qkv: &Var, heads: usize, window: usize) -> Var {
    let (n, c3, h, w) = qkv.dims4();
    assert_eq!(c3 % 3, 0, "qkv channels must be a multiple of 3");
    let channels = c3 / 3;
    assert_eq!(channels % heads, 0, "channels not divisible by heads");
    assert!(h % window == 0 && w % window == 0, "input not tiled by windows");
    let geo = Windows {
        head_dim: channels / heads,
        window,
        h,
        w,
    };
    let (t, d, plane) = (geo.tokens(), geo.head_dim, h * w);
    let scale = 1.0 / (d as f64).sqrt();
    let src = qkv.value().data();

    let keep = qkv.requires_grad();
    let mut probs_saved = Vec::new();
    let mut out = vec![0.0; n * channels * plane];
    let (mut q, mut k, mut v) = (vec![0.0; t * d], vec![0.0; t * d], vec![0.0; t * d]);
    let mut s = vec![0.0; t * t];
    let mut o = vec![0.0; t * d];
    for b in 0..n {
        let xb = &src[b * c3 * plane..(b + 1) * c3 * plane];
        let ob = &mut out[b * channels * plane..(b + 1) * channels * plane];
        for wi in 0..geo.count() {
            let pos = geo.positions(wi);
            for hd in 0..heads {
                geo.gather(xb, hd * d, &pos, &mut q);
                geo.gather(xb, channels + hd * d, &pos, &mut k);
                geo.gather(xb, 2 * channels + hd * d, &pos, &mut v);
                gemm(false, true, t, t, d, scale, &q, &k, 0.0, &mut s);
                softmax_rows(&mut s, t);
                gemm(false, false, t, d, t, 1.0, &s, &v, 0.0, &mut o);
                geo.scatter_add(&o, hd * d, &pos, ob);
                if keep {
                    probs_saved.extend_from_slice(&s);
                }
            }
        }
    }
    let out = Tensor::from_vec(&[n, channels, h, w], out);
    if !keep {
        return Var::constant(out);
    }
    let input = qkv.value().clone();
    Var::from_op(out, vec![qkv.clone()], move |g, _| {
        let src = input.data();
        let gd = g.data();
        let mut dx = vec![0.0; src.len()];
        let (mut q, mut k, mut v) = (vec![0.0; t * d], vec![0.0; t * d], vec![0.0; t * d]);
        let mut dout = vec![0.0; t * d];
        let mut dp = vec![0.0; t * t];
        let (mut dq, mut dk, mut dv) = (vec![0.0; t * d], vec![0.0; t * d], vec![0.0; t * d]);
        let mut slot = 0;
        for b in 0..n {
            let xb = &src[b * c3 * plane..(b + 1) * c3 * plane];
            let gb = &gd[b * channels * plane..(b + 1) * channels * plane];
            let db = &mut dx[b * c3 * plane..(b + 1) * c3 * plane];
            for wi in 0..geo.count() {
                let pos = geo.positions(wi);
                for hd in 0..heads {
                    let p = &probs_saved[slot * t * t..(slot + 1) * t * t];
                    slot += 1;
                    geo.gather(xb, hd * d, &pos, &mut q);
                    geo.gather(xb, channels + hd * d, &pos, &mut k);
                    geo.gather(xb, 2 * channels + hd * d, &pos, &mut v);
                    geo.gather(gb, hd * d, &pos, &mut dout);
                    // dV = Pᵀ dO, dP = dO Vᵀ
                    gemm(true, false, t, d, t, 1.0, p, &dout, 0.0, &mut dv);
                    gemm(false, true, t, t, d, 1.0, &dout, &v, 0.0, &mut dp);
                    // dS = P ⊙ (dP − rowsum(dP ⊙ P)), scaled into the logits
                    for (prow, dprow) in p.chunks(t).zip(dp.chunks_mut(t)) {
                        let dot: f64 = prow.iter().zip(dprow.iter()).map(|(a, b)| a * b).sum();
                        for (dv_, pv) in dprow.iter_mut().zip(prow) {
                            *dv_ = pv * (*dv_ - dot) * scale;
                        }
                    }
                    gemm(false, false, t, d, t, 1.0, &dp, &k, 0.0, &mut dq);
                    gemm(true, false, t, d, t, 1.0, &dp, &q, 0.0, &mut dk);
                    geo.scatter_add(&dq, hd * d, &pos, db);
                    geo.scatter_add(&dk, channels + hd * d, &pos, db);
                    geo.scatter_add(&dv, 2 * channels + hd * d, &pos, db);
                }
            }
        }
        vec![Some(Tensor::from_vec(input.shape(), dx))]
    })
}

/// QKV projection, windowed attention and output projection, with reflect
/// padding up to a multiple of the window size.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub spec: BlockSpec,
    pub qkv: Conv,
    pub proj: Conv,
}

impl WindowAttention {
    pub fn new(pb: &mut ParamBuilder, spec: BlockSpec) -> Self {
        let c = spec.channels;
        Self {
            spec,
            qkv: Conv::pointwise(pb, "qkv", c, 3 * c),
            proj: Conv::pointwise(pb, "proj", c, c),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, self.spec.channels, "window attention")?;
        let (_, _, h, w) = x.dims4();
        let pad = Padding::to_multiple(h, w, self.spec.window_size);
        let qkv = self.qkv.forward(ctx, &x.pad_reflect(pad));
        let attended = window_attention(&qkv, self.spec.heads, self.spec.window_size).crop(0, 0, h, w);
        Ok(self.proj.forward(ctx, &attended))
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        self.qkv.check(store)?;
        self.proj.check(store)
    }

    /// Multiply-accumulates at `h × w` (window products counted on the padded grid).
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let ws = self.spec.window_size;
        let (ph, pw) = (h.next_multiple_of(ws), w.next_multiple_of(ws));
        let tokens = (ws * ws) as u64;
        let windows = ((ph / ws) * (pw / ws)) as u64;
        // QKᵀ and PV: 2·n²·C per window (all heads together).
        let attn = windows * 2 * tokens * tokens * self.spec.channels as u64;
        self.qkv.macs(ph, pw) + attn + self.proj.macs(h, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use s2c_tensor::ops::gradcheck::check_gradients;

    /// Dense per-window attention with explicit loops.
    fn reference(qkv: &Tensor, heads: usize, window: usize) -> Tensor {
        let (n, c3, h, w) = qkv.dims4();
        let c = c3 / 3;
        let d = c / heads;
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let (wy, wx) = (y / window * window, x / window * window);
                    for hd in 0..heads {
                        let mut logits = Vec::new();
                        for ky in wy..wy + window {
                            for kx in wx..wx + window {
                                let mut dot = 0.0;
                                for j in 0..d {
                                    dot += qkv.at4(b, hd * d + j, y, x) * qkv.at4(b, c + hd * d + j, ky, kx);
                                }
                                logits.push((dot / (d as f64).sqrt(), ky, kx));
                            }
                        }
                        let m = logits.iter().map(|l| l.0).fold(f64::MIN, f64::max);
                        let z: f64 = logits.iter().map(|l| (l.0 - m).exp()).sum();
                        for j in 0..d {
                            let mut acc = 0.0;
                            for &(l, ky, kx) in &logits {
                                acc += (l - m).exp() / z * qkv.at4(b, 2 * c + hd * d + j, ky, kx);
                            }
                            out.set4(b, hd * d + j, y, x, acc);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_loop_reference() {
        let qkv = Tensor::from_fn(&[2, 12, 8, 12], |i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0);
        for (heads, window) in [(1, 4), (2, 4), (4, 2)] {
            let got = window_attention(&Var::constant(qkv.clone()), heads, window);
            let want = reference(&qkv, heads, window);
            for (a, b) in got.value().data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients() {
        let qkv = Tensor::from_fn(&[1, 6, 4, 4], |i| (i as f64 * 0.37).sin());
        let probe = Tensor::from_fn(&[1, 2, 4, 4], |i| (i as f64 * 0.11).cos());
        check_gradients(
            &[qkv],
            |v| window_attention(&v[0], 2, 2).mul_const(&probe).sum(),
            1e-6,
        );
    }
}
