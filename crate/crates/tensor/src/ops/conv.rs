//! 2-D convolution, grouped/depthwise convolution and transposed
//! convolution on NCHW tensors. Square kernels, symmetric zero padding.

use crate::linalg::gemm;
use crate::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOpts {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dOpts {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv2dOpts {
    pub fn same(kernel: usize) -> Self {
        Self {
            padding: kernel / 2,
            ..Self::default()
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// Output extent of a strided window sweep.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    assert!(
        input + 2 * padding >= kernel,
        "kernel {kernel} larger than padded input {input}+2*{padding}"
    );
    (input + 2 * padding - kernel) / stride + 1
}

pub fn conv_transpose_out_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> usize {
    (input - 1) * stride + kernel + output_padding - 2 * padding
}

/// Geometry of one sweep: an image of `channels × h × w` visited by a
/// `k × k` window on an `oh × ow` grid.
#[derive(Debug, Clone, Copy)]
struct Sweep {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Sweep {
    /// Range of output columns `ox` for which `ox*stride + kw - pad` lies in `[0, w)`.
    fn valid_cols(&self, kw: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kw >= self.pad {
            0
        } else {
            (self.pad - kw).div_ceil(s)
        };
        let hi = if self.w + self.pad > kw {
            ((self.w + self.pad - kw - 1) / s + 1).min(self.ow)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn input_row(&self, oy: usize, kh: usize) -> Option<usize> {
        let iy = (oy * self.stride + kh) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }

    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }


    fn im2col(&self, img: &[f64], col: &mut [f64]) {
        let (k, s, plane) = (self.k, self.stride, self.oh * self.ow);
        for c in 0..self.channels {
            let src = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kw);
                    for oy in 0..self.oh {
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let Some(iy) = self.input_row(oy, kh) else {
                            line.fill(0.0);
                            continue;
                        };
                        line[..lo].fill(0.0);
                        line[hi..].fill(0.0);
                        let base = iy * self.w;
                        if lo == hi {
                            continue;
                        }
                        if s == 1 {
                            let ix0 = lo + kw - self.pad;
                            line[lo..hi].copy_from_slice(&src[base + ix0..base + ix0 + (hi - lo)]);
                        } else {
                            for (ox, v) in line.iter_mut().enumerate().take(hi).skip(lo) {
                                *v = src[base + ox * s + kw - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add the columns back into the image (adjoint of `im2col`).
    fn col2im(&self, col: &[f64], img: &mut [f64]) {
        let (k, s, plane) = (self.k, self.stride, self.oh * self.ow);
        for c in 0..self.channels {
            let dst = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let src = &col[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kw);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..self.oh {
                        let Some(iy) = self.input_row(oy, kh) else {
                            continue;
                        };
                        let line = &src[oy * self.ow..(oy + 1) * self.ow];
                        let base = iy * self.w;
                        if s == 1 {
                            let ix0 = base + lo + kw - self.pad;
                            for (d, v) in dst[ix0..ix0 + (hi - lo)].iter_mut().zip(&line[lo..hi]) {
                                *d += v;
                            }
                        } else {
                            for (ox, v) in line.iter().enumerate().take(hi).skip(lo) {
                                dst[base + ox * s + kw - self.pad] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Depthwise correlation of one channel: `out += w ⋆ img`.
    fn depthwise_forward(&self, img: &[f64], kernel: &[f64], out: &mut [f64]) {
        let (k, s) = (self.k, self.stride);
        for kh in 0..k {
            for kw in 0..k {
                let wv = kernel[kh * k + kw];
                let (lo, hi) = self.valid_cols(kw);
                if lo == hi {
                    continue;
                }
                for oy in 0..self.oh {
                    let Some(iy) = self.input_row(oy, kh) else {
                        continue;
                    };
                    let line = &mut out[oy * self.ow..(oy + 1) * self.ow];
                    let base = iy * self.w;
                    if s == 1 {
                        let ix0 = base + lo + kw - self.pad;
                        for (o, x) in line[lo..hi].iter_mut().zip(&img[ix0..ix0 + (hi - lo)]) {
                            *o += wv * x;
                        }
                    } else {
                        for (ox, o) in line.iter_mut().enumerate().take(hi).skip(lo) {
                            *o += wv * img[base + ox * s + kw - self.pad];
                        }
                    }
                }
            }
        }
    }

    fn depthwise_backward(
        &self,
        img: &[f64],
        kernel: &[f64],
        dout: &[f64],
        dimg: Option<&mut [f64]>,
        dkernel: Option<&mut [f64]>,
    ) {
        let (k, s) = (self.k, self.stride);
        let mut dimg = dimg;
        let mut dkernel = dkernel;
        for kh in 0..k {
            for kw in 0..k {
                let wv = kernel[kh * k + kw];
                let (lo, hi) = self.valid_cols(kw);
                let mut acc = 0.0;
                for oy in 0..self.oh {
                    let Some(iy) = self.input_row(oy, kh) else {
                        continue;
                    };
                    let line = &dout[oy * self.ow..(oy + 1) * self.ow];
                    let base = iy * self.w;
                    for ox in lo..hi {
                        let ix = base + ox * s + kw - self.pad;
                        let g = line[ox];
                        if let Some(d) = dimg.as_deref_mut() {
                            d[ix] += wv * g;
                        }
                        acc += g * img[ix];
                    }
                }
                if let Some(dk) = dkernel.as_deref_mut() {
                    dk[kh * k + kw] += acc;
                }
            }
        }
    }
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[c % bias.len()];
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad(g: &Tensor) -> Tensor {
    let (n, c, h, w) = g.dims4();
    let plane = h * w;
    let mut out = vec![0.0; c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let base = (b * c + ch) * plane;
            *o += g.data()[base..base + plane].iter().sum::<f64>();
        }
    }
    Tensor::from_vec(&[c], out)
}

struct ConvPlan {
    n: usize,
    cin: usize,
    cout: usize,
    groups: usize,
    sweep: Sweep,
}

impl ConvPlan {
    fn new(x: &Tensor, w: &Tensor, opts: Conv2dOpts) -> Self {
        let (n, cin, h, wd) = x.dims4();
        assert_eq!(w.ndim(), 4, "conv weight must be 4-D");
        let (cout, cin_g, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        assert_eq!(k, k2, "only square kernels are supported");
        let groups = opts.groups.max(1);
        assert!(
            cin % groups == 0 && cout % groups == 0 && cin / groups == cin_g,
            "conv channel mismatch: input {cin}, weight {:?}, groups {groups}",
            w.shape()
        );
        let oh = conv_out_len(h, k, opts.stride, opts.padding);
        let ow = conv_out_len(wd, k, opts.stride, opts.padding);
        Self {
            n,
            cin,
            cout,
            groups,
            sweep: Sweep {
                channels: cin_g,
                h,
                w: wd,
                k,
                stride: opts.stride,
                pad: opts.padding,
                oh,
                ow,
            },
        }
    }

    fn depthwise(&self) -> bool {
        self.groups == self.cin && self.groups == self.cout
    }

    fn pointwise(&self) -> bool {
        let s = &self.sweep;
        s.k == 1 && s.stride == 1 && s.pad == 0
    }

    fn forward(&self, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
        let s = self.sweep;
        let (in_plane, out_plane) = (s.h * s.w, s.oh * s.ow);
        let cout_g = self.cout / self.groups;
        let kk = s.col_rows();
        let mut out = vec![0.0; self.n * self.cout * out_plane];
        let mut col = if self.depthwise() || self.pointwise() {
            Vec::new()
        } else {
            vec![0.0; kk * out_plane]
        };
        for b in 0..self.n {
            let xb = &x[b * self.cin * in_plane..(b + 1) * self.cin * in_plane];
            let ob = &mut out[b * self.cout * out_plane..(b + 1) * self.cout * out_plane];
            if self.depthwise() {
                for c in 0..self.cin {
                    s.depthwise_forward(
                        &xb[c * in_plane..(c + 1) * in_plane],
                        &w[c * s.k * s.k..(c + 1) * s.k * s.k],
                        &mut ob[c * out_plane..(c + 1) * out_plane],
                    );
                }
            } else {
                for g in 0..self.groups {
                    let xg = &xb[g * s.channels * in_plane..(g + 1) * s.channels * in_plane];
                    let wg = &w[g * cout_g * kk..(g + 1) * cout_g * kk];
                    let og = &mut ob[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
                    let cols: &[f64] = if self.pointwise() {
                        xg
                    } else {
                        s.im2col(xg, &mut col);
                        &col
                    };
                    gemm(false, false, cout_g, out_plane, kk, 1.0, wg, cols, 0.0, og);
                }
            }
            if let Some(bias) = bias {
                add_channel_bias(ob, bias, out_plane);
            }
        }
        out
    }

    /// Returns `(dx, dw)`; either may be skipped.
    fn backward(
        &self,
        x: &[f64],
        w: &[f64],
        dy: &[f64],
        want_dx: bool,
        want_dw: bool,
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let s = self.sweep;
        let (in_plane, out_plane) = (s.h * s.w, s.oh * s.ow);
        let cout_g = self.cout / self.groups;
        let kk = s.col_rows();
        let mut dx = want_dx.then(|| vec![0.0; self.n * self.cin * in_plane]);
        let mut dw = want_dw.then(|| vec![0.0; w.len()]);
        let dense = !self.depthwise() && !self.pointwise();
        let mut col = if dense { vec![0.0; kk * out_plane] } else { Vec::new() };
        let mut dcol = if dense && want_dx {
            vec![0.0; kk * out_plane]
        } else {
            Vec::new()
        };
        for b in 0..self.n {
            let xb = &x[b * self.cin * in_plane..(b + 1) * self.cin * in_plane];
            let dyb = &dy[b * self.cout * out_plane..(b + 1) * self.cout * out_plane];
            if self.depthwise() {
                for c in 0..self.cin {
                    let dimg = dx
                        .as_mut()
                        .map(|d| &mut d[(b * self.cin + c) * in_plane..(b * self.cin + c + 1) * in_plane]);
                    let dker = dw.as_mut().map(|d| &mut d[c * s.k * s.k..(c + 1) * s.k * s.k]);
                    s.depthwise_backward(
                        &xb[c * in_plane..(c + 1) * in_plane],
                        &w[c * s.k * s.k..(c + 1) * s.k * s.k],
                        &dyb[c * out_plane..(c + 1) * out_plane],
                        dimg,
                        dker,
                    );
                }
                continue;
            }
            for g in 0..self.groups {
                let xg = &xb[g * s.channels * in_plane..(g + 1) * s.channels * in_plane];
                let wg = &w[g * cout_g * kk..(g + 1) * cout_g * kk];
                let dyg = &dyb[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
                if let Some(dw) = dw.as_mut() {
                    let cols: &[f64] = if self.pointwise() {
                        xg
                    } else {
                        s.im2col(xg, &mut col);
                        &col
                    };
                    let dwg = &mut dw[g * cout_g * kk..(g + 1) * cout_g * kk];
                    gemm(false, true, cout_g, kk, out_plane, 1.0, dyg, cols, 1.0, dwg);
                }
                if let Some(dx) = dx.as_mut() {
                    let start = (b * self.cin + g * s.channels) * in_plane;
                    let dxg = &mut dx[start..start + s.channels * in_plane];
                    if self.pointwise() {
                        gemm(true, false, kk, out_plane, cout_g, 1.0, wg, dyg, 1.0, dxg);
                    } else {
                        gemm(true, false, kk, out_plane, cout_g, 1.0, wg, dyg, 0.0, &mut dcol);
                        s.col2im(&dcol, dxg);
                    }
                }
            }
        }
        (dx, dw)
    }
}

impl Var {
    /// Cross-correlation with weight `[c_out, c_in / groups, k, k]` and
    /// optional bias `[c_out]`.
    pub fn conv2d(&self, weight: &Var, bias: Option<&Var>, opts: Conv2dOpts) -> Var {
        let plan = ConvPlan::new(self.value(), weight.value(), opts);
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[plan.cout], "conv bias shape");
        }
        let out = plan.forward(
            self.value().data(),
            weight.value().data(),
            bias.map(|b| b.value().data()),
        );
        let out = Tensor::from_vec(&[plan.n, plan.cout, plan.sweep.oh, plan.sweep.ow], out);

        let x = self.value().clone();
        let w = weight.value().clone();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Var::from_op(out, parents, move |g, want| {
            let (dx, dw) = plan.backward(x.data(), w.data(), g.data(), want[0], want[1]);
            let mut grads = vec![
                dx.map(|d| Tensor::from_vec(x.shape(), d)),
                dw.map(|d| Tensor::from_vec(w.shape(), d)),
            ];
            if want.len() > 2 {
                grads.push(want[2].then(|| bias_grad(g)));
            }
            grads
        })
    }

    /// Transposed convolution with weight `[c_in, c_out, k, k]` (the adjoint
    /// of `conv2d` with the same kernel, stride and padding).
    pub fn conv_transpose2d(
        &self,
        weight: &Var,
        bias: Option<&Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Var {
        let (n, cin, hi, wi) = self.dims4();
        let ws = weight.shape();
        assert_eq!(ws.len(), 4, "transposed conv weight must be 4-D");
        assert_eq!(ws[0], cin, "transposed conv channel mismatch");
        assert_eq!(ws[2], ws[3], "only square kernels are supported");
        let (cout, k) = (ws[1], ws[2]);
        let ho = conv_transpose_out_len(hi, k, stride, padding, output_padding);
        let wo = conv_transpose_out_len(wi, k, stride, padding, output_padding);
        let sweep = Sweep {
            channels: cout,
            h: ho,
            w: wo,
            k,
            stride,
            pad: padding,
            oh: hi,
            ow: wi,
        };
        let (in_plane, out_plane, kk) = (hi * wi, ho * wo, sweep.col_rows());
        let x = self.value().clone();
        let w = weight.value().clone();

        let mut out = vec![0.0; n * cout * out_plane];
        let mut col = vec![0.0; kk * in_plane];
        for b in 0..n {
            let xb = &x.data()[b * cin * in_plane..(b + 1) * cin * in_plane];
            gemm(true, false, kk, in_plane, cin, 1.0, w.data(), xb, 0.0, &mut col);
            let ob = &mut out[b * cout * out_plane..(b + 1) * cout * out_plane];
            sweep.col2im(&col, ob);
            if let Some(bias) = bias {
                assert_eq!(bias.shape(), &[cout], "transposed conv bias shape");
                add_channel_bias(ob, bias.value().data(), out_plane);
            }
        }
        let out = Tensor::from_vec(&[n, cout, ho, wo], out);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Var::from_op(out, parents, move |g, want| {
            let mut dx = want[0].then(|| vec![0.0; x.numel()]);
            let mut dw = want[1].then(|| vec![0.0; w.numel()]);
            let mut dcol = vec![0.0; kk * in_plane];
            for b in 0..n {
                let gb = &g.data()[b * cout * out_plane..(b + 1) * cout * out_plane];
                sweep.im2col(gb, &mut dcol);
                if let Some(dx) = dx.as_mut() {
                    let dxb = &mut dx[b * cin * in_plane..(b + 1) * cin * in_plane];
                    gemm(false, false, cin, in_plane, kk, 1.0, w.data(), &dcol, 0.0, dxb);
                }
                if let Some(dw) = dw.as_mut() {
                    let xb = &x.data()[b * cin * in_plane..(b + 1) * cin * in_plane];
                    gemm(false, true, cin, kk, in_plane, 1.0, xb, &dcol, 1.0, dw);
                }
            }
            let mut grads = vec![
                dx.map(|d| Tensor::from_vec(x.shape(), d)),
                dw.map(|d| Tensor::from_vec(w.shape(), d)),
            ];
            if want.len() > 2 {
                grads.push(want[2].then(|| bias_grad(g)));
            }
            grads
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::gradcheck::check_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct seven-loop reference for grouped convolution.
    fn conv_reference(x: &Tensor, w: &Tensor, b: &Tensor, opts: Conv2dOpts) -> Tensor {
        let (n, cin, h, wd) = x.dims4();
        let (cout, cin_g, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let oh = conv_out_len(h, k, opts.stride, opts.padding);
        let ow = conv_out_len(wd, k, opts.stride, opts.padding);
        let cout_g = cout / opts.groups;
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for bi in 0..n {
            for co in 0..cout {
                let g = co / cout_g;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[co];
                        for ci in 0..cin_g {
                            for kh in 0..k {
                                for kw in 0..k {
                                    let iy = (oy * opts.stride + kh) as isize - opts.padding as isize;
                                    let ix = (ox * opts.stride + kw) as isize - opts.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.at4(co, ci, kh, kw)
                                        * x.at4(bi, g * cin_g + ci, iy as usize, ix as usize);
                                }
                            }
                        }
                        out.set4(bi, co, oy, ox, acc);
                    }
                }
            }
        }
        let _ = cin;
        out
    }

    #[test]
    fn forward_matches_reference_across_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases = [
            (4, 6, 5, 1, 2, 1),
            (4, 6, 5, 2, 2, 1),
            (3, 4, 3, 2, 1, 1),
            (4, 4, 1, 1, 0, 1),
            (4, 4, 5, 1, 2, 4),
            (4, 4, 2, 2, 0, 4),
            (4, 6, 3, 1, 1, 2),
        ];
        for (cin, cout, k, s, p, g) in cases {
            let opts = Conv2dOpts { stride: s, padding: p, groups: g };
            let x = rand_tensor(&[2, cin, 7, 6], &mut rng);
            let w = rand_tensor(&[cout, cin / g, k, k], &mut rng);
            let b = rand_tensor(&[cout], &mut rng);
            let got = Var::constant(x.clone()).conv2d(
                &Var::constant(w.clone()),
                Some(&Var::constant(b.clone())),
                opts,
            );
            let want = conv_reference(&x, &w, &b, opts);
            assert_eq!(got.shape(), want.shape());
            for (a, e) in got.value().data().iter().zip(want.data()) {
                assert!((a - e).abs() < 1e-12, "{opts:?}");
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (cin, cout, k, s, p, g) in [(3, 4, 3, 2, 1, 1), (4, 4, 5, 1, 2, 4), (2, 3, 1, 1, 0, 1)] {
            let opts = Conv2dOpts { stride: s, padding: p, groups: g };
            let x = rand_tensor(&[2, cin, 6, 5], &mut rng);
            let w = rand_tensor(&[cout, cin / g, k, k], &mut rng);
            let b = rand_tensor(&[cout], &mut rng);
            let probe = rand_tensor(&[2, cout, conv_out_len(6, k, s, p), conv_out_len(5, k, s, p)], &mut rng);
            check_gradients(
                &[x, w, b],
                |v| v[0].conv2d(&v[1], Some(&v[2]), opts).mul_const(&probe).sum(),
                1e-6,
            );
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_t(y)> for matching geometry.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = rand_tensor(&[3, 2, 5, 5], &mut rng); // conv: 2 -> 3 channels
        let x = rand_tensor(&[1, 2, 8, 8], &mut rng);
        let opts = Conv2dOpts { stride: 2, padding: 2, groups: 1 };
        let cx = Var::constant(x.clone()).conv2d(&Var::constant(w.clone()), None, opts);
        let y = rand_tensor(cx.shape(), &mut rng);
        let ty = Var::constant(y.clone()).conv_transpose2d(&Var::constant(w), None, 2, 2, 1);
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.value().data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = ty.value().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn transposed_conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&[2, 3, 3, 4], &mut rng);
        let w = rand_tensor(&[3, 2, 5, 5], &mut rng);
        let b = rand_tensor(&[2], &mut rng);
        let probe = rand_tensor(&[2, 2, 6, 8], &mut rng);
        check_gradients(
            &[x, w, b],
            |v| v[0].conv_transpose2d(&v[1], Some(&v[2]), 2, 2, 1).mul_const(&probe).sum(),
            1e-6,
        );
    }

    #[test]
    fn output_lengths() {
        assert_eq!(conv_out_len(256, 5, 2, 2), 128);
        assert_eq!(conv_transpose_out_len(128, 5, 2, 2, 1), 256);
        assert_eq!(conv_out_len(16, 5, 1, 2), 16);
    }
}
