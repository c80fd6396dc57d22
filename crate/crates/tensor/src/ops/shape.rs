//! Layout operators: reflect padding, cropping, channel slicing and
//! concatenation.

use crate::{Tensor, Var};

/// Mirror index `i` into `[0, n)` without repeating the edge sample,
/// bouncing as often as needed so any padding width is valid.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    /// Bottom/right padding up to the next multiple of `multiple`.
    pub fn to_multiple(h: usize, w: usize, multiple: usize) -> Self {
        Self {
            top: 0,
            bottom: h.next_multiple_of(multiple) - h,
            left: 0,
            right: w.next_multiple_of(multiple) - w,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.top == 0 && self.bottom == 0 && self.left == 0 && self.right == 0
    }
}

impl Var {
    pub fn pad_reflect(&self, pad: Padding) -> Var {
        if pad.is_zero() {
            return self.clone();
        }
        let (n, c, h, w) = self.dims4();
        let (ph, pw) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
        let rows: Vec<usize> = (0..ph)
            .map(|y| reflect_index(y as isize - pad.top as isize, h))
            .collect();
        let cols: Vec<usize> = (0..pw)
            .map(|x| reflect_index(x as isize - pad.left as isize, w))
            .collect();
        let src = self.value().data();
        let mut out = vec![0.0; n * c * ph * pw];
        for (plane_idx, dst) in out.chunks_mut(ph * pw).enumerate() {
            let s = &src[plane_idx * h * w..(plane_idx + 1) * h * w];
            for (y, &ry) in rows.iter().enumerate() {
                for (x, &rx) in cols.iter().enumerate() {
                    dst[y * pw + x] = s[ry * w + rx];
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, ph, pw], out);
        Var::from_op(out, vec![self.clone()], move |g, _| {
            let mut dx = vec![0.0; n * c * h * w];
            for (plane_idx, gs) in g.data().chunks(ph * pw).enumerate() {
                let d = &mut dx[plane_idx * h * w..(plane_idx + 1) * h * w];
                for (y, &ry) in rows.iter().enumerate() {
                    for (x, &rx) in cols.iter().enumerate() {
                        d[ry * w + rx] += gs[y * pw + x];
                    }
                }
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], dx))]
        })
    }

    /// Spatial window `[top, top + height) × [left, left + width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Var {
        let (n, c, h, w) = self.dims4();
        assert!(top + height <= h && left + width <= w, "crop out of bounds");
        if top == 0 && left == 0 && height == h && width == w {
            return self.clone();
        }
        let src = self.value().data();
        let mut out = Vec::with_capacity(n * c * height * width);
        for plane in src.chunks(h * w) {
            for y in top..top + height {
                out.extend_from_slice(&plane[y * w + left..y * w + left + width]);
            }
        }
        let out = Tensor::from_vec(&[n, c, height, width], out);
        Var::from_op(out, vec![self.clone()], move |g, _| {
            let mut dx = vec![0.0; n * c * h * w];
            for (plane_idx, gs) in g.data().chunks(height * width).enumerate() {
                let d = &mut dx[plane_idx * h * w..(plane_idx + 1) * h * w];
                for y in 0..height {
                    let row = (top + y) * w + left;
                    d[row..row + width].copy_from_slice(&gs[y * width..(y + 1) * width]);
                }
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], dx))]
        })
    }

    pub fn narrow_channels(&self, start: usize, len: usize) -> Var {
        let (n, c, h, w) = self.dims4();
        if start == 0 && len == c {
            return self.clone();
        }
        let out = self.value().narrow_channels(start, len);
        Var::from_op(out, vec![self.clone()], move |g, _| {
            let plane = h * w;
            let mut dx = vec![0.0; n * c * plane];
            for b in 0..n {
                let dst = (b * c + start) * plane;
                let src = b * len * plane;
                dx[dst..dst + len * plane].copy_from_slice(&g.data()[src..src + len * plane]);
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], dx))]
        })
    }

    pub fn concat_channels(parts: &[Var]) -> Var {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let values: Vec<&Tensor> = parts.iter().map(Var::value).collect();
        let out = Tensor::concat_channels(&values);
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        Var::from_op(out, parts.to_vec(), move |g, want| {
            let mut start = 0;
            widths
                .iter()
                .zip(want)
                .map(|(&wd, &wanted)| {
                    let piece = wanted.then(|| g.narrow_channels(start, wd));
                    start += wd;
                    piece
                })
                .collect()
        })
    }
}
