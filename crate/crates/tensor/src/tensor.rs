use std::fmt;
use std::sync::Arc;

use crate::{Result, TensorError};

/// Dense row-major `f64` array with shared, copy-on-write storage.
///
/// Cloning a tensor is cheap; mutation through [`Tensor::data_mut`] copies
/// the buffer only when it is shared.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    /// Like [`Tensor::new`] but panics on a length mismatch. For internal
    /// kernels whose output sizes are computed from the shape itself.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        Self::new(shape, data).expect("tensor length matches shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![value; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(&[1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        Self::from_vec(shape, (0..numel).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// `(n, c, h, w)` of a 4-D tensor. Panics for other ranks.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected NCHW tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let (_, cs, hs, ws) = self.dims4();
        self.data[((n * cs + c) * hs + h) * ws + w]
    }

    pub fn set4(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let (_, cs, hs, ws) = self.dims4();
        self.data_mut()[((n * cs + c) * hs + h) * ws + w] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self::from_vec(
            &self.shape,
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data_mut().iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    /// `self += alpha * other`, element-wise.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "axpy shape mismatch");
        for (a, b) in self.data_mut().iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| v * alpha)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel slice `[start, start + len)` of an NCHW tensor.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Self {
        let (n, c, h, w) = self.dims4();
        assert!(start + len <= c, "channel slice out of range");
        let plane = h * w;
        let mut out = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            out.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Self::from_vec(&[n, len, h, w], out)
    }

    /// Concatenate NCHW tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Self {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let (n, _, h, w) = parts[0].dims4();
        let mut total = 0;
        for p in parts {
            let (pn, pc, ph, pw) = p.dims4();
            assert!(pn == n && ph == h && pw == w, "concat shape mismatch");
            total += pc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for p in parts {
                let pc = p.shape[1];
                let base = b * pc * plane;
                out.extend_from_slice(&p.data[base..base + pc * plane]);
            }
        }
        Self::from_vec(&[n, total, h, w], out)
    }

    /// Batch slice `[start, start + len)` of an NCHW tensor.
    pub fn narrow_batch(&self, start: usize, len: usize) -> Self {
        let (n, c, h, w) = self.dims4();
        assert!(start + len <= n, "batch slice out of range");
        let item = c * h * w;
        Self::from_vec(
            &[len, c, h, w],
            self.data[start * item..(start + len) * item].to_vec(),
        )
    }

    pub fn stack_batch(items: &[Tensor]) -> Self {
        assert!(!items.is_empty(), "stack of zero tensors");
        let (_, c, h, w) = items[0].dims4();
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.dims4();
            assert!(tc == c && th == h && tw == w, "stack shape mismatch");
            data.extend_from_slice(t.data());
            n += tn;
        }
        Self::from_vec(&[n, c, h, w], data)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} [", self.shape)?;
        for (i, v) in self.data.iter().take(PREVIEW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        if self.numel() > PREVIEW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn copy_on_write() {
        let a = Tensor::full(&[4], 1.0);
        let mut b = a.clone();
        b.data_mut()[0] = 7.0;
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(b.data()[0], 7.0);
    }

    #[test]
    fn narrow_and_concat_invert() {
        let t = Tensor::from_fn(&[2, 5, 3, 2], |i| i as f64);
        let a = t.narrow_channels(0, 2);
        let b = t.narrow_channels(2, 3);
        assert_eq!(Tensor::concat_channels(&[&a, &b]), t);
    }
}
