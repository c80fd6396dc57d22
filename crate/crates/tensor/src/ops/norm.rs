use crate::{Tensor, Var};

impl Var {
    /// Layer normalization across channels, independently at every
    /// `(batch, y, x)` position, with per-channel `gamma` and `beta`.
    pub fn layer_norm_channels(&self, gamma: &Var, beta: &Var, eps: f64) -> Var {
        let (n, c, h, w) = self.dims4();
        assert_eq!(gamma.shape(), &[c], "layer norm gamma shape");
        assert_eq!(beta.shape(), &[c], "layer norm beta shape");
        let plane = h * w;
        let x = self.value().data();
        let (g, b) = (gamma.value().data(), beta.value().data());

        let mut normed = vec![0.0; x.len()];
        let mut rstd = vec![0.0; n * plane];
        let mut out = vec![0.0; x.len()];
        let mut mean = vec![0.0; plane];
        let mut var = vec![0.0; plane];
        for bi in 0..n {
            let xb = &x[bi * c * plane..(bi + 1) * c * plane];
            mean.fill(0.0);
            var.fill(0.0);
            for ch in xb.chunks(plane) {
                for (m, v) in mean.iter_mut().zip(ch) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= c as f64;
            }
            for ch in xb.chunks(plane) {
                for ((s, v), m) in var.iter_mut().zip(ch).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
            let rs = &mut rstd[bi * plane..(bi + 1) * plane];
            for (r, s) in rs.iter_mut().zip(&var) {
                *r = 1.0 / (s / c as f64 + eps).sqrt();
            }
            for ci in 0..c {
                let off = (bi * c + ci) * plane;
                for p in 0..plane {
                    let xn = (xb[ci * plane + p] - mean[p]) * rs[p];
                    normed[off + p] = xn;
                    out[off + p] = xn * g[ci] + b[ci];
                }
            }
        }
        let out = Tensor::from_vec(self.shape(), out);
        let gamma_t = gamma.value().clone();
        Var::from_op(
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |dy, want| {
                let dy = dy.data();
                let g = gamma_t.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = want[0].then(|| vec![0.0; dy.len()]);
                let mut mean_dxn = vec![0.0; plane];
                let mut mean_dxn_xn = vec![0.0; plane];
                for bi in 0..n {
                    mean_dxn.fill(0.0);
                    mean_dxn_xn.fill(0.0);
                    for ci in 0..c {
                        let off = (bi * c + ci) * plane;
                        let mut sg = 0.0;
                        let mut sb = 0.0;
                        for p in 0..plane {
                            let d = dy[off + p];
                            let xn = normed[off + p];
                            sg += d * xn;
                            sb += d;
                            let dxn = d * g[ci];
                            mean_dxn[p] += dxn;
                            mean_dxn_xn[p] += dxn * xn;
                        }
                        dgamma[ci] += sg;
                        dbeta[ci] += sb;
                    }
                    if let Some(dx) = dx.as_mut() {
                        let inv_c = 1.0 / c as f64;
                        let rs = &rstd[bi * plane..(bi + 1) * plane];
                        for ci in 0..c {
                            let off = (bi * c + ci) * plane;
                            for p in 0..plane {
                                let dxn = dy[off + p] * g[ci];
                                dx[off + p] = rs[p]
                                    * (dxn
                                        - mean_dxn[p] * inv_c
                                        - normed[off + p] * mean_dxn_xn[p] * inv_c);
                            }
                        }
                    }
                }
                vec![
                    dx.map(|d| Tensor::from_vec(&[n, c, h, w], d)),
                    want[1].then(|| Tensor::from_vec(&[c], dgamma)),
                    want[2].then(|| Tensor::from_vec(&[c], dbeta)),
                ]
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::gradcheck::check_gradients;

    #[test]
    fn normalizes_each_position() {
        let x = Tensor::from_fn(&[1, 4, 2, 3], |i| (i as f64 * 0.7).sin() * 3.0 + 1.0);
        let y = Var::constant(x).layer_norm_channels(
            &Var::constant(Tensor::full(&[4], 1.0)),
            &Var::constant(Tensor::zeros(&[4])),
            1e-12,
        );
        for p in 0..6 {
            let vals: Vec<f64> = (0..4).map(|c| y.value().data()[c * 6 + p]).collect();
            let m: f64 = vals.iter().sum::<f64>() / 4.0;
            let v: f64 = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients() {
        let x = Tensor::from_fn(&[2, 5, 2, 3], |i| (i as f64 * 1.3).cos() * 2.0);
        let g = Tensor::from_fn(&[5], |i| 0.5 + i as f64 * 0.3);
        let b = Tensor::from_fn(&[5], |i| i as f64 * 0.1 - 0.2);
        let probe = Tensor::from_fn(&[2, 5, 2, 3], |i| (i as f64 * 0.37).sin());
        check_gradients(
            &[x, g, b],
            |v| v[0].layer_norm_channels(&v[1], &v[2], 1e-6).mul_const(&probe).sum(),
            1e-6,
        );
    }
}
