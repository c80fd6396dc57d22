//! Per-channel learned univariate density for the hyper-latent.
//!
//! The CDF is `sigmoid(f(t))` where `f` chains small matrices with
//! softplus-positive entries and `a + tanh(φ)·tanh(a)` nonlinearities, so it
//! is strictly increasing in `t` by construction.

use rand::Rng;
use s2c_tensor::special::{sigmoid, softplus};
use s2c_tensor::{Tensor, Var};

use super::LIKELIHOOD_FLOOR;
use crate::layers::expect_channels;
use crate::error::Result;
use crate::params::{Ctx, ParamBuilder, ParamId, ParamStore};

const FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = 4;
/// Pre-activations stored per element (3 + 3 + 3 + 1).
const ACTS: usize = 10;
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FactorizedPrior {
    pub channels: usize,
    matrices: Vec<ParamId>,
    biases: Vec<ParamId>,
    factors: Vec<ParamId>,
}

/// Parameter values after the positivity / tanh maps.
struct Resolved {
    m: Vec<Vec<f64>>,
    m_raw: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
}

impl FactorizedPrior {
    pub fn new(pb: &mut ParamBuilder, channels: usize) -> Self {
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for l in 0..LAYERS {
            let (fi, fo) = (FILTERS[l], FILTERS[l + 1]);
            let init = (1.0 / scale / fo as f64).exp_m1().ln();
            matrices.push(pb.constant(&format!("matrix{l}"), &[channels, fo, fi], init));
            let mut rng = pb.rng_for(&format!("bias{l}"));
            let bias = Tensor::from_fn(&[channels, fo], |_| rng.gen_range(-0.5..0.5));
            biases.push(pb.tensor(&format!("bias{l}"), bias));
            if l + 1 < LAYERS {
                factors.push(pb.constant(&format!("factor{l}"), &[channels, fo], 0.0));
            }
        }
        Self {
            channels,
            matrices,
            biases,
            factors,
        }
    }

    fn resolve(&self, get: impl Fn(ParamId) -> Tensor) -> Resolved {
        let m_raw: Vec<Vec<f64>> = self.matrices.iter().map(|&id| get(id).data().to_vec()).collect();
        Resolved {
            m: m_raw.iter().map(|v| v.iter().map(|&x| softplus(x)).collect()).collect(),
            m_raw,
            b: self.biases.iter().map(|&id| get(id).data().to_vec()).collect(),
            f: self
                .factors
                .iter()
                .map(|&id| get(id).data().iter().map(|x| x.tanh()).collect())
                .collect(),
        }
    }

    /// Logit of the CDF at `t` for channel `c`; fills `acts` with pre-activations.
    fn chain(r: &Resolved, c: usize, t: f64, acts: &mut [f64; ACTS]) -> f64 {
        let mut h = [t, 0.0, 0.0];
        let mut off = 0;
        for l in 0..LAYERS {
            let (fi, fo) = (FILTERS[l], FILTERS[l + 1]);
            let m = &r.m[l][c * fo * fi..(c + 1) * fo * fi];
            let b = &r.b[l][c * fo..(c + 1) * fo];
            let mut a = [0.0; 3];
            for o in 0..fo {
                a[o] = b[o] + (0..fi).map(|i| m[o * fi + i] * h[i]).sum::<f64>();
                acts[off + o] = a[o];
            }
            if l + 1 < LAYERS {
                let f = &r.f[l][c * fo..(c + 1) * fo];
                for o in 0..fo {
                    h[o] = a[o] + f[o] * a[o].tanh();
                }
            } else {
                h[0] = a[0];
            }
            off += fo;
        }
        h[0]
    }

    /// Scalar logit for table construction (no graph).
    fn logit_with(r: &Resolved, c: usize, t: f64) -> f64 {
        Self::chain(r, c, t, &mut [0.0; ACTS])
    }

    fn resolve_store(&self, store: &ParamStore) -> Resolved {
        self.resolve(|id| store.get(id).clone())
    }

    pub fn cdf(&self, store: &ParamStore, c: usize, t: f64) -> f64 {
        sigmoid(Self::logit_with(&self.resolve_store(store), c, t))
    }

    /// Unfloored mass of the integer bin centred on `v` in channel `c`,
    /// for every `v` in `values`.
    pub fn bin_probabilities(&self, store: &ParamStore, c: usize, values: impl Iterator<Item = f64>) -> Vec<f64> {
        let r = self.resolve_store(store);
        values
            .map(|v| {
                let lo = Self::logit_with(&r, c, v - 0.5);
                let hi = Self::logit_with(&r, c, v + 0.5);
                let s = if lo + hi > 0.0 { -1.0 } else { 1.0 };
                (sigmoid(s * hi) - sigmoid(s * lo)).abs()
            })
            .collect()
    }

    /// Value where the channel's CDF crosses ½ (bisection on the logit).
    pub fn median(&self, store: &ParamStore, c: usize) -> f64 {
        let r = self.resolve_store(store);
        let (mut lo, mut hi) = (-1e4, 1e4);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if Self::logit_with(&r, c, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Differentiable CDF logits of every element of `x` (`[N, C, H, W]`).
    pub fn logits(&self, ctx: &Ctx, x: &Var) -> Result<Var> {
        expect_channels(x, self.channels, "factorized prior")?;
        let r = self.resolve(|id| ctx.p(id).value().clone());
        let (n, c, h, w) = x.dims4();
        let plane = h * w;
        let xv = x.value().clone();
        let mut acts = vec![[0.0; ACTS]; xv.numel()];
        let out: Vec<f64> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &t)| Self::chain(&r, (i / plane) % c, t, &mut acts[i]))
            .collect();
        let out = Tensor::from_vec(&[n, c, h, w], out);

        let mut parents = vec![x.clone()];
        parents.extend(self.matrices.iter().map(|&id| ctx.p(id).clone()));
        parents.extend(self.biases.iter().map(|&id| ctx.p(id).clone()));
        parents.extend(self.factors.iter().map(|&id| ctx.p(id).clone()));
        let shapes: Vec<Vec<usize>> = parents.iter().map(|p| p.shape().to_vec()).collect();
        Ok(Var::from_op(out, parents, move |g, want| {
            let mut dx = vec![0.0; xv.numel()];
            let mut dm: Vec<Vec<f64>> = r.m.iter().map(|v| vec![0.0; v.len()]).collect();
            let mut db: Vec<Vec<f64>> = r.b.iter().map(|v| vec![0.0; v.len()]).collect();
            let mut df: Vec<Vec<f64>> = r.f.iter().map(|v| vec![0.0; v.len()]).collect();
            for (i, (&t, &gv)) in xv.data().iter().zip(g.data()).enumerate() {
                let ch = (i / plane) % c;
                let a = &acts[i];
                // layer outputs h_l, rebuilt from the pre-activations
                let offs = [0, 3, 6, 9];
                let hidden = |l: usize, o: usize| -> f64 {
                    let av = a[offs[l] + o];
                    av + r.f[l][ch * 3 + o] * av.tanh()
                };
                let mut dh = [gv, 0.0, 0.0];
                for l in (0..LAYERS).rev() {
                    let (fi, fo) = (FILTERS[l], FILTERS[l + 1]);
                    let mut da = [0.0; 3];
                    for o in 0..fo {
                        let av = a[offs[l] + o];
                        if l + 1 < LAYERS {
                            let th = av.tanh();
                            let tf = r.f[l][ch * fo + o];
                            da[o] = dh[o] * (1.0 + tf * (1.0 - th * th));
                            df[l][ch * fo + o] += dh[o] * th * (1.0 - tf * tf);
                        } else {
                            da[o] = dh[o];
                        }
                        db[l][ch * fo + o] += da[o];
                    }
                    let mut dh_in = [0.0; 3];
                    for o in 0..fo {
                        for inp in 0..fi {
                            let h_in = if l == 0 { t } else { hidden(l - 1, inp) };
                            let k = ch * fo * fi + o * fi + inp;
                            dm[l][k] += da[o] * h_in * sigmoid(r.m_raw[l][k]);
                            dh_in[inp] += r.m[l][k] * da[o];
                        }
                    }
                    dh = dh_in;
                }
                dx[i] = dh[0];
            }
            let mut grads = vec![want[0].then(|| Tensor::from_vec(&shapes[0], dx))];
            let flat = dm.into_iter().chain(db).chain(df);
            for (k, v) in flat.enumerate() {
                grads.push(want[k + 1].then(|| Tensor::from_vec(&shapes[k + 1], v)));
            }
            grads
        }))
    }

    /// Per-element bin mass of `z_hat`, floored, via the sign trick that
    /// evaluates whichever tail is numerically small.
    pub fn likelihood(&self, ctx: &Ctx, z_hat: &Var) -> Result<Var> {
        let lower = self.logits(ctx, &z_hat.add_scalar(-0.5))?;
        let upper = self.logits(ctx, &z_hat.add_scalar(0.5))?;
        let sign = lower
            .value()
            .zip_map(upper.value(), |l, u| if l + u > 0.0 { -1.0 } else { 1.0 });
        let p = upper
            .mul_const(&sign)
            .sigmoid()
            .sub(&lower.mul_const(&sign).sigmoid())
            .abs();
        Ok(p.lower_bound(LIKELIHOOD_FLOOR))
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.matrices.iter().chain(&self.biases).chain(&self.factors).copied()
    }
}
