use crate::special;
use crate::{Tensor, Var};

fn unary(
    x: &Var,
    f: impl Fn(f64) -> f64,
    // derivative given (input, output)
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Var {
    let input = x.value().clone();
    let out = input.map(f);
    if !x.requires_grad() {
        return Var::constant(out);
    }
    let saved_out = out.clone();
    Var::from_op(out, vec![x.clone()], move |g, _| {
        let mut grad = g.clone();
        for ((gv, &xi), &yi) in grad
            .data_mut()
            .iter_mut()
            .zip(input.data())
            .zip(saved_out.data())
        {
            *gv *= df(xi, yi);
        }
        vec![Some(grad)]
    })
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let out = self.value().zip_map(other.value(), |a, b| a + b);
        Var::from_op(out, vec![self.clone(), other.clone()], |g, want| {
            vec![want[0].then(|| g.clone()), want[1].then(|| g.clone())]
        })
    }

    pub fn sub(&self, other: &Var) -> Var {
        let out = self.value().zip_map(other.value(), |a, b| a - b);
        Var::from_op(out, vec![self.clone(), other.clone()], |g, want| {
            vec![want[0].then(|| g.clone()), want[1].then(|| g.scale(-1.0))]
        })
    }

    pub fn mul(&self, other: &Var) -> Var {
        let (a, b) = (self.value().clone(), other.value().clone());
        let out = a.zip_map(&b, |x, y| x * y);
        Var::from_op(out, vec![self.clone(), other.clone()], move |g, want| {
            vec![
                want[0].then(|| g.zip_map(&b, |gv, y| gv * y)),
                want[1].then(|| g.zip_map(&a, |gv, x| gv * x)),
            ]
        })
    }

    pub fn div(&self, other: &Var) -> Var {
        let (a, b) = (self.value().clone(), other.value().clone());
        let out = a.zip_map(&b, |x, y| x / y);
        let q = out.clone();
        Var::from_op(out, vec![self.clone(), other.clone()], move |g, want| {
            vec![
                want[0].then(|| g.zip_map(&b, |gv, y| gv / y)),
                want[1].then(|| {
                    let t = g.zip_map(&q, |gv, qv| gv * qv);
                    t.zip_map(&b, |tv, y| -tv / y)
                }),
            ]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let out = self.value().map(|v| v + c);
        Var::from_op(out, vec![self.clone()], |g, _| vec![Some(g.clone())])
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        let out = self.value().scale(c);
        Var::from_op(out, vec![self.clone()], move |g, _| vec![Some(g.scale(c))])
    }

    pub fn neg(&self) -> Var {
        self.mul_scalar(-1.0)
    }

    /// Element-wise product with a constant tensor (masks, fixed signs).
    pub fn mul_const(&self, c: &Tensor) -> Var {
        let c = c.clone();
        let out = self.value().zip_map(&c, |a, b| a * b);
        Var::from_op(out, vec![self.clone()], move |g, _| {
            vec![Some(g.zip_map(&c, |gv, cv| gv * cv))]
        })
    }

    /// Element-wise sum with a constant tensor (additive noise).
    pub fn add_const(&self, c: &Tensor) -> Var {
        let out = self.value().zip_map(c, |a, b| a + b);
        Var::from_op(out, vec![self.clone()], |g, _| vec![Some(g.clone())])
    }

    pub fn square(&self) -> Var {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Var {
        unary(self, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Var {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn abs(&self) -> Var {
        unary(self, f64::abs, |x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    }

    pub fn relu(&self) -> Var {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `x^p` for non-negative `x`.
    pub fn powf(&self, p: f64) -> Var {
        unary(
            self,
            move |x| x.powf(p),
            move |x, _| if x > 0.0 { p * x.powf(p - 1.0) } else { 0.0 },
        )
    }

    pub fn sigmoid(&self) -> Var {
        unary(self, special::sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn softplus(&self) -> Var {
        unary(self, special::softplus, |x, _| special::sigmoid(x))
    }

    pub fn gelu(&self) -> Var {
        unary(self, special::gelu, |x, _| special::gelu_grad(x))
    }

    pub fn silu(&self) -> Var {
        unary(self, special::silu, |x, _| special::silu_grad(x))
    }

    pub fn tanh(&self) -> Var {
        unary(self, f64::tanh, |_, y| 1.0 - y * y)
    }

    /// `max(x, bound)` whose gradient still flows below the bound when it
    /// points upward, so clamped values can recover during training.
    pub fn lower_bound(&self, bound: f64) -> Var {
        let input = self.value().clone();
        let out = input.map(|v| v.max(bound));
        Var::from_op(out, vec![self.clone()], move |g, _| {
            vec![Some(g.zip_map(&input, |gv, x| {
                if x >= bound || gv < 0.0 {
                    gv
                } else {
                    0.0
                }
            }))]
        })
    }

    /// Plain clamp from below with zero gradient where clamped.
    pub fn clamp_min(&self, bound: f64) -> Var {
        unary(self, move |x| x.max(bound), move |x, _| if x >= bound { 1.0 } else { 0.0 })
    }

    /// Rounding (half away from zero) with an identity gradient.
    pub fn round_ste(&self) -> Var {
        let out = self.value().map(special::round_half_away);
        Var::from_op(out, vec![self.clone()], |g, _| vec![Some(g.clone())])
    }

    pub fn sum(&self) -> Var {
        let shape = self.shape().to_vec();
        let out = Tensor::scalar(self.value().sum());
        Var::from_op(out, vec![self.clone()], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Mean over `H × W` of a `[N, C, H, W]` map, giving `[N, C, 1, 1]`.
    pub fn mean_spatial(&self) -> Var {
        let (n, c, h, w) = self.dims4();
        let plane = h * w;
        let inv = 1.0 / plane as f64;
        let out: Vec<f64> = self.value().data().chunks(plane).map(|p| p.iter().sum::<f64>() * inv).collect();
        Var::from_op(Tensor::from_vec(&[n, c, 1, 1], out), vec![self.clone()], move |g, _| {
            let mut d = Vec::with_capacity(n * c * plane);
            for &gv in g.data() {
                d.extend(std::iter::repeat(gv * inv).take(plane));
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], d))]
        })
    }
}
