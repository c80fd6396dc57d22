//! Discretized Gaussian likelihood of integer-offset latents.

use s2c_tensor::special::{normal_cdf, normal_pdf};
use s2c_tensor::{Tensor, Var};

use super::LIKELIHOOD_FLOOR;
use crate::error::{Result, S2cError};

/// Mass of the bin `[δ − ½, δ + ½)` under `N(0, σ²)`, evaluated on the
/// lower tail (`|δ|`) so far-out bins keep their relative precision.
pub fn bin_probability(delta: f64, sigma: f64) -> f64 {
    let d = delta.abs();
    normal_cdf((0.5 - d) / sigma) - normal_cdf((-0.5 - d) / sigma)
}

/// Per-element `P(ŷ | μ, σ)` with the floor applied, differentiable in all inputs.
pub fn gaussian_likelihood(y_hat: &Var, mu: &Var, sigma: &Var) -> Result<Var> {
    if y_hat.shape() != mu.shape() || mu.shape() != sigma.shape() {
        return Err(S2cError::Dimension(format!(
            "likelihood shapes differ: {:?} {:?} {:?}",
            y_hat.shape(),
            mu.shape(),
            sigma.shape()
        )));
    }
    if let Some(bad) = sigma.value().data().iter().find(|s| !(**s > 0.0)) {
        return Err(S2cError::InvalidArgument(format!(
            "scale must be positive, found {bad}"
        )));
    }
    let delta = y_hat.sub(mu);
    Ok(discretized(&delta, sigma).lower_bound(LIKELIHOOD_FLOOR))
}

fn discretized(delta: &Var, sigma: &Var) -> Var {
    let (d, s) = (delta.value().clone(), sigma.value().clone());
    let out = d.zip_map(&s, bin_probability);
    Var::from_op(out, vec![delta.clone(), sigma.clone()], move |g, want| {
        let n = d.numel();
        let mut gd = want[0].then(|| vec![0.0; n]);
        let mut gs = want[1].then(|| vec![0.0; n]);
        for i in 0..n {
            let (dv, sv, gv) = (d.data()[i], s.data()[i], g.data()[i]);
            let a = dv.abs();
            let upper = (0.5 - a) / sv;
            let lower = (-0.5 - a) / sv;
            let (pu, pl) = (normal_pdf(upper), normal_pdf(lower));
            if let Some(gd) = gd.as_mut() {
                gd[i] = gv * dv.signum() * (pl - pu) / sv * f64::from(u8::from(dv != 0.0));
            }
            if let Some(gs) = gs.as_mut() {
                gs[i] = gv * (pl * lower - pu * upper) / sv;
            }
        }
        vec![
            gd.map(|v| Tensor::from_vec(d.shape(), v)),
            gs.map(|v| Tensor::from_vec(s.shape(), v)),
        ]
    })
}
