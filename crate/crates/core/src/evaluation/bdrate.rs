//! Bjøntegaard delta rate: fit `ln(bpp)` as a function of quality for each
//! curve, average the gap over the shared quality range.
//!
//! The cubic least-squares fit is used when it is increasing on the shared
//! range for both curves; otherwise both sides switch to monotone
//! piecewise-cubic Hermite interpolation through the measured points.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, S2cError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    pub label: String,
    /// Sorted by bpp.
    pub points: Vec<RdPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Psnr,
    Msssim,
}

/// One row of an R-D CSV (`label,bpp,psnr,msssim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub label: String,
    pub bpp: f64,
    pub psnr: f64,
    pub msssim: Option<f64>,
}

impl RdCurve {
    /// Sorts by bpp and rejects non-finite values or repeated rates.
    /// Quality that drops as rate rises is only logged.
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        let label = label.into();
        if points.iter().any(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.quality.is_finite())) {
            return Err(S2cError::InvalidArgument(format!(
                "curve {label:?}: bpp must be positive and quality finite"
            )));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(S2cError::InvalidArgument(format!("curve {label:?}: repeated bpp")));
        }
        if points.windows(2).any(|w| w[1].quality < w[0].quality) {
            log::warn!("curve {label:?}: quality decreases with rate somewhere");
        }
        Ok(Self { label, points })
    }

    fn quality_range(&self) -> (f64, f64) {
        let q = self.points.iter().map(|p| p.quality);
        (q.clone().fold(f64::INFINITY, f64::min), q.fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Least-squares cubic through `(x, y)` on centred/scaled `x`; returns
/// coefficients in the original variable, lowest degree first.
fn cubic_fit(x: &[f64], y: &[f64]) -> [f64; 4] {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let scale = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1e-12);
    let a = DMatrix::from_fn(x.len(), 4, |r, c| ((x[r] - mean) / scale).powi(c as i32));
    let b = DVector::from_column_slice(y);
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let c = qr
        .r()
        .solve_upper_triangular(&qtb)
        .expect("Vandermonde of distinct points has full rank");
    // expand p((x − m)/s) into powers of x
    let (m, s) = (mean, scale);
    let u = [c[0], c[1] / s, c[2] / (s * s), c[3] / (s * s * s)];
    [
        u[0] - u[1] * m + u[2] * m * m - u[3] * m * m * m,
        u[1] - 2.0 * u[2] * m + 3.0 * u[3] * m * m,
        u[2] - 3.0 * u[3] * m,
        u[3],
    ]
}

fn poly_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let anti = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
    anti(hi) - anti(lo)
}

fn poly_increasing(c: &[f64; 4], lo: f64, hi: f64) -> bool {
    (0..=64).all(|i| {
        let x = lo + (hi - lo) * i as f64 / 64.0;
        c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x >= 0.0
    })
}

/// Monotone Hermite interpolant (Fritsch–Carlson slopes) over strictly
/// increasing knots.
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
                let e = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
                if e.signum() != m0.signum() {
                    0.0
                } else if m0.signum() != m1.signum() && e.abs() > 3.0 * m0.abs() {
                    3.0 * m0
                } else {
                    e
                }
            };
            d[0] = end(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { x, y, d }
    }

    /// `∫ p` from the first knot of segment `k` to `x0 + t·h`.
    fn segment_integral(&self, k: usize, t: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let i00 = t - t3 + t4 / 2.0;
        let i10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;
        let i01 = t3 - t4 / 2.0;
        let i11 = -t3 / 3.0 + t4 / 4.0;
        h * (i00 * self.y[k] + i10 * h * self.d[k] + i01 * self.y[k + 1] + i11 * h * self.d[k + 1])
    }

    /// Antiderivative from the first knot, for `x` inside the knot range.
    fn antiderivative(&self, x: f64) -> f64 {
        let last = self.x.len() - 2;
        let k = self.x.windows(2).position(|w| x <= w[1]).unwrap_or(last).min(last);
        let whole: f64 = (0..k).map(|j| self.segment_integral(j, 1.0)).sum();
        let t = (x - self.x[k]) / (self.x[k + 1] - self.x[k]);
        whole + self.segment_integral(k, t)
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

/// `(quality, ln bpp)` sorted by quality with exact-duplicate qualities merged.
fn knots(c: &RdCurve) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.quality, p.bpp.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|b, a| a.0 == b.0);
    pts.into_iter().unzip()
}

/// Average rate difference of `test` against `anchor` in percent at equal
/// quality; negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    for c in [anchor, test] {
        if c.points.len() < 4 {
            return Err(S2cError::InvalidArgument(format!(
                "curve {:?} has {} points, BD-rate needs at least 4",
                c.label,
                c.points.len()
            )));
        }
    }
    let (a_lo, a_hi) = anchor.quality_range();
    let (t_lo, t_hi) = test.quality_range();
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if !(hi > lo) {
        return Err(S2cError::InvalidArgument(format!(
            "no overlapping quality range between {:?} [{a_lo}, {a_hi}] and {:?} [{t_lo}, {t_hi}]",
            anchor.label, test.label
        )));
    }
    let (aq, ar) = knots(anchor);
    let (tq, tr) = knots(test);
    let cubics = (aq.len() >= 4 && tq.len() >= 4)
        .then(|| (cubic_fit(&aq, &ar), cubic_fit(&tq, &tr)))
        .filter(|(fa, ft)| poly_increasing(fa, lo, hi) && poly_increasing(ft, lo, hi));
    let gap = if let Some((fa, ft)) = cubics {
        poly_integral(&ft, lo, hi) - poly_integral(&fa, lo, hi)
    } else {
        log::info!("cubic fit not monotone on [{lo}, {hi}]; using piecewise Hermite interpolation");
        if aq.len() < 2 || tq.len() < 2 {
            return Err(S2cError::InvalidArgument("curves need two distinct qualities".into()));
        }
        Pchip::new(tq, tr).integral(lo, hi) - Pchip::new(aq, ar).integral(lo, hi)
    };
    Ok(((gap / (hi - lo)).exp() - 1.0) * 100.0)
}

pub fn read_rows(path: &Path) -> Result<Vec<RdRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| S2cError::Data(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<RdRow>, _>>()
        .map_err(|e| S2cError::Data(format!("{}: {e}", path.display())))
}

pub fn write_rows(path: &Path, rows: &[RdRow]) -> Result<()> {
    let err = |e: csv::Error| S2cError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| S2cError::io(path, e))
}

/// Group rows by label into curves of the chosen quality.
pub fn curves_from_rows(rows: &[RdRow], quality: Quality) -> Result<Vec<RdCurve>> {
    let mut groups: BTreeMap<&str, Vec<RdPoint>> = BTreeMap::new();
    for r in rows {
        let q = match quality {
            Quality::Psnr => r.psnr,
            Quality::Msssim => r.msssim.ok_or_else(|| {
                S2cError::Data(format!("row for {:?} at {} bpp has no MS-SSIM", r.label, r.bpp))
            })?,
        };
        groups.entry(&r.label).or_default().push(RdPoint { bpp: r.bpp, quality: q });
    }
    groups.into_iter().map(|(l, p)| RdCurve::new(l, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(label: &str, pts: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(label, pts.iter().map(|&(bpp, quality)| RdPoint { bpp, quality }).collect()).unwrap()
    }

    fn anchor() -> RdCurve {
        curve("a", &[(0.12, 29.1), (0.21, 31.0), (0.35, 33.2), (0.55, 35.1), (0.83, 37.0), (1.2, 38.9)])
    }

    fn scaled(c: &RdCurve, f: f64) -> RdCurve {
        let pts = c.points.iter().map(|p| RdPoint { bpp: p.bpp * f, ..*p }).collect();
        RdCurve::new("scaled", pts).unwrap()
    }

    #[test]
    fn identical_curves_give_zero() {
        assert_eq!(bd_rate(&anchor(), &anchor()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_scaling() {
        let got = bd_rate(&anchor(), &scaled(&anchor(), 0.9)).unwrap();
        assert!((got + 10.0).abs() < 0.1, "{got}");
    }

    /// Both curves follow `q = a + b·ln(bpp)`, so `ln bpp` is linear in `q`
    /// and the average gap has a closed form.
    #[test]
    fn analytic_log_curves() {
        let (a1, b1, a2, b2) = (40.0, 4.5, 41.0, 5.2);
        let sample = |a: f64, b: f64, rates: &[f64]| -> RdCurve {
            curve("x", &rates.iter().map(|&r| (r, a + b * r.ln())).collect::<Vec<_>>())
        };
        let anchor = sample(a1, b1, &[0.1, 0.2, 0.4, 0.8, 1.6]);
        let test = sample(a2, b2, &[0.12, 0.25, 0.5, 0.9, 1.5]);
        let (lo, hi) = (
            anchor.quality_range().0.max(test.quality_range().0),
            anchor.quality_range().1.min(test.quality_range().1),
        );
        // ∫ (q − a2)/b2 − (q − a1)/b1 dq over [lo, hi]
        let prim = |q: f64| (q * q / 2.0 - a2 * q) / b2 - (q * q / 2.0 - a1 * q) / b1;
        let expected = (((prim(hi) - prim(lo)) / (hi - lo)).exp() - 1.0) * 100.0;
        let got = bd_rate(&anchor, &test).unwrap();
        assert!((got - expected).abs() < 0.2, "{got} vs {expected}");
    }

    #[test]
    fn rejects_short_or_disjoint_curves() {
        let short = curve("s", &[(0.1, 30.0), (0.2, 31.0), (0.3, 32.0)]);
        assert!(bd_rate(&anchor(), &short).is_err());
        let far = curve("f", &[(0.1, 50.0), (0.2, 51.0), (0.3, 52.0), (0.4, 53.0)]);
        assert!(matches!(bd_rate(&anchor(), &far), Err(S2cError::InvalidArgument(_))));
        assert!(RdCurve::new("bad", vec![RdPoint { bpp: 0.0, quality: 30.0 }]).is_err());
    }

    /// A kinked curve defeats the cubic; the Hermite fallback still recovers
    /// a pure rate scaling exactly.
    #[test]
    fn hermite_fallback() {
        let kinked = curve("k", &[(0.1, 30.0), (0.11, 34.0), (0.12, 34.1), (0.5, 34.2), (2.0, 34.3), (4.0, 40.0)]);
        let (q, r) = knots(&kinked);
        let (lo, hi) = kinked.quality_range();
        assert!(!poly_increasing(&cubic_fit(&q, &r), lo, hi));
        let got = bd_rate(&kinked, &scaled(&kinked, 0.8)).unwrap();
        assert!((got + 20.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn hermite_integrates_cubics_through_the_knots_of_a_line() {
        let x = vec![0.0, 1.0, 2.5, 4.0];
        let p = Pchip::new(x.clone(), x.iter().map(|v| 3.0 * v + 1.0).collect());
        // ∫₀.₅³ (3x + 1) dx
        assert!((p.integral(0.5, 3.0) - (1.5 * 9.0 + 3.0 - 1.5 * 0.25 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rd.csv");
        let rows = vec![
            RdRow { label: "a".into(), bpp: 0.2, psnr: 30.0, msssim: Some(0.95) },
            RdRow { label: "b".into(), bpp: 0.3, psnr: 31.0, msssim: None },
        ];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows(&path).unwrap(), rows);
        assert_eq!(curves_from_rows(&rows, Quality::Psnr).unwrap().len(), 2);
        assert!(curves_from_rows(&rows, Quality::Msssim).is_err());
    }

    fn arb_curve() -> impl Strategy<Value = RdCurve> {
        // concave, increasing quality in ln(bpp) with random spacing
        (prop::collection::vec(0.05f64..0.6, 4..8), 28.0f64..34.0, 3.0f64..6.0, -0.4f64..0.0).prop_map(
            |(steps, q0, slope, curv)| {
                let mut r = -2.5f64;
                let pts = steps
                    .iter()
                    .map(|s| {
                        r += s;
                        let t = r + 2.5;
                        (r.exp(), q0 + slope * t + curv * t * t)
                    })
                    .collect::<Vec<_>>();
                curve("p", &pts)
            },
        )
    }

    proptest! {
        #[test]
        fn self_comparison_is_zero(a in arb_curve()) {
            prop_assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn antisymmetry(a in arb_curve(), b in arb_curve()) {
            let (a_lo, a_hi) = a.quality_range();
            let (b_lo, b_hi) = b.quality_range();
            prop_assume!(a_hi.min(b_hi) > a_lo.max(b_lo));
            let ab = bd_rate(&a, &b).unwrap() / 100.0;
            let ba = bd_rate(&b, &a).unwrap() / 100.0;
            prop_assert!((ab + ba / (1.0 + ba)).abs() < 1e-9, "{} {}", ab, ba);
        }
    }
}
