//! Wall-clock decomposition of a forward pass into spatial-interaction,
//! channel-aggregation and everything else, per stage.

use std::collections::BTreeMap;
use std::fs::File;
use std::time::Duration;

use serde::Serialize;
use s2c_tensor::{Tensor, Var};

use crate::entropy::Quantizer;
use crate::error::{Result, S2cError};
use crate::model::Model;
use crate::profile::{self, Bucket, Recording};

/// Selects the compute device; only `cpu` exists in this build.
pub const DEVICE_ENV: &str = "S2C_DEVICE";
pub const MIN_REPS: usize = 3;

pub fn device() -> Result<String> {
    match std::env::var(DEVICE_ENV) {
        Err(_) => Ok("cpu".into()),
        Ok(d) if d.eq_ignore_ascii_case("cpu") => Ok("cpu".into()),
        Ok(d) => Err(S2cError::Config(format!("{DEVICE_ENV}={d:?}: only \"cpu\" is available"))),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BucketTimes {
    pub spatial_ms: f64,
    pub channel_ms: f64,
    pub other_ms: f64,
}

impl BucketTimes {
    pub fn sum(&self) -> f64 {
        self.spatial_ms + self.channel_ms + self.other_ms
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyProfile {
    pub variant: String,
    pub device: String,
    pub threads: usize,
    pub height: usize,
    pub width: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Median end-to-end forward time.
    pub total_ms: f64,
    /// Per-bucket medians of each repetition's bucket totals.
    pub buckets: BucketTimes,
    /// Block stacks of the analysis and synthesis transforms, whose
    /// spatial operator is what the presets vary.
    pub main_blocks: BucketTimes,
    /// Worst per-repetition `|Σ buckets − wall| / wall`; checks the
    /// instrumentation itself, independent of run-to-run noise.
    pub worst_rep_gap: f64,
    /// Per-stage medians; the empty label holds work outside every stage.
    pub stages: BTreeMap<String, BucketTimes>,
}

impl LatencyProfile {
    /// `|Σ bucket medians − median total| / median total`.
    pub fn reconciliation_error(&self) -> f64 {
        (self.buckets.sum() - self.total_ms).abs() / self.total_ms
    }

    pub fn spatial_share_of_blocks(&self) -> f64 {
        self.main_blocks.spatial_ms / self.main_blocks.sum()
    }

    /// Spatial : channel time ratio in the main block stacks.
    pub fn spatial_channel_ratio(&self) -> f64 {
        self.main_blocks.spatial_ms / self.main_blocks.channel_ms
    }

    pub fn to_report(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn probe_image(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(&[1, 3, h, w], |i| {
        let p = (i % (h * w)) as f64;
        0.5 + 0.4 * (p * 0.013 + (i / (h * w)) as f64).sin()
    })
}

/// Held for the duration of a profile so concurrent profilers on one
/// machine do not skew each other.
fn acquire_lock() -> Result<File> {
    let path = std::env::temp_dir().join("s2c-profiler.lock");
    let f = File::create(&path).map_err(|e| S2cError::io(&path, e))?;
    if f.try_lock().is_err() {
        log::info!("waiting for another profiler to release {}", path.display());
        f.lock().map_err(|e| S2cError::io(&path, e))?;
    }
    Ok(f)
}

/// Median-of-`reps` timing of the evaluation-mode forward pass at `h × w`,
/// after `warmup` discarded runs.
pub fn profile_latency(model: &Model, h: usize, w: usize, reps: usize, warmup: usize) -> Result<LatencyProfile> {
    if reps < MIN_REPS {
        return Err(S2cError::InvalidArgument(format!("need at least {MIN_REPS} repetitions, got {reps}")));
    }
    let device = device()?;
    let x = Var::constant(probe_image(h, w));
    model.check_input(&x)?;
    let _lock = acquire_lock()?;
    let ctx = model.params.bind(false);
    let run = || -> Result<Recording> {
        let (out, rec) = profile::record(|| model.forward(&ctx, &x, Quantizer::Eval));
        out?;
        Ok(rec)
    };
    for _ in 0..warmup {
        run()?;
    }
    let recs = (0..reps).map(|_| run()).collect::<Result<Vec<_>>>()?;

    let worst_rep_gap = recs
        .iter()
        .map(|r| {
            let sum: Duration = r.totals.values().sum();
            (sum.as_secs_f64() - r.wall.as_secs_f64()).abs() / r.wall.as_secs_f64()
        })
        .fold(0.0, f64::max);
    let mut per_key: BTreeMap<(String, Bucket), Vec<f64>> = BTreeMap::new();
    for r in &recs {
        for key in r.totals.keys() {
            per_key.entry(key.clone()).or_default();
        }
    }
    for r in &recs {
        for (key, v) in per_key.iter_mut() {
            v.push(r.totals.get(key).copied().map_or(0.0, ms));
        }
    }
    let mut stages: BTreeMap<String, BucketTimes> = BTreeMap::new();
    for ((label, bucket), v) in per_key {
        let t = stages.entry(label).or_default();
        let m = median(v);
        match bucket {
            Bucket::Spatial => t.spatial_ms = m,
            Bucket::Channel => t.channel_ms = m,
            Bucket::Other => t.other_ms = m,
        }
    }
    // each rep is reduced to its three buckets before taking medians, so the
    // totals are medians of bucket times rather than sums of many per-stage
    // medians, which drift low when per-stage noise is skewed
    let bucket_medians = |keep: &dyn Fn(&str) -> bool| {
        let of = |bucket: Bucket| {
            median(
                recs.iter()
                    .map(|r| {
                        r.totals
                            .iter()
                            .filter(|((l, b), _)| *b == bucket && keep(l))
                            .map(|(_, d)| ms(*d))
                            .sum()
                    })
                    .collect(),
            )
        };
        BucketTimes {
            spatial_ms: of(Bucket::Spatial),
            channel_ms: of(Bucket::Channel),
            other_ms: of(Bucket::Other),
        }
    };
    let buckets = bucket_medians(&|_| true);
    // stacks are nested one level under their transform's label
    let main_blocks = bucket_medians(&|l| l.starts_with("g_a/") || l.starts_with("g_s/"));
    Ok(LatencyProfile {
        variant: model.config.variant_name.clone(),
        device,
        threads: 1,
        height: h,
        width: w,
        reps,
        warmup,
        total_ms: median(recs.iter().map(|r| ms(r.wall)).collect()),
        buckets,
        main_blocks,
        worst_rep_gap,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StageKind;
    use crate::testutil::{tiny, tiny_hybrid};
    use std::sync::Mutex;

    // Model construction in a sibling test would skew the timings.
    static SERIAL: Mutex<()> = Mutex::new(());

    #[test]
    fn identity_blocks_spend_no_time_on_spatial_mixing() {
        let _serial = SERIAL.lock().unwrap();
        let model = Model::new(tiny([StageKind::I; 3]), 0).unwrap();
        let p = profile_latency(&model, 256, 256, 9, 2).unwrap();
        assert!(p.spatial_share_of_blocks() < 0.02, "{}", p.to_report());
        assert!(p.worst_rep_gap < 0.05, "{}", p.to_report());
    }

    #[test]
    fn buckets_reconcile_and_report_parses() {
        let _serial = SERIAL.lock().unwrap();
        let model = Model::new(tiny_hybrid(), 0).unwrap();
        let p = profile_latency(&model, 128, 128, 9, 2).unwrap();
        assert!(p.worst_rep_gap < 0.05, "{}", p.to_report());
        assert!(p.buckets.spatial_ms > 0.0 && p.buckets.channel_ms > 0.0);
        assert!(p.stages.keys().any(|k| k.starts_with("g_a/")));
        let parsed: toml::Value = toml::from_str(&p.to_report()).unwrap();
        assert_eq!(parsed["reps"].as_integer(), Some(9));
    }

    #[test]
    fn rejects_too_few_reps() {
        let _serial = SERIAL.lock().unwrap();
        let model = Model::new(tiny_hybrid(), 0).unwrap();
        assert!(matches!(profile_latency(&model, 64, 64, 2, 0), Err(S2cError::InvalidArgument(_))));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
