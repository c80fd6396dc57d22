//! Enter/exit timing hooks used by blocks and transforms.
//!
//! Regions nest; each region is charged only its *exclusive* time, so the
//! per-bucket totals of one recording add up to the recorded wall time.
//! When no recorder is installed the hooks cost one thread-local read.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bucket {
    Spatial,
    Channel,
    Other,
}

struct Frame {
    bucket: Bucket,
    start: Instant,
    children: Duration,
}

#[derive(Default)]
struct Recorder {
    stages: Vec<String>,
    frames: Vec<Frame>,
    totals: BTreeMap<(String, Bucket), Duration>,
}

thread_local! {
    static RECORDER: RefCell<Option<Recorder>> = const { RefCell::new(None) };
}

/// Exclusive wall time per `(stage label, bucket)`.
#[derive(Debug, Clone, Default)]
pub struct Recording {
    pub totals: BTreeMap<(String, Bucket), Duration>,
    pub wall: Duration,
}

impl Recording {
    pub fn bucket_total(&self, bucket: Bucket) -> Duration {
        self.totals
            .iter()
            .filter(|((_, b), _)| *b == bucket)
            .map(|(_, d)| *d)
            .sum()
    }
}

pub fn is_recording() -> bool {
    RECORDER.with(|r| r.borrow().is_some())
}

/// Time `f` into `bucket` when a recording is active.
pub fn region<T>(bucket: Bucket, f: impl FnOnce() -> T) -> T {
    let active = RECORDER.with(|r| match r.borrow_mut().as_mut() {
        Some(rec) => {
            rec.frames.push(Frame {
                bucket,
                start: Instant::now(),
                children: Duration::ZERO,
            });
            true
        }
        None => false,
    });
    if !active {
        return f();
    }
    let out = f();
    RECORDER.with(|r| {
        if let Some(rec) = r.borrow_mut().as_mut() {
            if let Some(frame) = rec.frames.pop() {
                let elapsed = frame.start.elapsed();
                let label = rec.stages.last().cloned().unwrap_or_default();
                *rec.totals.entry((label, frame.bucket)).or_default() +=
                    elapsed.saturating_sub(frame.children);
                if let Some(parent) = rec.frames.last_mut() {
                    parent.children += elapsed;
                }
            }
        }
    });
    out
}

/// Attribute everything inside `f` to stage `label` (nested labels join with '/').
pub fn stage<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let pushed = RECORDER.with(|r| match r.borrow_mut().as_mut() {
        Some(rec) => {
            let full = match rec.stages.last() {
                Some(parent) if !parent.is_empty() => format!("{parent}/{label}"),
                _ => label.to_string(),
            };
            rec.stages.push(full);
            true
        }
        None => false,
    });
    if !pushed {
        return f();
    }
    // Close the parent's running slice so time is charged to the right label.
    let out = region(Bucket::Other, f);
    RECORDER.with(|r| {
        if let Some(rec) = r.borrow_mut().as_mut() {
            rec.stages.pop();
        }
    });
    out
}

struct Uninstall;

impl Drop for Uninstall {
    fn drop(&mut self) {
        RECORDER.with(|r| r.borrow_mut().take());
    }
}

/// Run `f` with a fresh recorder on this thread.
pub fn record<T>(f: impl FnOnce() -> T) -> (T, Recording) {
    RECORDER.with(|r| {
        let mut slot = r.borrow_mut();
        assert!(slot.is_none(), "nested profiler recordings are not supported");
        *slot = Some(Recorder {
            stages: vec![String::new()],
            ..Recorder::default()
        });
    });
    let guard = Uninstall;
    let start = Instant::now();
    let out = region(Bucket::Other, f);
    let wall = start.elapsed();
    let rec = RECORDER.with(|r| r.borrow_mut().take()).expect("recorder present");
    drop(guard);
    (
        out,
        Recording {
            totals: rec.totals,
            wall,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin(d: Duration) {
        let t = Instant::now();
        while t.elapsed() < d {
            std::hint::spin_loop();
        }
    }

    #[test]
    fn exclusive_times_add_up() {
        let ((), rec) = record(|| {
            spin(Duration::from_millis(2));
            stage("s1", || {
                region(Bucket::Spatial, || spin(Duration::from_millis(3)));
                region(Bucket::Channel, || {
                    spin(Duration::from_millis(1));
                    region(Bucket::Spatial, || spin(Duration::from_millis(2)));
                });
            });
        });
        let sum: Duration = rec.totals.values().sum();
        let diff = rec.wall.as_secs_f64() - sum.as_secs_f64();
        assert!(diff.abs() < 0.05 * rec.wall.as_secs_f64(), "{rec:?}");
        let spatial = rec.totals[&("s1".to_string(), Bucket::Spatial)];
        assert!(spatial >= Duration::from_millis(5));
        let channel = rec.totals[&("s1".to_string(), Bucket::Channel)];
        assert!(channel >= Duration::from_millis(1));
        assert!(!is_recording());
    }

    #[test]
    fn hooks_are_transparent_without_recorder() {
        assert_eq!(region(Bucket::Spatial, || 7), 7);
        assert_eq!(stage("x", || 8), 8);
    }
}
