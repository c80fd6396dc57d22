//! Finite probability tables shared by encoder and decoder.
//!
//! Gaussian scales are snapped to a fixed log-spaced ladder so both sides
//! build identical tables from `σ` alone; the factorized prior gets one table
//! per channel over the stream's value range.

use std::collections::HashMap;

use super::{CdfTable, CodingError};
use crate::entropy::{bin_probability, FactorizedPrior};
use crate::params::ParamStore;

pub const SCALE_COUNT: usize = 64;
pub const SCALE_MIN: f64 = 0.11;
pub const SCALE_MAX: f64 = 256.0;
/// Largest symbol magnitude a Gaussian table can hold (alphabet `2M + 1`).
pub const MAX_MAGNITUDE: usize = 16383;

fn log_step() -> f64 {
    (SCALE_MAX.ln() - SCALE_MIN.ln()) / (SCALE_COUNT - 1) as f64
}

pub fn scale_level(i: usize) -> f64 {
    (SCALE_MIN.ln() + i as f64 * log_step()).exp()
}

/// Nearest ladder entry in the log domain, clamped to the ladder's ends.
pub fn scale_index(sigma: f64) -> usize {
    if sigma.is_nan() || sigma <= SCALE_MIN {
        return 0;
    }
    let i = ((sigma.ln() - SCALE_MIN.ln()) / log_step()).round();
    (i as usize).min(SCALE_COUNT - 1)
}

/// Gaussian tables over symbols `δ + M`, `δ ∈ [−M, M]`, built on demand.
pub struct GaussianTables {
    magnitude: usize,
    tables: HashMap<usize, CdfTable>,
}

impl GaussianTables {
    pub fn new(magnitude: usize) -> Result<Self, CodingError> {
        if magnitude > MAX_MAGNITUDE {
            return Err(CodingError::InvalidTable(format!(
                "latent magnitude {magnitude} exceeds {MAX_MAGNITUDE}"
            )));
        }
        Ok(Self {
            magnitude,
            tables: HashMap::new(),
        })
    }

    pub fn magnitude(&self) -> usize {
        self.magnitude
    }

    pub fn get(&mut self, scale: usize) -> Result<&CdfTable, CodingError> {
        if !self.tables.contains_key(&scale) {
            let s = scale_level(scale);
            let m = self.magnitude as i64;
            let pmf: Vec<f64> = (-m..=m).map(|d| bin_probability(d as f64, s)).collect();
            self.tables.insert(scale, CdfTable::from_pmf(&pmf)?);
        }
        Ok(&self.tables[&scale])
    }
}

/// One table per hyper-latent channel over the integer range `[lo, hi]`.
pub fn factorized_tables(prior: &FactorizedPrior, store: &ParamStore, lo: i64, hi: i64) -> Result<Vec<CdfTable>, CodingError> {
    if hi < lo {
        return Err(CodingError::InvalidTable(format!("empty range [{lo}, {hi}]")));
    }
    (0..prior.channels)
        .map(|c| {
            let pmf = prior.bin_probabilities(store, c, (lo..=hi).map(|v| v as f64));
            CdfTable::from_pmf(&pmf)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::range_encode;

    #[test]
    fn ladder_endpoints_and_snapping() {
        assert!((scale_level(0) - SCALE_MIN).abs() < 1e-12);
        assert!((scale_level(SCALE_COUNT - 1) - SCALE_MAX).abs() < 1e-9);
        assert_eq!(scale_index(1e-6), 0);
        assert_eq!(scale_index(f64::NAN), 0);
        assert_eq!(scale_index(1e9), SCALE_COUNT - 1);
        for i in 0..SCALE_COUNT {
            assert_eq!(scale_index(scale_level(i)), i);
            // anything within half a step snaps back
            assert_eq!(scale_index(scale_level(i) * (0.49 * log_step()).exp()), i);
        }
    }

    #[test]
    fn gaussian_tables_match_bin_masses() {
        let mut t = GaussianTables::new(20).unwrap();
        let idx = scale_index(2.0);
        let s = scale_level(idx);
        let table = t.get(idx).unwrap().clone();
        assert_eq!(table.len(), 41);
        for d in -20i64..=20 {
            let p = bin_probability(d as f64, s);
            let q = table.prob((d + 20) as usize);
            assert!((p - q).abs() < 2e-4, "δ={d}: {p} vs {q}");
        }
        assert!(GaussianTables::new(MAX_MAGNITUDE + 1).is_err());
    }

    /// Wider scales spread mass away from zero: the zero residual's table
    /// frequency never rises and a run of zeros never gets materially cheaper.
    #[test]
    fn code_length_is_monotone_in_scale() {
        let m = 4096;
        let mut t = GaussianTables::new(m).unwrap();
        let zeros = vec![m; 2000];
        let (mut last_len, mut last_freq) = (0, u32::MAX);
        for i in 0..SCALE_COUNT {
            let table = t.get(i).unwrap().clone();
            let freq = table.freq(m);
            let len = range_encode(&zeros, &vec![&table; zeros.len()]).unwrap().len();
            assert!(freq <= last_freq, "scale {i}: freq {freq} > {last_freq}");
            // same frequency can still land a byte apart depending on the interval position
            assert!(len + 2 >= last_len, "scale {i}: {len} < {last_len}");
            (last_len, last_freq) = (len, freq);
        }
    }
}
