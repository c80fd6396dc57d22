//! Carry-less 64-bit range coder with 16-bit frequency tables.

use super::CodingError;

pub const PRECISION: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION;
const TOP: u64 = 1 << 56;
const BOT: u64 = 1 << 48;
/// Bytes emitted by `finish` after the last renormalization.
pub const TERMINATOR_BYTES: usize = 2;

/// Cumulative frequencies of one alphabet: `cum[0] = 0`, `cum[n] = TOTAL`,
/// every symbol has frequency ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    cum: Vec<u32>,
}

impl CdfTable {
    pub fn from_cumulative(cum: Vec<u32>) -> Result<Self, CodingError> {
        let ok = cum.len() >= 2
            && cum[0] == 0
            && *cum.last().unwrap() == TOTAL
            && cum.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(CodingError::InvalidTable(format!(
                "cumulative table with {} entries is not strictly increasing from 0 to {TOTAL}",
                cum.len()
            )));
        }
        Ok(Self { cum })
    }

    /// Quantize a probability vector, reserving one count per symbol so
    /// nothing becomes uncodable. Non-finite or negative entries count as 0.
    pub fn from_pmf(pmf: &[f64]) -> Result<Self, CodingError> {
        let n = pmf.len();
        if n == 0 || n > TOTAL as usize / 2 {
            return Err(CodingError::InvalidTable(format!("alphabet size {n} unsupported")));
        }
        let clean: Vec<f64> = pmf.iter().map(|&p| if p.is_finite() && p > 0.0 { p } else { 0.0 }).collect();
        let mass: f64 = clean.iter().sum();
        let spare = (TOTAL as usize - n) as f64;
        let shares: Vec<f64> = clean
            .iter()
            .map(|&p| if mass > 0.0 { p / mass * spare } else { spare / n as f64 })
            .collect();
        let mut freq: Vec<u32> = shares.iter().map(|s| 1 + s.floor() as u32).collect();
        // largest-remainder apportionment of the counts lost to flooring
        let mut left = i64::from(TOTAL) - freq.iter().map(|&f| i64::from(f)).sum::<i64>();
        while left < 0 {
            // float slop pushed the floors past the budget
            let big = (0..n).max_by_key(|&i| (freq[i], std::cmp::Reverse(i))).unwrap_or(0);
            freq[big] -= 1;
            left += 1;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(left as usize) {
            freq[i] += 1;
        }
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0);
        let mut acc = 0;
        for f in freq {
            acc += f;
            cum.push(acc);
        }
        Self::from_cumulative(cum)
    }

    pub fn uniform(n: usize) -> Result<Self, CodingError> {
        Self::from_pmf(&vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }

    /// Model probability of symbol `s` after quantization.
    pub fn prob(&self, s: usize) -> f64 {
        f64::from(self.freq(s)) / f64::from(TOTAL)
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    fn find(&self, target: u32) -> usize {
        // last index with cum[i] <= target
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u64::MAX,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, symbol: usize, table: &CdfTable) -> Result<(), CodingError> {
        if symbol >= table.len() {
            return Err(CodingError::SymbolOutOfRange {
                symbol,
                alphabet: table.len(),
            });
        }
        let r = self.range >> PRECISION;
        self.low = self.low.wrapping_add(r * u64::from(table.cum[symbol]));
        self.range = r * u64::from(table.freq(symbol));
        self.normalize();
        Ok(())
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    /// Emit the shortest suffix identifying a value inside the final interval:
    /// the first multiple of 2⁴⁸ at or above `low`.
    pub fn finish(mut self) -> Vec<u8> {
        let v = terminal_value(self.low);
        self.out.push((v >> 56) as u8);
        self.out.push((v >> 48) as u8);
        self.out
    }
}

fn terminal_value(low: u64) -> u64 {
    low.wrapping_add(BOT - 1) & !(BOT - 1)
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    low: u64,
    range: u64,
    code: u64,
    shifts: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self {
            data,
            pos: 0,
            low: 0,
            range: u64::MAX,
            code: 0,
            shifts: 0,
        };
        for _ in 0..8 {
            d.code = (d.code << 8) | u64::from(d.next_byte());
        }
        d
    }

    /// Bytes past the end read as zero; `finish` reports the truncation.
    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<usize, CodingError> {
        let r = self.range >> PRECISION;
        let offset = self.code.wrapping_sub(self.low) / r;
        if offset >= u64::from(TOTAL) {
            return Err(CodingError::Corrupt("code value outside the coding interval".into()));
        }
        let s = table.find(offset as u32);
        self.low = self.low.wrapping_add(r * u64::from(table.cum[s]));
        self.range = r * u64::from(table.freq(s));
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = (self.code << 8) | u64::from(self.next_byte());
            self.low <<= 8;
            self.range <<= 8;
            self.shifts += 1;
            if self.shifts > self.data.len() {
                return Err(CodingError::Truncated);
            }
        }
        Ok(s)
    }

    /// Check that the stream ends exactly where the encoder stopped.
    pub fn finish(self) -> Result<(), CodingError> {
        let expected = self.shifts + TERMINATOR_BYTES;
        if self.data.len() < expected {
            return Err(CodingError::Truncated);
        }
        if self.data.len() > expected {
            return Err(CodingError::TrailingData(self.data.len() - expected));
        }
        let v = terminal_value(self.low);
        let tail = &self.data[self.shifts..];
        if tail != [(v >> 56) as u8, (v >> 48) as u8] {
            return Err(CodingError::Corrupt("terminator mismatch".into()));
        }
        Ok(())
    }
}

/// Encode `symbols[i]` with `tables[i]`.
pub fn range_encode(symbols: &[usize], tables: &[&CdfTable]) -> Result<Vec<u8>, CodingError> {
    if symbols.len() != tables.len() {
        return Err(CodingError::InvalidTable(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

/// Decode `tables.len()` symbols and verify the stream is consumed exactly.
pub fn range_decode(stream: &[u8], tables: &[&CdfTable]) -> Result<Vec<usize>, CodingError> {
    let mut dec = RangeDecoder::new(stream);
    let out = tables
        .iter()
        .map(|t| dec.decode(t))
        .collect::<Result<Vec<_>, _>>()?;
    dec.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shannon_bits(symbols: &[usize], table: &CdfTable) -> f64 {
        symbols.iter().map(|&s| -table.prob(s).log2()).sum()
    }

    #[test]
    fn empty_stream_is_terminator_only() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert_eq!(bytes.len(), TERMINATOR_BYTES);
        assert_eq!(range_decode(&bytes, &[]).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn zero_entropy_source_costs_nothing() {
        let t = CdfTable::from_cumulative(vec![0, TOTAL]).unwrap();
        let tables = vec![&t; 10_000];
        let bytes = range_encode(&vec![0; 10_000], &tables).unwrap();
        assert_eq!(bytes.len(), TERMINATOR_BYTES);
        assert_eq!(range_decode(&bytes, &tables).unwrap(), vec![0; 10_000]);
    }

    #[test]
    fn uniform_256_costs_one_byte_per_symbol() {
        let t = CdfTable::uniform(256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let syms: Vec<usize> = (0..4096).map(|_| rng.gen_range(0..256)).collect();
        let tables = vec![&t; syms.len()];
        let bytes = range_encode(&syms, &tables).unwrap();
        assert!(bytes.len().abs_diff(4096) <= 8, "{}", bytes.len());
        assert_eq!(range_decode(&bytes, &tables).unwrap(), syms);
    }

    #[test]
    fn skewed_source_is_near_shannon() {
        let t = CdfTable::from_pmf(&[0.7, 0.15, 0.1, 0.04, 0.01]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let syms: Vec<usize> = (0..10_000)
            .map(|_| {
                let u = rng.gen_range(0..TOTAL);
                t.find(u)
            })
            .collect();
        let tables = vec![&t; syms.len()];
        let bytes = range_encode(&syms, &tables).unwrap();
        let bound = shannon_bits(&syms, &t) / 8.0;
        assert!((bytes.len() as f64) <= bound * 1.01 + 6.0, "{} vs {bound}", bytes.len());
        assert_eq!(range_decode(&bytes, &tables).unwrap(), syms);
    }

    #[test]
    fn out_of_range_symbol_is_rejected() {
        let t = CdfTable::uniform(4).unwrap();
        assert!(matches!(
            range_encode(&[4], &[&t]),
            Err(CodingError::SymbolOutOfRange { symbol: 4, alphabet: 4 })
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_detected() {
        let t = CdfTable::uniform(200).unwrap();
        let syms: Vec<usize> = (0..500).map(|i| (i * 37) % 200).collect();
        let tables = vec![&t; syms.len()];
        let bytes = range_encode(&syms, &tables).unwrap();
        for cut in [1, 2, 5, bytes.len() / 2] {
            assert!(range_decode(&bytes[..bytes.len() - cut], &tables).is_err());
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(range_decode(&longer, &tables), Err(CodingError::TrailingData(1))));
    }

    #[test]
    fn pmf_quantization_keeps_every_symbol() {
        let t = CdfTable::from_pmf(&[1.0, 0.0, 1e-30, f64::NAN, 0.5]).unwrap();
        assert!((0..5).all(|s| t.freq(s) >= 1));
        assert_eq!(t.cumulative()[5], TOTAL);
        assert!(CdfTable::from_cumulative(vec![0, 5, 5, TOTAL]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn round_trips_random_tables(seed in any::<u64>(), len in 0usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tables: Vec<CdfTable> = (0..8)
                .map(|_| {
                    let n = rng.gen_range(1..300);
                    let pmf: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(6)).collect();
                    CdfTable::from_pmf(&pmf).unwrap()
                })
                .collect();
            let picks: Vec<&CdfTable> = (0..len).map(|_| &tables[rng.gen_range(0..8)]).collect();
            let syms: Vec<usize> = picks.iter().map(|t| rng.gen_range(0..t.len())).collect();
            let bytes = range_encode(&syms, &picks).unwrap();
            prop_assert_eq!(range_decode(&bytes, &picks).unwrap(), syms);
        }

        #[test]
        fn corrupted_streams_never_panic(seed in any::<u64>(), flips in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = CdfTable::from_pmf(&[0.5, 0.2, 0.2, 0.05, 0.05]).unwrap();
            let tables = vec![&t; 300];
            let syms: Vec<usize> = (0..300).map(|_| rng.gen_range(0..5)).collect();
            let mut bytes = range_encode(&syms, &tables).unwrap();
            for _ in 0..flips {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            if rng.gen_bool(0.3) {
                bytes.truncate(rng.gen_range(0..bytes.len()));
            }
            let _ = range_decode(&bytes, &tables);
        }
    }
}
