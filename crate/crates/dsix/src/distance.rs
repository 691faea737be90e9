//! Euclidean distance and summary-space lower bounds.
//!
//! Every engine compares in squared space and only takes the square root
//! when a result is reported, so the `_sq` variants are the hot paths.
//! Values are stored as `f32`; all accumulation happens in `f64`.

use crate::error::Error;
use crate::summary::{BreakpointTable, FlatWords, IsaxWord, SummaryParams};

/// Squared Euclidean distance with 64-bit accumulation.
pub fn euclidean_sq(a: &[f32], b: &[f32]) -> Result<f64, Error> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    Ok(acc)
}

pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64, Error> {
    euclidean_sq(a, b).map(f64::sqrt)
}

/// Squared Euclidean distance that gives up once the partial sum exceeds
/// `cutoff_sq`. Abandoned computations return `None`; they can only ever
/// have exceeded the cutoff, so the caller loses nothing.
pub fn euclidean_sq_early_abandon(a: &[f32], b: &[f32], cutoff_sq: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    // Check the cutoff once per 16-element block to keep the loop tight.
    for (ca, cb) in a.chunks(16).zip(b.chunks(16)) {
        for (&x, &y) in ca.iter().zip(cb) {
            let d = x as f64 - y as f64;
            acc += d * d;
        }
        if acc > cutoff_sq {
            return None;
        }
    }
    Some(acc)
}

/// Gap from a query segment mean to a breakpoint region `[lo, hi)`. Zero
/// when the mean lies inside the region.
#[inline]
fn region_gap(mean: f64, lo: f64, hi: f64) -> f64 {
    if mean < lo {
        lo - mean
    } else if mean > hi {
        mean - hi
    } else {
        0.0
    }
}

#[inline]
fn region_bounds(value: u16, thresholds: &[f64]) -> (f64, f64) {
    let lo = if value == 0 {
        f64::NEG_INFINITY
    } else {
        thresholds[value as usize - 1]
    };
    let hi = if value as usize == thresholds.len() {
        f64::INFINITY
    } else {
        thresholds[value as usize]
    };
    (lo, hi)
}

/// Squared lower bound between a query's PAA means and an iSAX region with
/// per-segment cardinalities: `(n/w) * sum(gap_i^2)`.
///
/// For any series whose summary lies inside the region, this never exceeds
/// the squared Euclidean distance to the query, which is what licenses
/// pruning against a best-so-far value.
pub fn mindist_sq(
    query_paa: &[f64],
    word: &IsaxWord,
    params: &SummaryParams,
    table: &BreakpointTable,
) -> f64 {
    debug_assert_eq!(query_paa.len(), word.segments());
    let mut acc = 0.0f64;
    for (&mean, sym) in query_paa.iter().zip(word.symbols()) {
        let thresholds = table.thresholds(sym.card_bits);
        let (lo, hi) = region_bounds(sym.value, thresholds);
        let gap = region_gap(mean, lo, hi);
        acc += gap * gap;
    }
    params.segment_len() as f64 * acc
}

pub fn mindist(
    query_paa: &[f64],
    word: &IsaxWord,
    params: &SummaryParams,
    table: &BreakpointTable,
) -> f64 {
    mindist_sq(query_paa, word, params, table).sqrt()
}

/// [`mindist_sq`] against raw symbol values at one uniform cardinality.
pub fn mindist_sq_uniform(
    query_paa: &[f64],
    symbols: &[u16],
    card_bits: u8,
    params: &SummaryParams,
    table: &BreakpointTable,
) -> f64 {
    debug_assert_eq!(query_paa.len(), symbols.len());
    let thresholds = table.thresholds(card_bits);
    let mut acc = 0.0f64;
    for (&mean, &value) in query_paa.iter().zip(symbols) {
        let (lo, hi) = region_bounds(value, thresholds);
        let gap = region_gap(mean, lo, hi);
        acc += gap * gap;
    }
    params.segment_len() as f64 * acc
}

/// Precomputed squared-gap lookup table for one query against every symbol
/// of every segment at a fixed cardinality. Turns the per-word lower bound
/// into `w` table lookups and an add chain, which vectorizes well.
pub struct MindistKernel {
    segments: usize,
    stride: usize,
    scale: f64,
    gaps_sq: Vec<f64>,
}

impl MindistKernel {
    pub fn new(
        query_paa: &[f64],
        card_bits: u8,
        params: &SummaryParams,
        table: &BreakpointTable,
    ) -> Self {
        let thresholds = table.thresholds(card_bits);
        let stride = 1usize << card_bits;
        let segments = params.segments();
        let mut gaps_sq = vec![0.0f64; segments * stride];
        for (seg, &mean) in query_paa.iter().enumerate() {
            let row = &mut gaps_sq[seg * stride..(seg + 1) * stride];
            for (value, slot) in row.iter_mut().enumerate() {
                let (lo, hi) = region_bounds(value as u16, thresholds);
                let gap = region_gap(mean, lo, hi);
                *slot = gap * gap;
            }
        }
        Self {
            segments,
            stride,
            scale: params.segment_len() as f64,
            gaps_sq,
        }
    }

    /// Squared lower bound for one symbol row. Bit-identical to
    /// [`mindist_sq_uniform`] on the same inputs.
    #[inline]
    pub fn bound_sq(&self, row: &[u16]) -> f64 {
        debug_assert_eq!(row.len(), self.segments);
        let mut acc = 0.0f64;
        for (seg, &value) in row.iter().enumerate() {
            acc += self.gaps_sq[seg * self.stride + value as usize];
        }
        self.scale * acc
    }

    /// Squared lower bounds for a row range of a flat word block, appended
    /// to `out`.
    pub fn batch_sq_into(&self, words: &FlatWords, start: usize, len: usize, out: &mut Vec<f64>) {
        debug_assert_eq!(words.segments(), self.segments);
        out.reserve(len);
        for i in start..start + len {
            out.push(self.bound_sq(words.row(i)));
        }
    }
}

/// Lower bounds for a whole block of same-cardinality words, element-wise
/// identical to the scalar path.
pub fn batched_mindist(
    query_paa: &[f64],
    words: &FlatWords,
    params: &SummaryParams,
    table: &BreakpointTable,
) -> Vec<f64> {
    let kernel = MindistKernel::new(query_paa, words.card_bits(), params, table);
    let mut out = Vec::with_capacity(words.len());
    kernel.batch_sq_into(words, 0, words.len(), &mut out);
    for b in &mut out {
        *b = b.sqrt();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::{compute_isax, compute_paa};

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let x = [1.5f32, -2.0, 7.25, 0.0];
        assert_eq!(euclidean(&x, &x).unwrap(), 0.0);
        assert!(matches!(
            euclidean(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn euclidean_matches_naive_two_pass() {
        // Oracle: materialize squared differences, then sum.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f32 / (1u32 << 30) as f32) - 4.0
        };
        let a: Vec<f32> = (0..256).map(|_| next()).collect();
        let b: Vec<f32> = (0..256).map(|_| next()).collect();
        let naive: f64 = {
            let sq: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(&x, &y)| (x as f64 - y as f64) * (x as f64 - y as f64))
                .collect();
            sq.iter().sum::<f64>().sqrt()
        };
        let got = euclidean(&a, &b).unwrap();
        assert!((got - naive).abs() <= 1e-6 * naive.max(1.0));
    }

    #[test]
    fn early_abandon_agrees_when_not_abandoned() {
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [0.0f32, 0.0, 0.0, 0.0];
        let full = euclidean_sq(&a, &b).unwrap();
        assert_eq!(euclidean_sq_early_abandon(&a, &b, f64::INFINITY), Some(full));
        assert_eq!(euclidean_sq_early_abandon(&a, &b, full), Some(full));
        assert_eq!(euclidean_sq_early_abandon(&a, &b, full - 1.0), None);
    }

    #[test]
    fn mindist_zero_inside_own_region() {
        let params = SummaryParams::new(4, 8, 16).unwrap();
        let table = BreakpointTable::new(8);
        let series: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).sin()).collect();
        let paa = compute_paa(&series, &params).unwrap();
        let word = compute_isax(&paa, 8, &table);
        assert_eq!(mindist(&paa, &word, &params, &table), 0.0);
    }

    #[test]
    fn mindist_bounded_by_euclidean_randomized() {
        let params = SummaryParams::new(8, 6, 64).unwrap();
        let table = BreakpointTable::new(6);
        let mut state = 42u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 40) as f32 / (1u32 << 23) as f32) * 6.0 - 3.0
        };
        for _ in 0..2000 {
            let q: Vec<f32> = (0..64).map(|_| next()).collect();
            let s: Vec<f32> = (0..64).map(|_| next()).collect();
            let q_paa = compute_paa(&q, &params).unwrap();
            let s_paa = compute_paa(&s, &params).unwrap();
            let word = compute_isax(&s_paa, 6, &table);
            let lb = mindist(&q_paa, &word, &params, &table);
            let d = euclidean(&q, &s).unwrap();
            assert!(lb <= d + 1e-9, "lb {lb} > dist {d}");
        }
    }

    #[test]
    fn batched_empty_and_singleton() {
        let params = SummaryParams::new(4, 4, 16).unwrap();
        let table = BreakpointTable::new(4);
        let paa = [0.3f64, -0.8, 1.2, 0.0];
        let empty = FlatWords::new(4, 4);
        assert!(batched_mindist(&paa, &empty, &params, &table).is_empty());

        let mut one = FlatWords::new(4, 4);
        one.push_row(&[3, 0, 15, 7]);
        let got = batched_mindist(&paa, &one, &params, &table);
        let scalar = mindist_sq_uniform(&paa, &[3, 0, 15, 7], 4, &params, &table).sqrt();
        assert_eq!(got, vec![scalar]);
    }

    #[test]
    fn batched_matches_scalar_loop() {
        let params = SummaryParams::new(8, 5, 64).unwrap();
        let table = BreakpointTable::new(5);
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            state
        };
        let mut words = FlatWords::new(8, 5);
        for _ in 0..10_000 {
            let row: Vec<u16> = (0..8).map(|_| (next() % 32) as u16).collect();
            words.push_row(&row);
        }
        let paa: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) * 0.4).collect();
        let batched = batched_mindist(&paa, &words, &params, &table);
        let mut max_dev = 0.0f64;
        for i in 0..words.len() {
            let scalar = mindist_sq_uniform(&paa, words.row(i), 5, &params, &table).sqrt();
            max_dev = max_dev.max((batched[i] - scalar).abs());
        }
        assert!(max_dev < 1e-9, "max deviation {max_dev}");
    }
}
