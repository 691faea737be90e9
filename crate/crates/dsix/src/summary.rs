//! PAA and iSAX summarization: segment means, standard-normal breakpoints,
//! and per-segment quantized symbols with individual cardinalities.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Hard upper limit on per-segment cardinality bits. Symbols are stored as
/// `u16`, so 16 bits is the most a segment can carry.
pub const MAX_CARD_BITS: u8 = 16;

/// Hard upper limit on segment count. Root subtree ids pack one leading bit
/// per segment into a `u64`.
pub const MAX_SEGMENTS: usize = 64;

/// Summary configuration: how many segments a series is cut into and how
/// many bits a fully refined symbol carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryParams {
    segments: usize,
    max_card_bits: u8,
    series_len: usize,
}

impl SummaryParams {
    pub fn new(segments: usize, max_card_bits: u8, series_len: usize) -> Result<Self, Error> {
        if segments == 0 || segments > MAX_SEGMENTS {
            return Err(Error::BadSegmentCount(segments));
        }
        if max_card_bits == 0 || max_card_bits > MAX_CARD_BITS {
            return Err(Error::BadCardinality {
                got: max_card_bits,
                max: MAX_CARD_BITS,
            });
        }
        if series_len == 0 || series_len % segments != 0 {
            return Err(Error::BadSegmentation {
                len: series_len,
                segments,
            });
        }
        Ok(Self {
            segments,
            max_card_bits,
            series_len,
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn max_card_bits(&self) -> u8 {
        self.max_card_bits
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// Points per segment.
    pub fn segment_len(&self) -> usize {
        self.series_len / self.segments
    }
}

impl Default for SummaryParams {
    fn default() -> Self {
        Self {
            segments: 16,
            max_card_bits: 8,
            series_len: 256,
        }
    }
}

/// Standard-normal quantile function (inverse CDF) via Acklam's rational
/// approximation. Absolute error stays below 2e-9 over (0, 1), and the
/// implementation is exactly antisymmetric about p = 0.5.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability out of range: {p}");
    if p > 0.5 {
        return -normal_quantile_lower(1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    normal_quantile_lower(p)
}

fn normal_quantile_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// The `2^card_bits - 1` standard-normal quantiles at `i / 2^card_bits`.
///
/// These probabilities are exact binary fractions, so the list for
/// cardinality `c` is bit-for-bit a subsequence of the list for `c + 1`.
pub fn breakpoints(card_bits: u8) -> Result<Vec<f64>, Error> {
    if card_bits == 0 || card_bits > MAX_CARD_BITS {
        return Err(Error::BadCardinality {
            got: card_bits,
            max: MAX_CARD_BITS,
        });
    }
    let regions = 1usize << card_bits;
    Ok((1..regions)
        .map(|i| normal_quantile(i as f64 / regions as f64))
        .collect())
}

/// Breakpoint lists for every cardinality from 1 up to a maximum, indexed by
/// `card_bits`.
#[derive(Debug, Clone)]
pub struct BreakpointTable {
    levels: Vec<Vec<f64>>,
}

impl BreakpointTable {
    pub fn new(max_card_bits: u8) -> Self {
        let levels = (1..=max_card_bits)
            .map(|c| breakpoints(c).expect("cardinality validated by caller"))
            .collect();
        Self { levels }
    }

    pub fn max_card_bits(&self) -> u8 {
        self.levels.len() as u8
    }

    /// Sorted thresholds for one cardinality; length `2^card_bits - 1`.
    pub fn thresholds(&self, card_bits: u8) -> &[f64] {
        &self.levels[card_bits as usize - 1]
    }
}

/// One quantized segment: a symbol value and the number of bits it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IsaxSymbol {
    pub value: u16,
    pub card_bits: u8,
}

impl IsaxSymbol {
    /// The symbol truncated to a coarser cardinality (its leading bits).
    pub fn at_card(&self, card_bits: u8) -> u16 {
        debug_assert!(card_bits >= 1 && card_bits <= self.card_bits);
        self.value >> (self.card_bits - card_bits)
    }

    pub fn leading_bit(&self) -> u64 {
        (self.value >> (self.card_bits - 1)) as u64
    }
}

/// An iSAX word: one [`IsaxSymbol`] per segment, each refined to its own
/// cardinality. Index nodes use this same shape to describe the region they
/// cover.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IsaxWord {
    symbols: Vec<IsaxSymbol>,
}

impl IsaxWord {
    pub fn new(symbols: Vec<IsaxSymbol>) -> Self {
        debug_assert!(symbols
            .iter()
            .all(|s| s.card_bits >= 1 && (s.value as u32) < (1u32 << s.card_bits)));
        Self { symbols }
    }

    /// A word at uniform maximum cardinality from raw symbol values.
    pub fn from_max_card(values: &[u16], card_bits: u8) -> Self {
        Self {
            symbols: values
                .iter()
                .map(|&value| IsaxSymbol { value, card_bits })
                .collect(),
        }
    }

    pub fn segments(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[IsaxSymbol] {
        &self.symbols
    }

    pub fn symbol(&self, segment: usize) -> IsaxSymbol {
        self.symbols[segment]
    }

    /// Whether this region contains a fully refined word given as raw
    /// max-cardinality symbol values.
    pub fn contains_max_card(&self, values: &[u16], max_card_bits: u8) -> bool {
        self.symbols.iter().zip(values).all(|(s, &v)| {
            s.card_bits <= max_card_bits && v >> (max_card_bits - s.card_bits) == s.value
        })
    }

    /// Whether this region contains another (equal or finer) region.
    pub fn contains(&self, other: &IsaxWord) -> bool {
        self.symbols.iter().zip(other.symbols.iter()).all(|(a, b)| {
            a.card_bits <= b.card_bits && b.value >> (b.card_bits - a.card_bits) == a.value
        })
    }

    /// The child region obtained by appending one bit to a segment's symbol.
    pub fn refine(&self, segment: usize, bit: u16) -> IsaxWord {
        debug_assert!(bit <= 1);
        let mut symbols = self.symbols.clone();
        let s = &mut symbols[segment];
        s.value = (s.value << 1) | bit;
        s.card_bits += 1;
        IsaxWord { symbols }
    }
}

/// Piecewise aggregate approximation: the mean of each of the `w` segments.
pub fn compute_paa(series: &[f32], params: &SummaryParams) -> Result<Vec<f64>, Error> {
    if series.len() != params.series_len() {
        return Err(Error::LengthMismatch {
            expected: params.series_len(),
            got: series.len(),
        });
    }
    let seg_len = params.segment_len();
    Ok(series
        .chunks_exact(seg_len)
        .map(|seg| seg.iter().map(|&v| v as f64).sum::<f64>() / seg_len as f64)
        .collect())
}

/// [`compute_paa`] appending into a reusable buffer; lengths must already be
/// validated. This is the hot path of the summarization phase.
pub fn compute_paa_into(series: &[f32], params: &SummaryParams, out: &mut Vec<f64>) {
    debug_assert_eq!(series.len(), params.series_len());
    let seg_len = params.segment_len();
    out.extend(
        series
            .chunks_exact(seg_len)
            .map(|seg| seg.iter().map(|&v| v as f64).sum::<f64>() / seg_len as f64),
    );
}

/// Index of the breakpoint region containing `mean`: the number of
/// thresholds less than or equal to it. A mean equal to a threshold lands in
/// the upper region.
#[inline]
pub fn region_of(mean: f64, thresholds: &[f64]) -> u16 {
    thresholds.partition_point(|&t| t <= mean) as u16
}

/// Quantizes PAA means into an iSAX word with every segment at `card_bits`.
pub fn compute_isax(paa: &[f64], card_bits: u8, table: &BreakpointTable) -> IsaxWord {
    let thresholds = table.thresholds(card_bits);
    IsaxWord::new(
        paa.iter()
            .map(|&m| IsaxSymbol {
                value: region_of(m, thresholds),
                card_bits,
            })
            .collect(),
    )
}

/// Quantizes PAA means into raw symbol values at maximum cardinality,
/// appending to `out`. This is the hot path of the summarization phase.
pub fn symbolize_max_into(paa: &[f64], params: &SummaryParams, table: &BreakpointTable, out: &mut Vec<u16>) {
    let thresholds = table.thresholds(params.max_card_bits());
    out.extend(paa.iter().map(|&m| region_of(m, thresholds)));
}

/// A contiguous block of iSAX words at one shared cardinality, stored as a
/// row-major symbol matrix. Fixing the cardinality is what makes the batched
/// lower-bound kernel a flat data-parallel loop.
#[derive(Debug, Clone)]
pub struct FlatWords {
    segments: usize,
    card_bits: u8,
    values: Vec<u16>,
}

impl FlatWords {
    pub fn new(segments: usize, card_bits: u8) -> Self {
        Self {
            segments,
            card_bits,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(segments: usize, card_bits: u8, rows: usize) -> Self {
        Self {
            segments,
            card_bits,
            values: Vec::with_capacity(rows * segments),
        }
    }

    /// Wraps an already-flattened symbol buffer (row-major, `segments` per
    /// row).
    pub fn from_values(segments: usize, card_bits: u8, values: Vec<u16>) -> Self {
        debug_assert_eq!(values.len() % segments.max(1), 0);
        Self {
            segments,
            card_bits,
            values,
        }
    }

    /// Packs a slice of words into flat storage. Mixed cardinalities are an
    /// input error.
    pub fn from_words(words: &[IsaxWord], segments: usize, card_bits: u8) -> Result<Self, Error> {
        let mut flat = Self::with_capacity(segments, card_bits, words.len());
        for word in words {
            for sym in word.symbols() {
                if sym.card_bits != card_bits {
                    return Err(Error::MixedCardinality(card_bits, sym.card_bits));
                }
            }
            flat.values.extend(word.symbols().iter().map(|s| s.value));
        }
        Ok(flat)
    }

    pub fn push_row(&mut self, row: &[u16]) {
        debug_assert_eq!(row.len(), self.segments);
        self.values.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.segments.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn card_bits(&self) -> u8 {
        self.card_bits
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.values[i * self.segments..(i + 1) * self.segments]
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Vec<u16> {
        &mut self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_published_tables() {
        // Frozen from standard normal quantile tables.
        let cases = [
            (0.25, -0.674489750196082),
            (0.75, 0.674489750196082),
            (0.125, -1.15034938037601),
            (0.375, -0.318639363964375),
            (0.001, -3.09023230616781),
            (0.1, -1.2815515655446),
            (0.9, 1.2815515655446),
            (1.0 / 256.0, -2.66006746861746),
            (255.0 / 256.0, 2.66006746861746),
        ];
        for (p, expected) in cases {
            let got = normal_quantile(p);
            assert!(
                (got - expected).abs() < 2e-9,
                "quantile({p}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn breakpoints_card_one_is_median() {
        assert_eq!(breakpoints(1).unwrap(), vec![0.0]);
    }

    #[test]
    fn breakpoints_card_two_frozen_values() {
        let bp = breakpoints(2).unwrap();
        let expected = [-0.6745, 0.0, 0.6745];
        assert_eq!(bp.len(), 3);
        for (got, want) in bp.iter().zip(expected) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn breakpoints_card_three_symmetric_and_refining() {
        let bp2 = breakpoints(2).unwrap();
        let bp3 = breakpoints(3).unwrap();
        assert_eq!(bp3.len(), 7);
        for w in bp3.windows(2) {
            assert!(w[0] < w[1], "not strictly increasing: {w:?}");
        }
        for (i, v) in bp3.iter().enumerate() {
            assert_eq!(*v, -bp3[bp3.len() - 1 - i], "not symmetric about 0");
        }
        // Binary refinement: every level-2 threshold appears bit-exactly.
        for v in &bp2 {
            assert!(bp3.contains(v), "{v} missing from level 3");
        }
    }

    #[test]
    fn breakpoints_rejects_out_of_range() {
        assert!(matches!(breakpoints(0), Err(Error::BadCardinality { .. })));
        assert!(matches!(breakpoints(17), Err(Error::BadCardinality { .. })));
    }

    #[test]
    fn paa_segment_means() {
        let params = SummaryParams::new(2, 8, 4).unwrap();
        assert_eq!(
            compute_paa(&[1.0, 1.0, 3.0, 3.0], &params).unwrap(),
            vec![1.0, 3.0]
        );
        let params = SummaryParams::new(3, 8, 6).unwrap();
        assert_eq!(
            compute_paa(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &params).unwrap(),
            vec![1.5, 3.5, 5.5]
        );
        let params = SummaryParams::new(4, 8, 8).unwrap();
        assert_eq!(
            compute_paa(&[0.0; 8], &params).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn paa_length_mismatch() {
        let params = SummaryParams::new(2, 8, 4).unwrap();
        assert!(matches!(
            compute_paa(&[1.0, 2.0, 3.0], &params),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn isax_region_lookup() {
        let table = BreakpointTable::new(8);
        // 0.1 sits between 0.0 and 0.6745 at cardinality 2.
        let word = compute_isax(&[0.1], 2, &table);
        assert_eq!(word.symbol(0).value, 2);
        // Far below the lowest threshold.
        let word = compute_isax(&[-10.0], 8, &table);
        assert_eq!(word.symbol(0).value, 0);
        // A mean exactly on a threshold goes to the upper region.
        let word = compute_isax(&[0.0], 1, &table);
        assert_eq!(word.symbol(0).value, 1);
    }

    #[test]
    fn word_containment_and_refinement() {
        let coarse = IsaxWord::new(vec![
            IsaxSymbol { value: 1, card_bits: 1 },
            IsaxSymbol { value: 0, card_bits: 1 },
        ]);
        let fine = coarse.refine(0, 1);
        assert_eq!(fine.symbol(0).value, 3);
        assert_eq!(fine.symbol(0).card_bits, 2);
        assert!(coarse.contains(&fine));
        assert!(!fine.contains(&coarse));
        assert!(coarse.contains_max_card(&[0b110, 0b011], 3));
        assert!(!coarse.contains_max_card(&[0b010, 0b011], 3));
    }

    #[test]
    fn flat_words_rejects_mixed_cardinality() {
        let a = IsaxWord::new(vec![IsaxSymbol { value: 1, card_bits: 2 }]);
        let b = IsaxWord::new(vec![IsaxSymbol { value: 1, card_bits: 3 }]);
        assert!(matches!(
            FlatWords::from_words(&[a, b], 1, 2),
            Err(Error::MixedCardinality(..))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(SummaryParams::new(0, 8, 256).is_err());
        assert!(SummaryParams::new(65, 8, 256 * 65).is_err());
        assert!(SummaryParams::new(16, 0, 256).is_err());
        assert!(SummaryParams::new(16, 17, 256).is_err());
        assert!(SummaryParams::new(16, 8, 250).is_err());
        let p = SummaryParams::default();
        assert_eq!((p.segments(), p.max_card_bits(), p.series_len()), (16, 8, 256));
        assert_eq!(p.segment_len(), 16);
    }
}
