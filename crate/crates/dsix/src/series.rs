//! Raw series storage and z-normalization.

use crate::error::Error;

/// Identifier of a series inside a [`Dataset`]: its position in collection
/// order.
pub type SeriesId = u32;

/// A collection of fixed-length series stored as one contiguous row-major
/// buffer of 32-bit floats.
#[derive(Debug, Clone)]
pub struct Dataset {
    values: Vec<f32>,
    series_len: usize,
    count: usize,
    normalized: bool,
}

impl Dataset {
    /// Wraps a row-major value buffer. Rejects empty input, ragged buffers
    /// and non-finite values.
    pub fn new(values: Vec<f32>, series_len: usize) -> Result<Self, Error> {
        if series_len == 0 || values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if values.len() % series_len != 0 {
            return Err(Error::RaggedDataset {
                values: values.len(),
                series_len,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let count = values.len() / series_len;
        Ok(Self {
            values,
            series_len,
            count,
            normalized: false,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    pub fn series(&self, id: SeriesId) -> &[f32] {
        let start = id as usize * self.series_len;
        &self.values[start..start + self.series_len]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Whether the stored values were z-normalized when the collection was
    /// produced. Informational; nothing re-normalizes on the query path.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }
}

/// Result of [`znormalize`]. `degenerate` marks constant input, which maps
/// to all zeros instead of an error so flat series stay indexable.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Shifts and scales a series to mean 0 and population standard deviation 1.
///
/// Constant input (zero variance) returns all zeros with the `degenerate`
/// flag set.
pub fn znormalize(values: &[f64]) -> Normalized {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Normalized {
            values: vec![0.0; values.len()],
            degenerate: true,
        };
    }
    Normalized {
        values: values.iter().map(|&x| (x - mean) / std).collect(),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn znormalize_small_example() {
        let out = znormalize(&[0.0, 2.0, 0.0, 2.0]);
        assert!(!out.degenerate);
        assert_eq!(out.values, vec![-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn znormalize_constant_series_is_degenerate() {
        let out = znormalize(&[5.0, 5.0, 5.0, 5.0]);
        assert!(out.degenerate);
        assert_eq!(out.values, vec![0.0; 4]);
    }

    #[test]
    fn znormalize_output_moments() {
        // Oracle: recompute the moments of the output directly.
        let mut rng_state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        };
        let series: Vec<f64> = (0..256).map(|_| next()).collect();
        let out = znormalize(&series);
        let (mean, std) = moments(&out.values);
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-9, "std {std}");
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(matches!(
            Dataset::new(vec![], 4),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            Dataset::new(vec![1.0; 7], 4),
            Err(Error::RaggedDataset { .. })
        ));
        assert!(matches!(
            Dataset::new(vec![1.0, f32::NAN, 0.0, 1.0], 4),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn dataset_row_access() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(ds.count(), 2);
        assert_eq!(ds.series(0), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.series(1), &[4.0, 5.0, 6.0]);
    }
}
