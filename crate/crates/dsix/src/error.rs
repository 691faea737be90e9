//! Input-validation errors shared by the numeric and index layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("segment count must be between 1 and 64, got {0}")]
    BadSegmentCount(usize),

    #[error("cardinality bits must be between 1 and {max}, got {got}")]
    BadCardinality { got: u8, max: u8 },

    #[error("series length {len} is not divisible into {segments} segments")]
    BadSegmentation { len: usize, segments: usize },

    #[error("series length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("series contains a non-finite value at position {0}")]
    NonFinite(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset value buffer of {values} values is not a multiple of series length {series_len}")]
    RaggedDataset { values: usize, series_len: usize },

    #[error("words have mixed cardinalities: {0} vs {1}")]
    MixedCardinality(u8, u8),

    #[error("worker count must be at least 1")]
    NoWorkers,

    #[error("leaf capacity must be at least 1")]
    BadLeafCapacity,

    #[error("index tree holds no series")]
    EmptyTree,

    #[error("index covers {indexed} series but the dataset holds {dataset}")]
    IndexDatasetMismatch { indexed: u64, dataset: usize },
}
