//! Dataset persistence: the `DSIX` binary format and its loader.
//!
//! Layout (little-endian): magic `DSIX`, format version `u16`, flag bits
//! `u16` (bit 0 = values were z-normalized), series count `u64`, series
//! length `u64`, then `count * length` raw `f32` values in row-major order.

pub mod generate;
pub mod index_file;
pub mod stream;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::series::Dataset;

pub const DATASET_MAGIC: [u8; 4] = *b"DSIX";
pub const DATASET_VERSION: u16 = 1;
pub const FLAG_NORMALIZED: u16 = 0x0001;
const KNOWN_FLAGS: u16 = FLAG_NORMALIZED;
pub const HEADER_LEN: u64 = 24;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error at byte offset {offset} of {path}: {source}")]
    Io {
        path: String,
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at offset 0: expected \"DSIX\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} at offset 4 (supported: {DATASET_VERSION})")]
    UnsupportedVersion { found: u16 },

    #[error("unknown flag bits {found:#06x} at offset 6")]
    UnknownFlags { found: u16 },

    #[error("header declares an empty shape: count={count}, series_len={series_len}")]
    EmptyShape { count: u64, series_len: u64 },

    #[error("file size mismatch: expected {expected} bytes, actual {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("{count} series exceeds the 32-bit id space")]
    TooManySeries { count: u64 },

    #[error(transparent)]
    Invalid(#[from] crate::error::Error),
}

fn io_err(path: &Path, offset: u64) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        offset,
        source,
    }
}

/// Parsed and validated `DSIX` header.
#[derive(Debug, Clone, Copy)]
pub struct DatasetHeader {
    pub count: u64,
    pub series_len: u64,
    pub normalized: bool,
}

impl DatasetHeader {
    pub fn payload_bytes(&self) -> u64 {
        self.count * self.series_len * 4
    }
}

pub(crate) fn read_header(reader: &mut impl Read, path: &Path) -> Result<DatasetHeader, IoError> {
    let mut raw = [0u8; HEADER_LEN as usize];
    reader.read_exact(&mut raw).map_err(io_err(path, 0))?;

    let magic: [u8; 4] = raw[0..4].try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(IoError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes(raw[4..6].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(IoError::UnsupportedVersion { found: version });
    }
    let flags = u16::from_le_bytes(raw[6..8].try_into().unwrap());
    if flags & !KNOWN_FLAGS != 0 {
        return Err(IoError::UnknownFlags { found: flags });
    }
    let count = u64::from_le_bytes(raw[8..16].try_into().unwrap());
    let series_len = u64::from_le_bytes(raw[16..24].try_into().unwrap());
    if count == 0 || series_len == 0 {
        return Err(IoError::EmptyShape { count, series_len });
    }
    if count > u32::MAX as u64 {
        return Err(IoError::TooManySeries { count });
    }
    Ok(DatasetHeader {
        count,
        series_len,
        normalized: flags & FLAG_NORMALIZED != 0,
    })
}

fn write_header(writer: &mut impl Write, header: &DatasetHeader, path: &Path) -> Result<(), IoError> {
    let mut raw = [0u8; HEADER_LEN as usize];
    raw[0..4].copy_from_slice(&DATASET_MAGIC);
    raw[4..6].copy_from_slice(&DATASET_VERSION.to_le_bytes());
    let flags = if header.normalized { FLAG_NORMALIZED } else { 0 };
    raw[6..8].copy_from_slice(&flags.to_le_bytes());
    raw[8..16].copy_from_slice(&header.count.to_le_bytes());
    raw[16..24].copy_from_slice(&header.series_len.to_le_bytes());
    writer.write_all(&raw).map_err(io_err(path, 0))
}

/// Writes a dataset in `DSIX` format.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path, 0))?;
    let mut writer = BufWriter::new(file);
    let header = DatasetHeader {
        count: dataset.count() as u64,
        series_len: dataset.series_len() as u64,
        normalized: dataset.is_normalized(),
    };
    write_header(&mut writer, &header, path)?;

    let mut offset = HEADER_LEN;
    let mut row_bytes = Vec::with_capacity(dataset.series_len() * 4);
    for id in 0..dataset.count() {
        row_bytes.clear();
        for &v in dataset.series(id as u32) {
            row_bytes.extend_from_slice(&v.to_le_bytes());
        }
        writer.write_all(&row_bytes).map_err(io_err(path, offset))?;
        offset += row_bytes.len() as u64;
    }
    writer.flush().map_err(io_err(path, offset))
}

/// Loads a `DSIX` file into memory. Round-trips with [`write_dataset`]
/// value-exactly.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path, 0))?;
    let actual = file.metadata().map_err(io_err(path, 0))?.len();
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader, path)?;

    let expected = HEADER_LEN + header.payload_bytes();
    if expected != actual {
        return Err(IoError::SizeMismatch { expected, actual });
    }

    let mut raw = vec![0u8; header.payload_bytes() as usize];
    reader.read_exact(&mut raw).map_err(io_err(path, HEADER_LEN))?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let mut dataset = Dataset::new(values, header.series_len as usize)?;
    dataset.set_normalized(header.normalized);
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::generate::random_walk_dataset;

    #[test]
    fn round_trip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.dsix");
        let ds = random_walk_dataset(7, 32, 123).unwrap();
        write_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.count(), 7);
        assert_eq!(back.series_len(), 32);
        assert!(back.is_normalized());
        assert_eq!(back.values(), ds.values());
    }

    #[test]
    fn truncated_file_names_expected_and_actual() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.dsix");
        let ds = random_walk_dataset(4, 16, 5).unwrap();
        write_dataset(&path, &ds).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 9]).unwrap();
        match load_dataset(&path) {
            Err(IoError::SizeMismatch { expected, actual }) => {
                assert_eq!(expected, 24 + 4 * 16 * 4);
                assert_eq!(actual, expected - 9);
            }
            other => panic!("expected SizeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn each_corrupted_header_field_gets_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corrupt.dsix");
        let ds = random_walk_dataset(2, 8, 1).unwrap();

        let corrupt = |offset: usize, bytes: &[u8]| {
            write_dataset(&path, &ds).unwrap();
            let mut raw = std::fs::read(&path).unwrap();
            raw[offset..offset + bytes.len()].copy_from_slice(bytes);
            std::fs::write(&path, raw).unwrap();
            load_dataset(&path)
        };

        assert!(matches!(
            corrupt(0, b"XXXX"),
            Err(IoError::BadMagic { found }) if &found == b"XXXX"
        ));
        assert!(matches!(
            corrupt(4, &9u16.to_le_bytes()),
            Err(IoError::UnsupportedVersion { found: 9 })
        ));
        assert!(matches!(
            corrupt(6, &0x8000u16.to_le_bytes()),
            Err(IoError::UnknownFlags { .. })
        ));
        assert!(matches!(
            corrupt(8, &0u64.to_le_bytes()),
            Err(IoError::EmptyShape { .. })
        ));
        // A wrong count that is non-zero shows up as a size mismatch.
        assert!(matches!(
            corrupt(8, &3u64.to_le_bytes()),
            Err(IoError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn normalized_flag_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flag.dsix");
        let mut ds = random_walk_dataset(2, 8, 1).unwrap();
        ds.set_normalized(false);
        write_dataset(&path, &ds).unwrap();
        assert!(!load_dataset(&path).unwrap().is_normalized());
        ds.set_normalized(true);
        write_dataset(&path, &ds).unwrap();
        assert!(load_dataset(&path).unwrap().is_normalized());
    }
}
