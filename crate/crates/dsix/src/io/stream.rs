//! Double-buffered streaming index construction.
//!
//! A coordinator thread fills one chunk buffer from the file while the
//! summarization workers consume the other, so disk transfer and CPU work
//! overlap. After the last chunk the tree-construction phase runs exactly as
//! in the all-in-memory build, and the resulting leaf contents are
//! identical.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Instant;

use crate::index::{build_from_buffers, IndexTree, IsaxBufferSet};
use crate::io::{read_header, IoError, HEADER_LEN};
use crate::summary::{BreakpointTable, SummaryParams};

pub const DEFAULT_CHUNK_SERIES: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Read,
    Summarize,
}

/// One wall-clock interval of the build pipeline, for overlap inspection.
#[derive(Debug, Clone, Copy)]
pub struct TimelineEvent {
    pub kind: PhaseKind,
    pub start: f64,
    pub end: f64,
}

struct FilledChunk {
    buffer: Vec<f32>,
    base_id: usize,
    series: usize,
}

/// Streams a `DSIX` file through a two-buffer pipeline and builds the index.
pub fn stream_build(
    path: impl AsRef<Path>,
    params: &SummaryParams,
    workers: usize,
    leaf_capacity: usize,
    chunk_series: usize,
) -> Result<IndexTree, IoError> {
    stream_build_inner(path.as_ref(), params, workers, leaf_capacity, chunk_series, None)
}

/// [`stream_build`] that also records read/summarize intervals.
pub fn stream_build_instrumented(
    path: impl AsRef<Path>,
    params: &SummaryParams,
    workers: usize,
    leaf_capacity: usize,
    chunk_series: usize,
) -> Result<(IndexTree, Vec<TimelineEvent>), IoError> {
    let timeline = Mutex::new(Vec::new());
    let tree = stream_build_inner(
        path.as_ref(),
        params,
        workers,
        leaf_capacity,
        chunk_series,
        Some(&timeline),
    )?;
    Ok((tree, timeline.into_inner().unwrap()))
}

fn stream_build_inner(
    path: &Path,
    params: &SummaryParams,
    workers: usize,
    leaf_capacity: usize,
    chunk_series: usize,
    timeline: Option<&Mutex<Vec<TimelineEvent>>>,
) -> Result<IndexTree, IoError> {
    if workers == 0 {
        return Err(crate::error::Error::NoWorkers.into());
    }
    if chunk_series == 0 || leaf_capacity == 0 {
        return Err(crate::error::Error::BadLeafCapacity.into());
    }

    let file = File::open(path).map_err(|e| IoError::Io {
        path: path.display().to_string(),
        offset: 0,
        source: e,
    })?;
    let actual = file
        .metadata()
        .map_err(|e| IoError::Io {
            path: path.display().to_string(),
            offset: 0,
            source: e,
        })?
        .len();
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader, path)?;
    let expected = HEADER_LEN + header.payload_bytes();
    if expected != actual {
        return Err(IoError::SizeMismatch { expected, actual });
    }
    if header.series_len as usize != params.series_len() {
        return Err(crate::error::Error::LengthMismatch {
            expected: params.series_len(),
            got: header.series_len as usize,
        }
        .into());
    }

    let series_len = header.series_len as usize;
    let count = header.count as usize;
    let table = BreakpointTable::new(params.max_card_bits());
    let mut buffers = IsaxBufferSet::new(workers, params.segments(), params.max_card_bits());
    let t0 = Instant::now();

    let (empty_tx, empty_rx) = mpsc::channel::<Vec<f32>>();
    let (filled_tx, filled_rx) = mpsc::channel::<Result<FilledChunk, IoError>>();
    // Two buffers total: one filling, one processing, never both filling.
    for _ in 0..2 {
        empty_tx.send(vec![0.0f32; chunk_series * series_len]).unwrap();
    }

    let reader_result: Result<(), IoError> = std::thread::scope(|scope| {
        let path_owned = path.display().to_string();
        scope.spawn(move || {
            let mut byte_buf: Vec<u8> = Vec::new();
            let mut remaining = count;
            let mut base_id = 0usize;
            let mut offset = HEADER_LEN;
            while remaining > 0 {
                let Ok(mut buffer) = empty_rx.recv() else {
                    return; // consumer bailed out
                };
                let n = remaining.min(chunk_series);
                let bytes = n * series_len * 4;
                byte_buf.resize(bytes, 0);
                let started = t0.elapsed().as_secs_f64();
                if let Err(e) = reader.read_exact(&mut byte_buf) {
                    let _ = filled_tx.send(Err(IoError::Io {
                        path: path_owned.clone(),
                        offset,
                        source: e,
                    }));
                    return;
                }
                buffer.resize(n * series_len, 0.0);
                let mut bad = None;
                for (i, (slot, raw)) in buffer.iter_mut().zip(byte_buf.chunks_exact(4)).enumerate()
                {
                    let v = f32::from_le_bytes(raw.try_into().unwrap());
                    if !v.is_finite() && bad.is_none() {
                        bad = Some(base_id * series_len + i);
                    }
                    *slot = v;
                }
                if let Some(pos) = bad {
                    let _ = filled_tx.send(Err(crate::error::Error::NonFinite(pos).into()));
                    return;
                }
                if let Some(tl) = timeline {
                    tl.lock().unwrap().push(TimelineEvent {
                        kind: PhaseKind::Read,
                        start: started,
                        end: t0.elapsed().as_secs_f64(),
                    });
                }
                offset += bytes as u64;
                let chunk = FilledChunk {
                    buffer,
                    base_id,
                    series: n,
                };
                base_id += n;
                remaining -= n;
                if filled_tx.send(Ok(chunk)).is_err() {
                    return;
                }
            }
            drop(filled_tx);
        });

        while let Ok(msg) = filled_rx.recv() {
            let chunk = msg?;
            let started = t0.elapsed().as_secs_f64();
            summarize_chunk(&chunk, params, &table, &mut buffers, workers, series_len);
            if let Some(tl) = timeline {
                tl.lock().unwrap().push(TimelineEvent {
                    kind: PhaseKind::Summarize,
                    start: started,
                    end: t0.elapsed().as_secs_f64(),
                });
            }
            // Hand the buffer back for refilling; ignore send failure at EOF.
            let _ = empty_tx.send(chunk.buffer);
        }
        Ok(())
    });
    reader_result?;

    Ok(build_from_buffers(&buffers, params, workers, leaf_capacity))
}

fn summarize_chunk(
    chunk: &FilledChunk,
    params: &SummaryParams,
    table: &BreakpointTable,
    buffers: &mut IsaxBufferSet,
    workers: usize,
    series_len: usize,
) {
    let rows = &chunk.buffer[..chunk.series * series_len];
    let count = chunk.series;
    let active = workers.min(count).max(1);
    std::thread::scope(|scope| {
        for (k, worker_buf) in buffers
            .worker_buffers_mut()
            .iter_mut()
            .take(active)
            .enumerate()
        {
            let base = chunk.base_id;
            scope.spawn(move || {
                let lo = count * k / active;
                let hi = count * (k + 1) / active;
                summarize_rows(rows, series_len, params, table, lo..hi, base, worker_buf);
            });
        }
    });
}

fn summarize_rows(
    rows: &[f32],
    series_len: usize,
    params: &SummaryParams,
    table: &BreakpointTable,
    range: std::ops::Range<usize>,
    base_id: usize,
    out: &mut crate::index::WorkerBuffers,
) {
    use crate::index::root_subtree_of_max;
    use crate::summary::{compute_paa_into, symbolize_max_into};

    let card = params.max_card_bits();
    let mut paa = Vec::with_capacity(params.segments());
    let mut symbols = Vec::with_capacity(params.segments());
    for row in range {
        paa.clear();
        symbols.clear();
        compute_paa_into(&rows[row * series_len..(row + 1) * series_len], params, &mut paa);
        symbolize_max_into(&paa, params, table, &mut symbols);
        let root = root_subtree_of_max(&symbols, card);
        out.append(root, (base_id + row) as u32, &symbols);
    }
}
