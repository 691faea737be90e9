//! Exact 1-NN similarity search over large collections of fixed-length data
//! series.
//!
//! The crate is organized around an iSAX index: every series is reduced to a
//! piecewise-aggregate summary, quantized into a small symbolic word, and
//! stored in a tree whose root fans out by the leading bit of each segment.
//! Queries are answered exactly by combining a cheap summary-space lower
//! bound with best-so-far pruning, so only a small fraction of the collection
//! ever reaches a full Euclidean distance computation.
//!
//! - [`series`] / [`summary`] / [`distance`]: numeric foundations
//!   (z-normalization, PAA, iSAX symbols, Euclidean and lower-bound kernels).
//! - [`index`]: parallel two-phase tree construction plus flattened summary
//!   arrays for the scan engines.
//! - [`engines`]: three parallel exact query engines (tree/priority-queue,
//!   flat candidate-list scan, batched pre-pruned kernel) and a brute-force
//!   oracle.
//! - [`io`]: the binary dataset format, a deterministic random-walk
//!   generator, double-buffered streaming builds, and index persistence.
//! - [`distsim`]: a discrete-event simulator for multi-node batch scheduling
//!   with partial replication and work stealing.
//! - [`cli`]: the `dsix` command-line driver.

pub mod cli;
pub mod distsim;
pub mod engines;
pub mod error;
pub mod index;
pub mod io;
pub mod series;
pub mod summary;

pub mod distance;

pub use error::Error;
pub use series::Dataset;
pub use summary::{BreakpointTable, IsaxWord, SummaryParams};
