//! Exact 1-NN query answering.
//!
//! Every engine follows the same contract: seed a best-so-far (BSF) answer
//! by walking one root-to-leaf path, prune everything whose summary-space
//! lower bound cannot beat the BSF, compute real distances for the rest,
//! and atomically lower the BSF as better answers appear. The final BSF is
//! the exact answer. The engines differ in how they organize the pruning
//! scan; their results are identical.

pub mod bsf;
pub mod queues;

mod batched;
mod flat_scan;
mod tree_search;

pub use batched::exact_search_batched;
pub use flat_scan::{collect_candidates, exact_search_flatscan};
pub use tree_search::exact_search_tree;

use std::time::Instant;

use serde::Serialize;

use crate::distance::{euclidean_sq, mindist_sq};
use crate::error::Error;
use crate::index::{root_subtree_of_max, IndexTree, NodeKind};
use crate::series::{Dataset, SeriesId};
use crate::summary::{compute_paa_into, symbolize_max_into, BreakpointTable, SummaryParams};

/// Default number of summaries per block in the batched engine.
pub const DEFAULT_BATCH_BLOCK: usize = 4096;

/// Per-query counters. Timing and counter fields vary run to run; the
/// answer does not.
#[derive(Debug, Clone, Default, Serialize)]
pub struct QueryStats {
    pub wall_ms: f64,
    /// Node- and series-level lower-bound computations.
    pub lower_bounds: u64,
    /// Real-distance computations after BSF initialization, including
    /// early-abandoned ones.
    pub real_distances: u64,
    /// Real distances spent seeding the BSF in the initial leaf.
    pub init_real_distances: u64,
    /// Fraction of the collection that never reached a real-distance
    /// computation.
    pub pruning_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queue_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranges_scanned: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranges_pruned: Option<u64>,
}

/// An exact nearest-neighbor answer: the series id, its true Euclidean
/// distance to the query, and search counters.
#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub series_id: SeriesId,
    pub distance: f64,
    pub stats: QueryStats,
}

/// Precomputed per-query state shared by the engines.
pub(crate) struct SearchContext {
    pub paa: Vec<f64>,
    pub symbols: Vec<u16>,
    pub table: BreakpointTable,
}

impl SearchContext {
    pub fn new(params: &SummaryParams, query: &[f32]) -> Result<Self, Error> {
        if query.len() != params.series_len() {
            return Err(Error::LengthMismatch {
                expected: params.series_len(),
                got: query.len(),
            });
        }
        if let Some(pos) = query.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let table = BreakpointTable::new(params.max_card_bits());
        let mut paa = Vec::with_capacity(params.segments());
        compute_paa_into(query, params, &mut paa);
        let mut symbols = Vec::with_capacity(params.segments());
        symbolize_max_into(&paa, params, &table, &mut symbols);
        Ok(Self {
            paa,
            symbols,
            table,
        })
    }
}

pub(crate) fn check_pair(tree: &IndexTree, dataset: &Dataset) -> Result<(), Error> {
    if tree.series_count() == 0 {
        return Err(Error::EmptyTree);
    }
    if tree.series_count() != dataset.count() as u64 {
        return Err(Error::IndexDatasetMismatch {
            indexed: tree.series_count(),
            dataset: dataset.count(),
        });
    }
    if tree.params().series_len() != dataset.series_len() {
        return Err(Error::LengthMismatch {
            expected: tree.params().series_len(),
            got: dataset.series_len(),
        });
    }
    Ok(())
}

/// Outcome of the BSF-seeding descent.
pub(crate) struct InitialAnswer {
    pub id: SeriesId,
    pub dist_sq: f64,
    pub real_distances: u64,
    pub lower_bounds: u64,
}

/// Walks one root-to-leaf path: the child covering the query's region when
/// present, otherwise the non-empty child with the smallest lower bound;
/// then scans the reached leaf exhaustively. The result upper-bounds the
/// exact answer.
pub(crate) fn descend(
    tree: &IndexTree,
    dataset: &Dataset,
    query: &[f32],
    ctx: &SearchContext,
) -> InitialAnswer {
    let params = tree.params();
    let max_card = params.max_card_bits();
    let mut lower_bounds = 0u64;

    let root_id = root_subtree_of_max(&ctx.symbols, max_card);
    let mut contained = true;
    let mut cur = match tree.roots().get(&root_id) {
        Some(&n) if tree.node(n).count > 0 => n,
        _ => {
            contained = false;
            let best = tree
                .roots()
                .values()
                .filter(|&&n| tree.node(n).count > 0)
                .min_by(|&&a, &&b| {
                    let ba = mindist_sq(&ctx.paa, &tree.node(a).summary, params, &ctx.table);
                    let bb = mindist_sq(&ctx.paa, &tree.node(b).summary, params, &ctx.table);
                    ba.partial_cmp(&bb).unwrap().then(a.cmp(&b))
                })
                .expect("non-empty tree has a non-empty root child");
            lower_bounds += tree.roots().len() as u64;
            *best
        }
    };

    loop {
        match &tree.node(cur).kind {
            NodeKind::Internal {
                split_segment,
                left,
                right,
            } => {
                let (l, r) = (*left, *right);
                let next = if contained {
                    let s = *split_segment as usize;
                    let child_card = tree.node(l).summary.symbol(s).card_bits;
                    let bit = (ctx.symbols[s] >> (max_card - child_card)) & 1;
                    let preferred = if bit == 0 { l } else { r };
                    if tree.node(preferred).count > 0 {
                        preferred
                    } else {
                        contained = false;
                        if preferred == l {
                            r
                        } else {
                            l
                        }
                    }
                } else {
                    lower_bounds += 2;
                    let bl = mindist_sq(&ctx.paa, &tree.node(l).summary, params, &ctx.table);
                    let br = mindist_sq(&ctx.paa, &tree.node(r).summary, params, &ctx.table);
                    match (tree.node(l).count > 0, tree.node(r).count > 0) {
                        (true, false) => l,
                        (false, true) => r,
                        _ => {
                            if br < bl {
                                r
                            } else {
                                l
                            }
                        }
                    }
                };
                cur = next;
            }
            NodeKind::Leaf(leaf) => {
                let segments = params.segments();
                let _ = segments;
                let mut best = (f64::INFINITY, SeriesId::MAX);
                for &id in &leaf.ids {
                    let d = euclidean_sq(query, dataset.series(id))
                        .expect("lengths validated by the context");
                    if d < best.0 || (d == best.0 && id < best.1) {
                        best = (d, id);
                    }
                }
                return InitialAnswer {
                    id: best.1,
                    dist_sq: best.0,
                    real_distances: leaf.ids.len() as u64,
                    lower_bounds,
                };
            }
        }
    }
}

/// First approximate answer: one tree descent plus a scan of the reached
/// leaf. Returns `(series id, true distance)`.
pub fn approximate_search(
    tree: &IndexTree,
    dataset: &Dataset,
    query: &[f32],
) -> Result<(SeriesId, f64), Error> {
    check_pair(tree, dataset)?;
    let ctx = SearchContext::new(tree.params(), query)?;
    let init = descend(tree, dataset, query, &ctx);
    Ok((init.id, init.dist_sq.sqrt()))
}

/// Exhaustive scan oracle: minimal distance, lowest id on ties.
pub fn brute_force(dataset: &Dataset, query: &[f32]) -> Result<QueryResult, Error> {
    if dataset.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if query.len() != dataset.series_len() {
        return Err(Error::LengthMismatch {
            expected: dataset.series_len(),
            got: query.len(),
        });
    }
    let started = Instant::now();
    let mut best = (f64::INFINITY, SeriesId::MAX);
    for id in 0..dataset.count() as SeriesId {
        let d = euclidean_sq(query, dataset.series(id)).expect("length checked");
        if d < best.0 {
            best = (d, id);
        }
    }
    Ok(QueryResult {
        series_id: best.1,
        distance: best.0.sqrt(),
        stats: QueryStats {
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            real_distances: dataset.count() as u64,
            pruning_ratio: 0.0,
            ..QueryStats::default()
        },
    })
}

pub(crate) fn finish_stats(
    stats: &mut QueryStats,
    started: Instant,
    collection: u64,
) {
    stats.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let touched = stats.real_distances + stats.init_real_distances;
    stats.pruning_ratio = 1.0 - touched as f64 / collection as f64;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build;
    use crate::io::generate::random_walk_dataset;
    use crate::summary::SummaryParams;

    #[test]
    fn brute_force_finds_planted_duplicate() {
        let dataset = random_walk_dataset(50, 64, 17).unwrap();
        let query = dataset.series(31).to_vec();
        let r = brute_force(&dataset, &query).unwrap();
        assert_eq!(r.series_id, 31);
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn brute_force_tie_prefers_lower_id() {
        // Two identical series at ids 2 and 5.
        let row: Vec<f32> = (0..16).map(|i| (i as f32).sin()).collect();
        let mut values = Vec::new();
        for i in 0..8 {
            if i == 2 || i == 5 {
                values.extend_from_slice(&row);
            } else {
                values.extend((0..16).map(|j| (i * 16 + j) as f32 * 0.1 + 3.0));
            }
        }
        let dataset = Dataset::new(values, 16).unwrap();
        let r = brute_force(&dataset, &row).unwrap();
        assert_eq!(r.series_id, 2);
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn brute_force_matches_independent_second_scan() {
        let dataset = random_walk_dataset(1000, 64, 3).unwrap();
        let queries = random_walk_dataset(5, 64, 4).unwrap();
        for q in 0..queries.count() {
            let query = queries.series(q as u32);
            let r = brute_force(&dataset, query).unwrap();
            // Independent re-implementation: materialize all distances,
            // then take the argmin.
            let dists: Vec<f64> = (0..dataset.count())
                .map(|i| {
                    query
                        .iter()
                        .zip(dataset.series(i as u32))
                        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let (arg, min) = dists
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!(r.series_id as usize, arg);
            assert!((r.distance - min).abs() < 1e-9 * min.max(1.0));
        }
    }

    #[test]
    fn approximate_finds_planted_duplicate_in_reached_leaf() {
        let dataset = random_walk_dataset(400, 64, 9).unwrap();
        let params = SummaryParams::new(8, 6, 64).unwrap();
        let tree = build(&dataset, &params, 2, 32).unwrap();
        // A query equal to a stored series descends to that series' leaf.
        for probe in [0u32, 113, 399] {
            let query = dataset.series(probe).to_vec();
            let (_, dist) = approximate_search(&tree, &dataset, &query).unwrap();
            assert_eq!(dist, 0.0, "probe {probe}");
        }
    }

    #[test]
    fn approximate_upper_bounds_exact() {
        let dataset = random_walk_dataset(2000, 64, 13).unwrap();
        let params = SummaryParams::new(8, 6, 64).unwrap();
        let tree = build(&dataset, &params, 2, 64).unwrap();
        let queries = random_walk_dataset(100, 64, 14).unwrap();
        for q in 0..queries.count() {
            let query = queries.series(q as u32);
            let (_, approx) = approximate_search(&tree, &dataset, query).unwrap();
            let exact = brute_force(&dataset, query).unwrap().distance;
            assert!(
                approx >= exact - 1e-12,
                "approximate {approx} below exact {exact}"
            );
        }
    }

    #[test]
    fn approximate_equals_exact_on_single_leaf_tree() {
        // Everything in one region and one leaf: the descent scan is
        // exhaustive.
        let row: Vec<f32> = (0..32).map(|i| (i as f32 * 0.11).cos()).collect();
        let mut values = Vec::new();
        for i in 0..10 {
            values.extend(row.iter().map(|v| v + i as f32 * 1e-3));
        }
        let dataset = Dataset::new(values, 32).unwrap();
        let params = SummaryParams::new(4, 4, 32).unwrap();
        let tree = build(&dataset, &params, 1, 16).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        let queries = random_walk_dataset(10, 32, 5).unwrap();
        for q in 0..queries.count() {
            let query = queries.series(q as u32);
            let (aid, ad) = approximate_search(&tree, &dataset, query).unwrap();
            let exact = brute_force(&dataset, query).unwrap();
            assert_eq!(aid, exact.series_id);
            assert!((ad - exact.distance).abs() < 1e-12);
        }
    }
}
