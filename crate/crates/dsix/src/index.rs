//! The iSAX index tree: a root with up to `2^w` children keyed by the
//! leading bit of each segment, where every root subtree is a leaf-oriented
//! binary tree refined one cardinality bit at a time.
//!
//! Construction runs in two phases. Workers first summarize disjoint slices
//! of the collection into per-(subtree, worker) buffers, then whole subtrees
//! are handed to workers so each subtree has exactly one builder and no
//! cross-worker synchronization.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use crate::error::Error;
use crate::series::{Dataset, SeriesId};
use crate::summary::{
    compute_paa_into, symbolize_max_into, BreakpointTable, FlatWords, IsaxSymbol, IsaxWord,
    SummaryParams,
};

/// Root subtree id of a word: one leading bit per segment, segment 0 in the
/// most significant position.
pub fn root_subtree_of(word: &IsaxWord) -> u64 {
    word.symbols()
        .iter()
        .fold(0u64, |acc, s| (acc << 1) | s.leading_bit())
}

/// [`root_subtree_of`] over raw symbol values at uniform cardinality.
pub fn root_subtree_of_max(symbols: &[u16], card_bits: u8) -> u64 {
    symbols
        .iter()
        .fold(0u64, |acc, &v| (acc << 1) | (v >> (card_bits - 1)) as u64)
}

/// Reconstructs the cardinality-1 region of a root subtree from its id.
pub fn root_summary(root_id: u64, segments: usize) -> IsaxWord {
    IsaxWord::new(
        (0..segments)
            .map(|seg| IsaxSymbol {
                value: ((root_id >> (segments - 1 - seg)) & 1) as u16,
                card_bits: 1,
            })
            .collect(),
    )
}

#[derive(Debug, Default)]
struct SubtreeBuffer {
    ids: Vec<SeriesId>,
    symbols: Vec<u16>,
}

/// One worker's append-only view of the iSAX buffers. Each buffer is owned
/// by exactly one worker during the summarization phase.
#[derive(Debug)]
pub struct WorkerBuffers {
    segments: usize,
    map: HashMap<u64, SubtreeBuffer>,
}

impl WorkerBuffers {
    pub fn append(&mut self, root: u64, id: SeriesId, symbols: &[u16]) {
        debug_assert_eq!(symbols.len(), self.segments);
        let buf = self.map.entry(root).or_default();
        buf.ids.push(id);
        buf.symbols.extend_from_slice(symbols);
    }

    pub fn entry_count(&self) -> usize {
        self.map.values().map(|b| b.ids.len()).sum()
    }
}

/// Per-(root subtree, worker) buffers of `(iSAX word, series id)` entries
/// produced by the summarization phase.
#[derive(Debug)]
pub struct IsaxBufferSet {
    segments: usize,
    card_bits: u8,
    per_worker: Vec<WorkerBuffers>,
}

impl IsaxBufferSet {
    pub fn new(workers: usize, segments: usize, card_bits: u8) -> Self {
        Self {
            segments,
            card_bits,
            per_worker: (0..workers)
                .map(|_| WorkerBuffers {
                    segments,
                    map: HashMap::new(),
                })
                .collect(),
        }
    }

    pub fn workers(&self) -> usize {
        self.per_worker.len()
    }

    /// Mutable access to each worker's buffers, for the summarization scope.
    pub fn worker_buffers_mut(&mut self) -> &mut [WorkerBuffers] {
        &mut self.per_worker
    }

    pub fn total_entries(&self) -> usize {
        self.per_worker.iter().map(|w| w.entry_count()).sum()
    }

    /// Entry counts per root subtree, in ascending id order.
    pub fn subtree_sizes(&self) -> BTreeMap<u64, usize> {
        let mut sizes = BTreeMap::new();
        for worker in &self.per_worker {
            for (&root, buf) in &worker.map {
                *sizes.entry(root).or_insert(0) += buf.ids.len();
            }
        }
        sizes
    }

    /// Concatenates one subtree's buffers in worker order.
    fn gather(&self, root: u64) -> (Vec<SeriesId>, Vec<u16>) {
        let mut ids = Vec::new();
        let mut symbols = Vec::new();
        for worker in &self.per_worker {
            if let Some(buf) = worker.map.get(&root) {
                ids.extend_from_slice(&buf.ids);
                symbols.extend_from_slice(&buf.symbols);
            }
        }
        (ids, symbols)
    }

    /// Checks buffer locality: every entry's word maps to the buffer's root
    /// subtree.
    pub fn check_locality(&self) -> bool {
        self.per_worker.iter().all(|worker| {
            worker.map.iter().all(|(&root, buf)| {
                (0..buf.ids.len()).all(|i| {
                    let row = &buf.symbols[i * self.segments..(i + 1) * self.segments];
                    root_subtree_of_max(row, self.card_bits) == root
                })
            })
        })
    }
}

/// Leaf payload: series ids plus their max-cardinality symbol rows, stored
/// flat. `overflow` marks a leaf that exhausted every segment's cardinality
/// and therefore waives the capacity bound.
#[derive(Debug, Clone)]
pub struct LeafData {
    pub ids: Vec<SeriesId>,
    pub symbols: Vec<u16>,
    pub overflow: bool,
}

impl LeafData {
    fn empty() -> Self {
        Self {
            ids: Vec::new(),
            symbols: Vec::new(),
            overflow: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize, segments: usize) -> &[u16] {
        &self.symbols[i * segments..(i + 1) * segments]
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Internal {
        split_segment: u16,
        left: u32,
        right: u32,
    },
    Leaf(LeafData),
}

/// A tree node: the iSAX region it covers, the number of series below it,
/// and either two children or a leaf payload.
#[derive(Debug, Clone)]
pub struct Node {
    pub summary: IsaxWord,
    pub count: u64,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }
}

/// An immutable iSAX index over one dataset.
#[derive(Debug)]
pub struct IndexTree {
    params: SummaryParams,
    leaf_capacity: usize,
    nodes: Vec<Node>,
    roots: BTreeMap<u64, u32>,
    series_count: u64,
    overflow_leaves: u64,
}

impl IndexTree {
    pub fn params(&self) -> &SummaryParams {
        &self.params
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn node(&self, idx: u32) -> &Node {
        &self.nodes[idx as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Root children in ascending subtree-id order.
    pub fn roots(&self) -> &BTreeMap<u64, u32> {
        &self.roots
    }

    pub fn series_count(&self) -> u64 {
        self.series_count
    }

    /// Number of leaves that hit maximum cardinality on every segment and
    /// had their capacity bound waived.
    pub fn overflow_leaves(&self) -> u64 {
        self.overflow_leaves
    }

    pub(crate) fn from_parts(
        params: SummaryParams,
        leaf_capacity: usize,
        nodes: Vec<Node>,
        roots: BTreeMap<u64, u32>,
        series_count: u64,
        overflow_leaves: u64,
    ) -> Self {
        Self {
            params,
            leaf_capacity,
            nodes,
            roots,
            series_count,
            overflow_leaves,
        }
    }

    /// Flattens the tree into the two summary arrays used by the scan
    /// engines: one in collection order, one in leaf-traversal order with
    /// per-root-subtree ranges.
    pub fn flatten(&self) -> (SaxArray, LeafOrderedArray) {
        let w = self.params.segments();
        let card = self.params.max_card_bits();
        let count = self.series_count as usize;

        let mut sax_values = vec![0u16; count * w];
        let mut leaf_words = FlatWords::with_capacity(w, card, count);
        let mut leaf_ids = Vec::with_capacity(count);
        let mut ranges = Vec::with_capacity(self.roots.len());

        for (&root_id, &root_node) in &self.roots {
            let start = leaf_ids.len();
            let mut stack = vec![root_node];
            while let Some(idx) = stack.pop() {
                match &self.nodes[idx as usize].kind {
                    NodeKind::Internal { left, right, .. } => {
                        stack.push(*right);
                        stack.push(*left);
                    }
                    NodeKind::Leaf(leaf) => {
                        for (i, &id) in leaf.ids.iter().enumerate() {
                            let row = leaf.row(i, w);
                            sax_values[id as usize * w..(id as usize + 1) * w]
                                .copy_from_slice(row);
                            leaf_words.push_row(row);
                            leaf_ids.push(id);
                        }
                    }
                }
            }
            ranges.push(SubtreeRange {
                root_id,
                start,
                len: leaf_ids.len() - start,
            });
        }

        let sax = SaxArray {
            words: FlatWords::from_values(w, card, sax_values),
            ids: (0..count as u32).collect(),
        };
        let leaf_ordered = LeafOrderedArray {
            words: leaf_words,
            ids: leaf_ids,
            ranges,
        };
        (sax, leaf_ordered)
    }

    /// Full structural audit: id uniqueness, path containment, child
    /// partitioning and count consistency. Returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let w = self.params.segments();
        let max_card = self.params.max_card_bits();
        let mut seen = vec![false; self.series_count as usize];
        let mut total = 0u64;

        for (&root_id, &root_node) in &self.roots {
            let root = &self.nodes[root_node as usize];
            if root_subtree_word_id(&root.summary) != root_id {
                return Err(format!("root child summary does not match id {root_id}"));
            }
            let mut stack = vec![root_node];
            while let Some(idx) = stack.pop() {
                let node = &self.nodes[idx as usize];
                match &node.kind {
                    NodeKind::Internal {
                        split_segment,
                        left,
                        right,
                    } => {
                        let (l, r) = (&self.nodes[*left as usize], &self.nodes[*right as usize]);
                        if node.count != l.count + r.count {
                            return Err(format!("count mismatch at node {idx}"));
                        }
                        let s = *split_segment as usize;
                        for (bit, child) in [(0u16, l), (1u16, r)] {
                            if child.summary != node.summary.refine(s, bit) {
                                return Err(format!(
                                    "child of node {idx} does not refine segment {s} by bit {bit}"
                                ));
                            }
                            if !node.summary.contains(&child.summary) {
                                return Err(format!("containment violated under node {idx}"));
                            }
                        }
                        stack.push(*right);
                        stack.push(*left);
                    }
                    NodeKind::Leaf(leaf) => {
                        if node.count != leaf.len() as u64 {
                            return Err(format!("leaf {idx} count mismatch"));
                        }
                        if !leaf.overflow && leaf.len() > self.leaf_capacity {
                            return Err(format!("leaf {idx} exceeds capacity without overflow"));
                        }
                        for (i, &id) in leaf.ids.iter().enumerate() {
                            let row = leaf.row(i, w);
                            if !node.summary.contains_max_card(row, max_card) {
                                return Err(format!("entry {id} outside leaf {idx} region"));
                            }
                            let slot = &mut seen[id as usize];
                            if *slot {
                                return Err(format!("series {id} appears in two leaves"));
                            }
                            *slot = true;
                            total += 1;
                        }
                    }
                }
            }
        }
        if total != self.series_count {
            return Err(format!(
                "stored {total} series, expected {}",
                self.series_count
            ));
        }
        Ok(())
    }
}

fn root_subtree_word_id(summary: &IsaxWord) -> u64 {
    summary
        .symbols()
        .iter()
        .fold(0u64, |acc, s| (acc << 1) | s.leading_bit())
}

/// iSAX words of the whole collection at maximum cardinality, in collection
/// order; position `i` summarizes series `i`.
#[derive(Debug, Clone)]
pub struct SaxArray {
    pub words: FlatWords,
    pub ids: Vec<SeriesId>,
}

/// One root subtree's span inside a [`LeafOrderedArray`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtreeRange {
    pub root_id: u64,
    pub start: usize,
    pub len: usize,
}

/// iSAX words in the order series appear in the leaves, with contiguous
/// per-root-subtree ranges. The batched engine prunes whole ranges before
/// running its kernel.
#[derive(Debug, Clone)]
pub struct LeafOrderedArray {
    pub words: FlatWords,
    pub ids: Vec<SeriesId>,
    pub ranges: Vec<SubtreeRange>,
}

fn worker_slice(count: usize, workers: usize, k: usize) -> std::ops::Range<usize> {
    let base = count / workers;
    let extra = count % workers;
    let start = k * base + k.min(extra);
    let len = base + usize::from(k < extra);
    start..start + len
}

/// Builds the index over a full in-memory dataset.
///
/// Phase 1 partitions the collection across `workers`, each appending
/// summaries to its own buffers. Phase 2 assigns whole subtrees to workers,
/// largest first onto the least-loaded. Leaf contents are identical for
/// every worker count.
pub fn build(
    dataset: &Dataset,
    params: &SummaryParams,
    workers: usize,
    leaf_capacity: usize,
) -> Result<IndexTree, Error> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    if leaf_capacity == 0 {
        return Err(Error::BadLeafCapacity);
    }
    if dataset.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if dataset.series_len() != params.series_len() {
        return Err(Error::LengthMismatch {
            expected: params.series_len(),
            got: dataset.series_len(),
        });
    }

    let table = BreakpointTable::new(params.max_card_bits());
    let mut buffers = IsaxBufferSet::new(workers, params.segments(), params.max_card_bits());
    let count = dataset.count();

    std::thread::scope(|scope| {
        for (k, worker_buf) in buffers.worker_buffers_mut().iter_mut().enumerate() {
            let range = worker_slice(count, workers, k);
            let table = &table;
            scope.spawn(move || {
                summarize_slice(dataset, params, table, range, worker_buf);
            });
        }
    });

    Ok(build_from_buffers(&buffers, params, workers, leaf_capacity))
}

/// Summarization phase body: PAA, max-cardinality symbols, append to the
/// worker's buffer keyed by root subtree.
pub(crate) fn summarize_slice(
    dataset: &Dataset,
    params: &SummaryParams,
    table: &BreakpointTable,
    range: std::ops::Range<usize>,
    out: &mut WorkerBuffers,
) {
    let card = params.max_card_bits();
    let mut paa = Vec::with_capacity(params.segments());
    let mut symbols = Vec::with_capacity(params.segments());
    for id in range {
        paa.clear();
        symbols.clear();
        compute_paa_into(dataset.series(id as SeriesId), params, &mut paa);
        symbolize_max_into(&paa, params, table, &mut symbols);
        let root = root_subtree_of_max(&symbols, card);
        out.append(root, id as SeriesId, &symbols);
    }
}

/// Tree-construction phase: one dedicated builder per subtree, subtrees
/// spread over workers greedily by buffered entry count.
pub fn build_from_buffers(
    buffers: &IsaxBufferSet,
    params: &SummaryParams,
    workers: usize,
    leaf_capacity: usize,
) -> IndexTree {
    let sizes = buffers.subtree_sizes();
    let mut order: Vec<(u64, usize)> = sizes.iter().map(|(&r, &s)| (r, s)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut load = vec![0usize; workers];
    let mut assignment: Vec<Vec<u64>> = vec![Vec::new(); workers];
    for (root, size) in order {
        let k = (0..workers).min_by_key(|&k| (load[k], k)).unwrap();
        assignment[k].push(root);
        load[k] += size;
    }

    let built: Mutex<Vec<(u64, SubtreeNodes)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for roots in &assignment {
            let built = &built;
            let buffers = &buffers;
            scope.spawn(move || {
                for &root in roots {
                    let (ids, symbols) = buffers.gather(root);
                    let subtree = build_subtree(root, ids, symbols, params, leaf_capacity);
                    built.lock().unwrap().push((root, subtree));
                }
            });
        }
    });

    let mut list = built.into_inner().unwrap();
    list.sort_by_key(|(root, _)| *root);

    let mut nodes = Vec::new();
    let mut roots = BTreeMap::new();
    let mut series_count = 0u64;
    let mut overflow_leaves = 0u64;
    for (root, subtree) in list {
        let base = nodes.len() as u32;
        series_count += subtree.nodes[0].count;
        overflow_leaves += subtree.overflow_leaves;
        roots.insert(root, base);
        for mut node in subtree.nodes {
            if let NodeKind::Internal { left, right, .. } = &mut node.kind {
                *left += base;
                *right += base;
            }
            nodes.push(node);
        }
    }

    IndexTree {
        params: *params,
        leaf_capacity,
        nodes,
        roots,
        series_count,
        overflow_leaves,
    }
}

struct SubtreeNodes {
    nodes: Vec<Node>,
    overflow_leaves: u64,
}

fn build_subtree(
    root_id: u64,
    ids: Vec<SeriesId>,
    symbols: Vec<u16>,
    params: &SummaryParams,
    leaf_capacity: usize,
) -> SubtreeNodes {
    let w = params.segments();
    let max_card = params.max_card_bits();
    let mut nodes = vec![Node {
        summary: root_summary(root_id, w),
        count: 0,
        kind: NodeKind::Leaf(LeafData::empty()),
    }];
    let mut overflow_leaves = 0u64;

    for (i, &id) in ids.iter().enumerate() {
        let row = &symbols[i * w..(i + 1) * w];
        insert_entry(
            &mut nodes,
            id,
            row,
            max_card,
            leaf_capacity,
            &mut overflow_leaves,
        );
    }

    SubtreeNodes {
        nodes,
        overflow_leaves,
    }
}

fn insert_entry(
    nodes: &mut Vec<Node>,
    id: SeriesId,
    row: &[u16],
    max_card: u8,
    leaf_capacity: usize,
    overflow_leaves: &mut u64,
) {
    let mut cur = 0u32;
    loop {
        nodes[cur as usize].count += 1;
        match &nodes[cur as usize].kind {
            NodeKind::Internal {
                split_segment,
                left,
                right,
            } => {
                let s = *split_segment as usize;
                let child_card = nodes[*left as usize].summary.symbol(s).card_bits;
                let bit = (row[s] >> (max_card - child_card)) & 1;
                cur = if bit == 0 { *left } else { *right };
            }
            NodeKind::Leaf(_) => break,
        }
    }
    let (len, overflow) = {
        let NodeKind::Leaf(leaf) = &mut nodes[cur as usize].kind else {
            unreachable!()
        };
        leaf.ids.push(id);
        leaf.symbols.extend_from_slice(row);
        (leaf.ids.len(), leaf.overflow)
    };
    if len > leaf_capacity && !overflow {
        split_chain(nodes, cur, max_card, leaf_capacity, overflow_leaves);
    }
}

/// Splits an over-capacity leaf, cascading while a child remains over
/// capacity. The split segment is the one with the lowest cardinality
/// (lowest index on ties); entries move by the next bit of that segment's
/// symbol. A leaf already at maximum cardinality on every segment becomes
/// an overflow leaf instead of recursing forever.
fn split_chain(
    nodes: &mut Vec<Node>,
    start: u32,
    max_card: u8,
    leaf_capacity: usize,
    overflow_leaves: &mut u64,
) {
    let mut pending = vec![start];
    while let Some(cur) = pending.pop() {
        let summary = nodes[cur as usize].summary.clone();
        let (seg, card) = summary
            .symbols()
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.card_bits))
            .min_by_key(|&(i, c)| (c, i))
            .expect("summaries are non-empty");

        if card == max_card {
            let NodeKind::Leaf(leaf) = &mut nodes[cur as usize].kind else {
                unreachable!()
            };
            leaf.overflow = true;
            *overflow_leaves += 1;
            continue;
        }

        let leaf = {
            let placeholder = NodeKind::Internal {
                split_segment: seg as u16,
                left: 0,
                right: 0,
            };
            match std::mem::replace(&mut nodes[cur as usize].kind, placeholder) {
                NodeKind::Leaf(leaf) => leaf,
                NodeKind::Internal { .. } => unreachable!(),
            }
        };

        let w = summary.segments();
        let child_card = card + 1;
        let mut sides = [
            (IsaxWord::new(vec![]), LeafData::empty()),
            (IsaxWord::new(vec![]), LeafData::empty()),
        ];
        sides[0].0 = summary.refine(seg, 0);
        sides[1].0 = summary.refine(seg, 1);
        for (i, &id) in leaf.ids.iter().enumerate() {
            let row = leaf.row(i, w);
            let bit = ((row[seg] >> (max_card - child_card)) & 1) as usize;
            sides[bit].1.ids.push(id);
            sides[bit].1.symbols.extend_from_slice(row);
        }

        let mut child_idx = [0u32; 2];
        for (slot, (child_summary, data)) in sides.into_iter().enumerate() {
            let idx = nodes.len() as u32;
            let count = data.ids.len() as u64;
            nodes.push(Node {
                summary: child_summary,
                count,
                kind: NodeKind::Leaf(data),
            });
            child_idx[slot] = idx;
            if count as usize > leaf_capacity {
                pending.push(idx);
            }
        }

        let NodeKind::Internal { left, right, .. } = &mut nodes[cur as usize].kind else {
            unreachable!()
        };
        *left = child_idx[0];
        *right = child_idx[1];
    }
}
