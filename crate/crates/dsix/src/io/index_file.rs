//! Versioned binary persistence for a built index: header, flattened nodes,
//! then leaf entry arrays. Loading re-checks the path-containment invariant
//! on a sampled subset of leaves.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::index::{IndexTree, LeafData, Node, NodeKind};
use crate::summary::{IsaxSymbol, IsaxWord, SummaryParams};

pub const INDEX_MAGIC: [u8; 4] = *b"DSII";
pub const INDEX_VERSION: u16 = 1;

/// Every 17th leaf gets its entries re-checked against all ancestor regions
/// at load time.
const LEAF_SAMPLE_STRIDE: usize = 17;

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad index magic: expected \"DSII\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported index version {found} (supported: {INDEX_VERSION})")]
    UnsupportedVersion { found: u16 },

    #[error("index file truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("corrupt index file: {0}")]
    Corrupt(String),

    #[error("index invariant violated: {0}")]
    Invariant(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexFileError + '_ {
    move |source| IndexFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexFileError> {
        if self.pos + n > self.data.len() {
            return Err(IndexFileError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.data.len(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IndexFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IndexFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, IndexFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Serializes a built index.
pub fn save_index(path: impl AsRef<Path>, tree: &IndexTree) -> Result<(), IndexFileError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let params = tree.params();
    let segments = params.segments();

    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(&INDEX_MAGIC);
    buf.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes()); // reserved flags
    buf.extend_from_slice(&(segments as u16).to_le_bytes());
    buf.extend_from_slice(&(params.max_card_bits() as u16).to_le_bytes());
    buf.extend_from_slice(&(params.series_len() as u64).to_le_bytes());
    buf.extend_from_slice(&(tree.leaf_capacity() as u64).to_le_bytes());
    buf.extend_from_slice(&tree.series_count().to_le_bytes());
    buf.extend_from_slice(&tree.overflow_leaves().to_le_bytes());
    buf.extend_from_slice(&(tree.nodes().len() as u64).to_le_bytes());
    buf.extend_from_slice(&(tree.roots().len() as u64).to_le_bytes());
    w.write_all(&buf).map_err(io_err(path))?;

    for (&root_id, &node) in tree.roots() {
        w.write_all(&root_id.to_le_bytes()).map_err(io_err(path))?;
        w.write_all(&node.to_le_bytes()).map_err(io_err(path))?;
    }

    let mut body = Vec::new();
    for node in tree.nodes() {
        body.clear();
        for sym in node.summary.symbols() {
            body.extend_from_slice(&sym.value.to_le_bytes());
        }
        for sym in node.summary.symbols() {
            body.push(sym.card_bits);
        }
        body.extend_from_slice(&node.count.to_le_bytes());
        match &node.kind {
            NodeKind::Internal {
                split_segment,
                left,
                right,
            } => {
                body.push(1);
                body.extend_from_slice(&split_segment.to_le_bytes());
                body.extend_from_slice(&left.to_le_bytes());
                body.extend_from_slice(&right.to_le_bytes());
            }
            NodeKind::Leaf(leaf) => {
                body.push(0);
                body.push(u8::from(leaf.overflow));
                body.extend_from_slice(&(leaf.len() as u32).to_le_bytes());
                for &id in &leaf.ids {
                    body.extend_from_slice(&id.to_le_bytes());
                }
                for &s in &leaf.symbols {
                    body.extend_from_slice(&s.to_le_bytes());
                }
            }
        }
        w.write_all(&body).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads a serialized index and validates the sampled path-containment
/// invariant.
pub fn load_index(path: impl AsRef<Path>) -> Result<IndexTree, IndexFileError> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut raw)
        .map_err(io_err(path))?;
    let mut c = Cursor { data: &raw, pos: 0 };

    let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
    if magic != INDEX_MAGIC {
        return Err(IndexFileError::BadMagic { found: magic });
    }
    let version = c.u16()?;
    if version != INDEX_VERSION {
        return Err(IndexFileError::UnsupportedVersion { found: version });
    }
    let _flags = c.u16()?;
    let segments = c.u16()? as usize;
    let max_card = c.u16()? as u8;
    let series_len = c.u64()? as usize;
    let leaf_capacity = c.u64()? as usize;
    let series_count = c.u64()?;
    let overflow_leaves = c.u64()?;
    let node_count = c.u64()? as usize;
    let root_count = c.u64()? as usize;

    let params = SummaryParams::new(segments, max_card, series_len)
        .map_err(|e| IndexFileError::Corrupt(e.to_string()))?;

    let mut roots = BTreeMap::new();
    for _ in 0..root_count {
        let root_id = c.u64()?;
        let node = c.u32()?;
        if node as usize >= node_count {
            return Err(IndexFileError::Corrupt(format!(
                "root node {node} out of range ({node_count} nodes)"
            )));
        }
        roots.insert(root_id, node);
    }

    let mut nodes = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let mut symbols = Vec::with_capacity(segments);
        let values = c.take(segments * 2)?;
        let cards = c.take(segments)?;
        for s in 0..segments {
            let value = u16::from_le_bytes(values[s * 2..s * 2 + 2].try_into().unwrap());
            let card_bits = cards[s];
            if card_bits == 0 || card_bits > max_card || (value as u32) >= (1u32 << card_bits) {
                return Err(IndexFileError::Corrupt(format!(
                    "node {i} segment {s}: symbol {value} invalid at {card_bits} bits"
                )));
            }
            symbols.push(IsaxSymbol { value, card_bits });
        }
        let summary = IsaxWord::new(symbols);
        let count = c.u64()?;
        let kind = match c.u8()? {
            1 => {
                let split_segment = c.u16()?;
                let left = c.u32()?;
                let right = c.u32()?;
                if left as usize >= node_count || right as usize >= node_count {
                    return Err(IndexFileError::Corrupt(format!(
                        "node {i} child index out of range"
                    )));
                }
                NodeKind::Internal {
                    split_segment,
                    left,
                    right,
                }
            }
            0 => {
                let overflow = c.u8()? != 0;
                let len = c.u32()? as usize;
                let id_bytes = c.take(len * 4)?;
                let ids = id_bytes
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                let sym_bytes = c.take(len * segments * 2)?;
                let leaf_symbols = sym_bytes
                    .chunks_exact(2)
                    .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                NodeKind::Leaf(LeafData {
                    ids,
                    symbols: leaf_symbols,
                    overflow,
                })
            }
            tag => {
                return Err(IndexFileError::Corrupt(format!(
                    "node {i} has unknown kind tag {tag}"
                )))
            }
        };
        nodes.push(Node {
            summary,
            count,
            kind,
        });
    }
    if c.pos != raw.len() {
        return Err(IndexFileError::Corrupt(format!(
            "{} trailing bytes after node section",
            raw.len() - c.pos
        )));
    }

    let tree = IndexTree::from_parts(
        params,
        leaf_capacity,
        nodes,
        roots,
        series_count,
        overflow_leaves,
    );
    validate_sampled_containment(&tree)?;
    Ok(tree)
}

/// Walks each root subtree and checks, for every sampled leaf, that each
/// entry's word lies inside every region on its root-to-leaf path. Small
/// trees are validated in full.
fn validate_sampled_containment(tree: &IndexTree) -> Result<(), IndexFileError> {
    let segments = tree.params().segments();
    let max_card = tree.params().max_card_bits();
    let total_leaves = tree.nodes().iter().filter(|n| n.is_leaf()).count();
    let stride = if total_leaves <= 64 { 1 } else { LEAF_SAMPLE_STRIDE };
    let mut leaf_counter = 0usize;

    for (&root_id, &root_node) in tree.roots() {
        // Stack of (node, ancestry depth); ancestors holds the path regions.
        let mut stack = vec![(root_node, 0usize)];
        let mut ancestors: Vec<IsaxWord> = Vec::new();
        while let Some((idx, depth)) = stack.pop() {
            ancestors.truncate(depth);
            let node = tree.node(idx);
            ancestors.push(node.summary.clone());
            match &node.kind {
                NodeKind::Internal { left, right, .. } => {
                    stack.push((*right, depth + 1));
                    stack.push((*left, depth + 1));
                }
                NodeKind::Leaf(leaf) => {
                    leaf_counter += 1;
                    if leaf_counter % stride != 0 && leaf_counter != 1 {
                        continue;
                    }
                    for (i, &id) in leaf.ids.iter().enumerate() {
                        let row = leaf.row(i, segments);
                        for region in &ancestors {
                            if !region.contains_max_card(row, max_card) {
                                return Err(IndexFileError::Invariant(format!(
                                    "path containment: series {id} escapes an ancestor region \
                                     in subtree {root_id}"
                                )));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build;
    use crate::io::generate::random_walk_dataset;

    fn sample_tree() -> IndexTree {
        let dataset = random_walk_dataset(800, 64, 31).unwrap();
        let params = SummaryParams::new(8, 6, 64).unwrap();
        build(&dataset, &params, 2, 32).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.dsii");
        let tree = sample_tree();
        save_index(&path, &tree).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back.series_count(), tree.series_count());
        assert_eq!(back.nodes().len(), tree.nodes().len());
        assert_eq!(back.roots(), tree.roots());
        assert_eq!(back.leaf_capacity(), tree.leaf_capacity());
        back.check_invariants().unwrap();
        // Flattened views agree.
        let (a, _) = tree.flatten();
        let (b, _) = back.flatten();
        assert_eq!(a.words.values(), b.words.values());
    }

    #[test]
    fn loader_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.dsii");
        save_index(&path, &sample_tree()).unwrap();
        let raw = std::fs::read(&path).unwrap();

        let mut bad_magic = raw.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(load_index(&path), Err(IndexFileError::BadMagic { .. })));

        let mut bad_version = raw.clone();
        bad_version[4] = 0xFF;
        std::fs::write(&path, &bad_version).unwrap();
        assert!(matches!(
            load_index(&path),
            Err(IndexFileError::UnsupportedVersion { .. })
        ));

        std::fs::write(&path, &raw[..raw.len() - 3]).unwrap();
        assert!(matches!(
            load_index(&path),
            Err(IndexFileError::Truncated { .. })
        ));
    }

    #[test]
    fn loader_detects_containment_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.dsii");
        // Small tree, so the loader validates every leaf.
        let dataset = random_walk_dataset(200, 64, 8).unwrap();
        let params = SummaryParams::new(8, 6, 64).unwrap();
        let tree = build(&dataset, &params, 1, 64).unwrap();

        // Rebuild the tree with one leaf entry whose word escapes its
        // region (flipped leading bit), then persist and reload.
        let mut nodes: Vec<Node> = tree.nodes().to_vec();
        let first_leaf = nodes
            .iter_mut()
            .find(|n| matches!(&n.kind, NodeKind::Leaf(l) if !l.is_empty()))
            .unwrap();
        if let NodeKind::Leaf(leaf) = &mut first_leaf.kind {
            leaf.symbols[0] ^= 1 << 5; // leading bit at 6-bit cardinality
        }
        let tampered = IndexTree::from_parts(
            *tree.params(),
            tree.leaf_capacity(),
            nodes,
            tree.roots().clone(),
            tree.series_count(),
            tree.overflow_leaves(),
        );
        save_index(&path, &tampered).unwrap();
        assert!(matches!(
            load_index(&path),
            Err(IndexFileError::Invariant(_))
        ));
    }
}
