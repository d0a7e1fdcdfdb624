//! Folding a leaf trie into a minimal level-structured DAG.
//!
//! Identical subtrees are merged bottom-up: level 0 interns the leaf labels,
//! and every level above interns `(left, right)` pairs of ids from the level
//! below. Ids are dense and assigned in order of first appearance scanning
//! left to right, so the result is canonical for a given trie.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::trie::{check_height, Address, Label, LeafTrie};
use crate::{Error, Result};

pub type NodeId = u32;

/// An internal DAG node; both children live one level below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Node {
    pub left: NodeId,
    pub right: NodeId,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldedDag {
    height: u32,
    label_table: Vec<Label>,
    /// `levels[j - 1]` holds the nodes of level `j`.
    levels: Vec<Vec<Node>>,
    root: NodeId,
}

/// Merges isomorphic subtrees of `trie`.
pub fn fold(trie: &LeafTrie) -> FoldedDag {
    let height = trie.height();

    let mut label_table = Vec::new();
    let mut label_ids: HashMap<Label, NodeId> = HashMap::new();
    let mut ids: Vec<NodeId> = trie
        .leaves()
        .iter()
        .map(|&l| {
            *label_ids.entry(l).or_insert_with(|| {
                label_table.push(l);
                (label_table.len() - 1) as NodeId
            })
        })
        .collect();

    let mut levels = Vec::with_capacity(height as usize);
    for _ in 1..=height {
        let mut nodes = Vec::new();
        let mut index: HashMap<Node, NodeId> = HashMap::new();
        ids = ids
            .chunks_exact(2)
            .map(|pair| {
                let node = Node {
                    left: pair[0],
                    right: pair[1],
                };
                *index.entry(node).or_insert_with(|| {
                    nodes.push(node);
                    (nodes.len() - 1) as NodeId
                })
            })
            .collect();
        levels.push(nodes);
    }
    debug_assert_eq!(ids.len(), 1);

    FoldedDag {
        height,
        label_table,
        levels,
        root: ids[0],
    }
}

impl FoldedDag {
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn label_table(&self) -> &[Label] {
        &self.label_table
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Nodes at level `j` for `1 <= j <= h`.
    pub fn level(&self, j: u32) -> &[Node] {
        assert!(
            j >= 1 && j <= self.height,
            "level {j} outside 1..={}",
            self.height
        );
        &self.levels[j as usize - 1]
    }

    /// `|V_j|` for `j = 0..=h`; entry 0 is the number of distinct labels.
    pub fn level_widths(&self) -> Vec<usize> {
        std::iter::once(self.label_table.len())
            .chain(self.levels.iter().map(Vec::len))
            .collect()
    }

    /// Total number of internal nodes, levels `1..=h`.
    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Number of parents referencing each node of level `j < h`.
    pub fn in_degrees(&self, j: u32) -> Vec<usize> {
        assert!(j < self.height, "level {j} has no parents");
        let width = self.level_widths()[j as usize];
        let mut deg = vec![0; width];
        for n in self.level(j + 1) {
            deg[n.left as usize] += 1;
            deg[n.right as usize] += 1;
        }
        deg
    }

    pub fn lookup(&self, address: &Address) -> Result<Label> {
        if address.len() != self.height {
            return Err(Error::invalid(format!(
                "address {address} has {} bits, DAG height is {}",
                address.len(),
                self.height
            )));
        }
        let mut id = self.root;
        for (depth, j) in (1..=self.height).rev().enumerate() {
            let node = self.levels[j as usize - 1][id as usize];
            id = if address.bit(depth as u32) {
                node.right
            } else {
                node.left
            };
        }
        Ok(self.label_table[id as usize])
    }

    /// Expands the DAG back into the complete trie it represents.
    pub fn expand(&self) -> LeafTrie {
        let mut ids = vec![self.root];
        for j in (1..=self.height).rev() {
            let nodes = &self.levels[j as usize - 1];
            ids = ids
                .iter()
                .flat_map(|&id| {
                    let n = nodes[id as usize];
                    [n.left, n.right]
                })
                .collect();
        }
        let leaves = ids
            .iter()
            .map(|&id| self.label_table[id as usize])
            .collect();
        LeafTrie::from_leaves(self.height, leaves).expect("DAG expands to a complete trie")
    }

    /// Bit accounting for child pointers.
    ///
    /// The uniform model charges `2(h - kstar)` bits to every node. The exact
    /// model charges each node at level `j` two ids of
    /// `ceil(log2(max(|V_{j-1}|, 2)))` bits.
    pub fn account_memory(&self, kstar: u32) -> Result<MemoryAccount> {
        if kstar > self.height {
            return Err(Error::OutOfRange {
                what: "kstar",
                value: kstar as i64,
                min: 0,
                max: self.height as i64,
            });
        }
        let widths = self.level_widths();
        let nodes = self.node_count() as u64;
        let paper_model_bits = nodes * 2 * u64::from(self.height - kstar);
        let exact_bits = widths
            .windows(2)
            .map(|w| w[1] as u64 * 2 * u64::from(id_bits(w[0])))
            .sum();
        Ok(MemoryAccount {
            height: self.height,
            kstar,
            paper_model_bits,
            exact_bits,
            per_level_widths: widths,
            degenerate: kstar == self.height,
        })
    }

    /// Text dump: `level 0: <labels>` then `level j: (l,r) ...` for `j = 1..=h`.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

/// Bits needed to address `width` ids, at least one.
pub fn id_bits(width: usize) -> u32 {
    let w = width.max(2);
    usize::BITS - (w - 1).leading_zeros()
}

impl fmt::Display for FoldedDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level 0:")?;
        for l in &self.label_table {
            write!(f, " {l}")?;
        }
        writeln!(f)?;
        for (i, nodes) in self.levels.iter().enumerate() {
            write!(f, "level {}:", i + 1)?;
            for n in nodes {
                write!(f, " {n}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for FoldedDag {
    type Err = Error;

    /// Parses a dump, checking range, minimality and the single root.
    fn from_str(s: &str) -> Result<Self> {
        let mut label_table = Vec::new();
        let mut levels: Vec<Vec<Node>> = Vec::new();
        let mut expected = 0usize;
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: n + 1, msg };
            let (head, body) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected `level <j>: ...`, got {line:?}")))?;
            let j: usize = head
                .strip_prefix("level ")
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(format!("bad level header {head:?}")))?;
            if j != expected {
                return Err(err(format!("expected level {expected}, found level {j}")));
            }
            expected += 1;
            if j == 0 {
                for tok in body.split_whitespace() {
                    label_table.push(tok.parse::<Label>().map_err(|e| err(e.to_string()))?);
                }
                continue;
            }
            let below = if j == 1 {
                label_table.len()
            } else {
                levels[j - 2].len()
            };
            let mut nodes = Vec::new();
            for tok in body.split_whitespace() {
                let pair = tok
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .and_then(|t| t.split_once(','))
                    .ok_or_else(|| err(format!("bad node {tok:?}")))?;
                let parse_id = |v: &str| -> Result<NodeId> {
                    let id: NodeId = v.parse().map_err(|_| err(format!("bad node id {v:?}")))?;
                    if id as usize >= below {
                        return Err(err(format!("child id {id} out of range for width {below}")));
                    }
                    Ok(id)
                };
                nodes.push(Node {
                    left: parse_id(pair.0)?,
                    right: parse_id(pair.1)?,
                });
            }
            let mut uniq = std::collections::HashSet::new();
            if nodes.iter().any(|n| !uniq.insert(*n)) {
                return Err(err(format!("level {j} contains duplicate nodes")));
            }
            levels.push(nodes);
        }
        let height = levels.len() as u32;
        check_height(height)?;
        if levels.last().map(Vec::len) != Some(1) {
            return Err(Error::invalid("top level must hold exactly one root"));
        }
        Ok(FoldedDag {
            height,
            label_table,
            levels,
            root: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryAccount {
    pub height: u32,
    pub kstar: u32,
    /// Every node stored in `2(h - kstar)` bits.
    pub paper_model_bits: u64,
    /// Child ids sized to the width of the level below.
    pub exact_bits: u64,
    pub per_level_widths: Vec<usize>,
    /// `kstar == h`: the uniform model charges zero bits.
    pub degenerate: bool,
}
