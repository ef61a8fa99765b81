//! Dyadic tree partition of the unit hypercube `[0,1]^d`.
//!
//! Every split bisects each axis, so a node has `Ψ = 2^d` children and bins at
//! depth `h` have side `V_h = 2^{-h}`. Child `j` of `(h, i)` is `(h+1, i·Ψ + j)`;
//! bit `a` of `j` selects the upper half along axis `a`. Cells are half-open
//! `[lo, hi)` except on the upper face of the cube, which is closed.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("context dimension must be at least 1")]
    ZeroDimension,
    #[error("bin index {index} out of range at depth {depth}")]
    IndexOutOfRange { depth: u32, index: u64 },
    #[error("depth {depth} too large for dimension {dim}")]
    DepthOverflow { depth: u32, dim: usize },
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} lies outside the unit cube")]
    OutOfDomain(Vec<f64>),
    #[error("bin ({depth},{index}) is not a leaf")]
    NotALeaf { depth: u32, index: u64 },
    #[error("bin ({depth},{index}) is not in the tree")]
    UnknownBin { depth: u32, index: u64 },
}

/// Tree coordinates `(h, i)` of a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinId {
    pub depth: u32,
    pub index: u64,
}

impl BinId {
    pub const ROOT: BinId = BinId { depth: 0, index: 0 };

    pub fn new(depth: u32, index: u64) -> Self {
        Self { depth, index }
    }

    pub fn parent(&self, dim: usize) -> Option<BinId> {
        (self.depth > 0).then(|| BinId::new(self.depth - 1, self.index >> dim))
    }

    pub fn children(&self, dim: usize) -> Vec<BinId> {
        let branching = 1u64 << dim;
        (0..branching)
            .map(|j| BinId::new(self.depth + 1, (self.index << dim) | j))
            .collect()
    }

    /// Side length `2^{-h}`.
    pub fn width(&self) -> f64 {
        0.5f64.powi(self.depth as i32)
    }
}

fn check_bin(bin: BinId, dim: usize) -> Result<(), PartitionError> {
    if dim == 0 {
        return Err(PartitionError::ZeroDimension);
    }
    let bits = bin.depth as usize * dim;
    if bits > 62 {
        return Err(PartitionError::DepthOverflow { depth: bin.depth, dim });
    }
    if bin.index >= 1u64 << bits {
        return Err(PartitionError::IndexOutOfRange {
            depth: bin.depth,
            index: bin.index,
        });
    }
    Ok(())
}

/// Axis-aligned box of a bin. `closed_upper[a]` marks the axis where the cell touches 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub closed_upper: Vec<bool>,
}

impl Cell {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(a, &v)| {
            v >= self.lo[a] && (v < self.hi[a] || (self.closed_upper[a] && v <= self.hi[a]))
        })
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

/// Integer cell coordinates of a bin along each axis, each in `[0, 2^h)`.
pub fn axis_coords(bin: BinId, dim: usize) -> Result<Vec<u64>, PartitionError> {
    check_bin(bin, dim)?;
    let mut coords = vec![0u64; dim];
    for level in 0..bin.depth as usize {
        // level 0 is the first split and sits in the highest bits
        let shift = (bin.depth as usize - 1 - level) * dim;
        for (a, c) in coords.iter_mut().enumerate() {
            *c = (*c << 1) | ((bin.index >> (shift + a)) & 1);
        }
    }
    Ok(coords)
}

pub fn cell_of(bin: BinId, dim: usize) -> Result<Cell, PartitionError> {
    let coords = axis_coords(bin, dim)?;
    let n = 1u64 << bin.depth;
    let w = bin.width();
    Ok(Cell {
        lo: coords.iter().map(|&c| c as f64 * w).collect(),
        hi: coords.iter().map(|&c| (c + 1) as f64 * w).collect(),
        closed_upper: coords.iter().map(|&c| c + 1 == n).collect(),
    })
}

pub fn center_of(bin: BinId, dim: usize) -> Result<Vec<f64>, PartitionError> {
    Ok(cell_of(bin, dim)?.center())
}

/// Per-bin statistics, indexed by arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub visits: u64,
    pub arm_counts: Vec<u64>,
    /// Row-major `K × M` reward sums.
    pub reward_sums: Vec<f64>,
    /// Sorted ascending.
    pub active_arms: Vec<usize>,
}

impl BinStats {
    pub fn fresh(arms: usize, objectives: usize) -> Self {
        Self {
            visits: 0,
            arm_counts: vec![0; arms],
            reward_sums: vec![0.0; arms * objectives],
            active_arms: (0..arms).collect(),
        }
    }

    pub fn objectives(&self) -> usize {
        self.reward_sums.len() / self.arm_counts.len()
    }

    /// Empirical mean of `arm` (zeros before the first observation).
    pub fn mean(&self, arm: usize) -> Vec<f64> {
        let m = self.objectives();
        let n = self.arm_counts[arm];
        let sums = &self.reward_sums[arm * m..(arm + 1) * m];
        if n == 0 {
            vec![0.0; m]
        } else {
            sums.iter().map(|s| s / n as f64).collect()
        }
    }

    pub fn record(&mut self, arm: usize, reward: &[f64]) {
        let m = self.objectives();
        self.visits += 1;
        self.arm_counts[arm] += 1;
        for (s, r) in self.reward_sums[arm * m..(arm + 1) * m].iter_mut().zip(reward) {
            *s += r;
        }
    }

    pub fn is_active(&self, arm: usize) -> bool {
        self.active_arms.binary_search(&arm).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub stats: BinStats,
    pub is_leaf: bool,
}

/// Adaptive dyadic partition with statistics on every node.
#[derive(Debug, Clone)]
pub struct TreeState {
    dim: usize,
    arms: usize,
    objectives: usize,
    nodes: HashMap<BinId, Node>,
    leaves: BTreeSet<BinId>,
    max_depth: u32,
}

impl TreeState {
    pub fn new(dim: usize, arms: usize, objectives: usize) -> Result<Self, PartitionError> {
        if dim == 0 {
            return Err(PartitionError::ZeroDimension);
        }
        let mut nodes = HashMap::new();
        nodes.insert(
            BinId::ROOT,
            Node {
                stats: BinStats::fresh(arms, objectives),
                is_leaf: true,
            },
        );
        Ok(Self {
            dim,
            arms,
            objectives,
            nodes,
            leaves: BTreeSet::from([BinId::ROOT]),
            max_depth: (62 / dim) as u32,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branching(&self) -> usize {
        1 << self.dim
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn objectives(&self) -> usize {
        self.objectives
    }

    /// Deepest depth whose indices still fit.
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn leaves(&self) -> &BTreeSet<BinId> {
        &self.leaves
    }

    pub fn node(&self, bin: BinId) -> Option<&Node> {
        self.nodes.get(&bin)
    }

    pub fn stats(&self, bin: BinId) -> Option<&BinStats> {
        self.nodes.get(&bin).map(|n| &n.stats)
    }

    pub fn stats_mut(&mut self, bin: BinId) -> Option<&mut BinStats> {
        self.nodes.get_mut(&bin).map(|n| &mut n.stats)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&BinId, &Node)> {
        self.nodes.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf(&self, bin: BinId) -> bool {
        self.leaves.contains(&bin)
    }

    fn check_point(&self, x: &[f64]) -> Result<(), PartitionError> {
        if x.len() != self.dim {
            return Err(PartitionError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PartitionError::OutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    /// The leaf whose cell contains `x`.
    pub fn locate(&self, x: &[f64]) -> Result<BinId, PartitionError> {
        self.check_point(x)?;
        let mut bin = BinId::ROOT;
        loop {
            let node = &self.nodes[&bin];
            if node.is_leaf {
                return Ok(bin);
            }
            let depth = bin.depth + 1;
            let n = (1u64 << depth) as f64;
            let mut j = 0u64;
            for (a, &v) in x.iter().enumerate() {
                let c = ((v * n).floor() as u64).min((1u64 << depth) - 1);
                j |= (c & 1) << a;
            }
            bin = BinId::new(depth, (bin.index << self.dim) | j);
        }
    }

    /// Replaces leaf `bin` by its `Ψ` children; each child starts with a copy of the
    /// parent's statistics and active arms. The parent's statistics are frozen.
    pub fn split(&mut self, bin: BinId) -> Result<Vec<BinId>, PartitionError> {
        let node = self.nodes.get(&bin).ok_or(PartitionError::UnknownBin {
            depth: bin.depth,
            index: bin.index,
        })?;
        if !node.is_leaf {
            return Err(PartitionError::NotALeaf {
                depth: bin.depth,
                index: bin.index,
            });
        }
        if bin.depth >= self.max_depth {
            return Err(PartitionError::DepthOverflow {
                depth: bin.depth + 1,
                dim: self.dim,
            });
        }
        let inherited = node.stats.clone();
        let children = bin.children(self.dim);
        for &c in &children {
            self.nodes.insert(
                c,
                Node {
                    stats: inherited.clone(),
                    is_leaf: true,
                },
            );
            self.leaves.insert(c);
        }
        self.leaves.remove(&bin);
        if let Some(n) = self.nodes.get_mut(&bin) {
            n.is_leaf = false;
        }
        Ok(children)
    }

    /// Full structural audit; returns a description of every violated invariant.
    ///
    /// Checks that the leaves tile the cube exactly (volumes sum to one, no leaf
    /// has a leaf ancestor), that every internal node has all children, and that
    /// active sets are nested along every parent edge.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let deepest = self.leaves.iter().map(|b| b.depth).max().unwrap_or(0);
        // volumes in units of the deepest cell, exact in integers
        let mut volume: u128 = 0;
        let unit_bits = deepest as usize * self.dim;
        for leaf in &self.leaves {
            volume += 1u128 << (unit_bits - leaf.depth as usize * self.dim);
            let mut anc = leaf.parent(self.dim);
            while let Some(a) = anc {
                if self.leaves.contains(&a) {
                    problems.push(format!("leaf {leaf:?} has leaf ancestor {a:?}"));
                }
                anc = a.parent(self.dim);
            }
        }
        if volume != 1u128 << unit_bits {
            problems.push(format!("leaf volumes sum to {volume} / 2^{unit_bits}"));
        }
        for (id, node) in &self.nodes {
            if !node.is_leaf {
                for c in id.children(self.dim) {
                    if !self.nodes.contains_key(&c) {
                        problems.push(format!("internal node {id:?} lacks child {c:?}"));
                    }
                }
            }
            if node.stats.active_arms.is_empty() {
                problems.push(format!("node {id:?} has no active arms"));
            }
            if let Some(p) = id.parent(self.dim) {
                match self.nodes.get(&p) {
                    Some(pn) => {
                        if !node.stats.active_arms.iter().all(|a| pn.stats.is_active(*a)) {
                            problems.push(format!("active arms of {id:?} not within parent {p:?}"));
                        }
                    }
                    None => problems.push(format!("node {id:?} has no parent")),
                }
            }
        }
        problems
    }

    /// One JSON object per node, sorted by `(depth, index)`.
    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut ids: Vec<&BinId> = self.nodes.keys().collect();
        ids.sort();
        for id in ids {
            let n = &self.nodes[id];
            let line = serde_json::json!({
                "depth": id.depth,
                "index": id.index,
                "visits": n.stats.visits,
                "arm_counts": n.stats.arm_counts,
                "active_arms": n.stats.active_arms,
                "leaf": n.is_leaf,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
