//! Tree partitions of a leaf subset and their Möbius function.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::subset::LeafSet;
use crate::tree::RestrictedTree;

/// A set partition whose blocks are sorted by smallest element.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TreePartition {
    blocks: Vec<LeafSet>,
}

impl TreePartition {
    pub fn new(mut blocks: Vec<LeafSet>) -> Self {
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b.min_label());
        TreePartition { blocks }
    }

    pub fn blocks(&self) -> &[LeafSet] {
        &self.blocks
    }

    pub fn ground(&self) -> LeafSet {
        self.blocks.iter().fold(LeafSet::EMPTY, |acc, &b| acc.union(b))
    }

    pub fn has_singleton(&self) -> bool {
        self.blocks.iter().any(|b| b.len() == 1)
    }

    fn refines(&self, other: &TreePartition) -> bool {
        self.blocks.iter().all(|b| other.blocks.iter().any(|c| b.is_subset(*c)))
    }
}

impl fmt::Display for TreePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Refinement order: every block of `p` lies inside a block of `q`.
pub fn leq(p: &TreePartition, q: &TreePartition) -> Result<bool> {
    if p.ground() != q.ground() {
        return Err(Error::GroundSetMismatch);
    }
    Ok(p.refines(q))
}

/// All tree partitions of a restricted tree, listed so that finer partitions
/// come first: index 0 is the bottom (all singletons), the last index is the
/// top (a single block).
#[derive(Clone, Debug)]
pub struct PartitionPoset {
    ground: LeafSet,
    elements: Vec<TreePartition>,
    /// `order[p][q]` iff `p ≤ q`.
    order: Vec<Vec<bool>>,
}

impl PartitionPoset {
    pub fn ground(&self) -> LeafSet {
        self.ground
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[TreePartition] {
        &self.elements
    }

    pub fn bottom(&self) -> usize {
        0
    }

    pub fn top(&self) -> usize {
        self.elements.len() - 1
    }

    pub fn index_of(&self, p: &TreePartition) -> Result<usize> {
        if p.ground() != self.ground {
            return Err(Error::GroundSetMismatch);
        }
        self.elements.binary_search_by(|e| cmp_key(e).cmp(&cmp_key(p))).map_err(|_| Error::NotInPoset)
    }

    pub fn leq_idx(&self, p: usize, q: usize) -> bool {
        self.order[p][q]
    }

    /// `m(p, q)` from `m(p,p) = 1` and `m(p,q) = -Σ_{p ≤ d < q} m(p,d)`.
    pub fn mobius(&self, p: &TreePartition, q: &TreePartition) -> Result<i64> {
        let (pi, qi) = (self.index_of(p)?, self.index_of(q)?);
        Ok(self.mobius_row(pi)[qi])
    }

    /// `m(p, ·)` over the whole poset, zero where `p` is not below.
    pub fn mobius_row(&self, p: usize) -> Vec<i64> {
        let mut row = vec![0i64; self.len()];
        row[p] = 1;
        for q in p + 1..self.len() {
            if !self.order[p][q] {
                continue;
            }
            row[q] = -(p..q).filter(|&d| self.order[p][d] && self.order[d][q]).map(|d| row[d]).sum::<i64>();
        }
        row
    }

    /// `m(·, 1̂)` for every element, from the dual recursion
    /// `m(p, 1̂) = -Σ_{p < d ≤ 1̂} m(d, 1̂)`.
    pub fn mobius_to_top(&self) -> Vec<i64> {
        let top = self.top();
        let mut col = vec![0i64; self.len()];
        col[top] = 1;
        for p in (0..top).rev() {
            col[p] = -(p + 1..=top).filter(|&d| self.order[p][d]).map(|d| col[d]).sum::<i64>();
        }
        col
    }
}

fn cmp_key(p: &TreePartition) -> (core::cmp::Reverse<usize>, &[LeafSet]) {
    (core::cmp::Reverse(p.blocks.len()), &p.blocks)
}

/// Enumerates the partitions cut out by all edge subsets of the restriction.
pub fn tree_partitions(rt: &RestrictedTree) -> PartitionPoset {
    let local = |v| rt.nodes.binary_search(&v).expect("edge endpoint in restriction");
    let edges: Vec<(usize, usize)> = rt
        .edges
        .iter()
        .map(|e| {
            let (u, v) = e.ends();
            (local(u), local(v))
        })
        .collect();
    let leaf_nodes: Vec<(usize, usize)> = rt.leaves.labels().map(|l| (l, local(crate::tree::NodeId(l - 1)))).collect();

    let mut found = BTreeSet::new();
    let m = edges.len();
    assert!(m < 32, "restriction too large for exhaustive enumeration");
    for cut in 0u32..(1u32 << m) {
        let mut uf = UnionFind::new(rt.nodes.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if cut >> k & 1 == 0 {
                uf.union(a, b);
            }
        }
        let mut blocks: Vec<(usize, LeafSet)> = Vec::new();
        for &(l, x) in &leaf_nodes {
            let r = uf.find(x);
            match blocks.iter_mut().find(|(root, _)| *root == r) {
                Some((_, b)) => *b = b.with(l),
                None => blocks.push((r, LeafSet::singleton(l))),
            }
        }
        found.insert(TreePartition::new(blocks.into_iter().map(|(_, b)| b).collect()));
    }
    let mut elements: Vec<TreePartition> = found.into_iter().collect();
    elements.sort_by(|a, b| cmp_key(a).cmp(&cmp_key(b)));
    let order = elements.iter().map(|p| elements.iter().map(|q| p.refines(q)).collect()).collect();
    PartitionPoset { ground: rt.leaves, elements, order }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
