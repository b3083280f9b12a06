//! Leaf-labelled trees, Newick input and the combinatorics built on them.
//!
//! Node ids are dense: leaf `i` has id `i - 1`, inner nodes follow. Edges are
//! unordered; direction comes from an optional root.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::subset::{LeafSet, MAX_LEAVES};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Unordered edge, stored with the smaller id first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Edge(NodeId, NodeId);

impl Edge {
    pub fn new(u: NodeId, v: NodeId) -> Self {
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }

    pub fn ends(self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    pub fn has(self, v: NodeId) -> bool {
        self.0 == v || self.1 == v
    }

    pub fn other(self, v: NodeId) -> NodeId {
        if self.0 == v {
            self.1
        } else {
            self.0
        }
    }
}

/// The bipartition of the leaves obtained by deleting an edge. `a` holds leaf 1.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Split {
    pub edge: Edge,
    pub a: LeafSet,
    pub b: LeafSet,
}

impl Split {
    pub fn new(edge: Edge, x: LeafSet, y: LeafSet) -> Self {
        if x.contains(1) {
            Split { edge, a: x, b: y }
        } else {
            Split { edge, a: y, b: x }
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.a.len() == 1 || self.b.len() == 1
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.a, self.b)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TreeTopology {
    n: usize,
    adj: Vec<Vec<NodeId>>,
    root: Option<NodeId>,
}

/// Parent pointers and a preorder for a tree hung from a root.
#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
    pub preorder: Vec<NodeId>,
}

impl Rooted {
    pub fn children<'a>(&'a self, t: &'a TreeTopology, v: NodeId) -> impl Iterator<Item = NodeId> + 'a {
        let p = self.parent[v.0];
        t.neighbors(v).iter().copied().filter(move |&w| Some(w) != p)
    }

    /// Edges directed away from the root, in preorder of their heads.
    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.preorder.iter().filter_map(|&v| self.parent[v.0].map(|u| (u, v)))
    }
}

/// The minimal subtree spanning a leaf subset. Node ids are those of the
/// parent tree; degree-2 nodes are kept.
#[derive(Clone, Debug)]
pub struct RestrictedTree {
    pub leaves: LeafSet,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    degree: Vec<usize>,
    n: usize,
}

impl RestrictedTree {
    pub fn degree(&self, v: NodeId) -> usize {
        self.degree.get(v.0).copied().unwrap_or(0)
    }

    /// Nodes of the restriction that are inner nodes of the parent tree.
    pub fn inner_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied().filter(move |v| v.0 >= self.n)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.degree(v) > 0 || self.nodes.contains(&v)
    }
}

impl TreeTopology {
    /// Builds a tree on nodes `0..node_count`, with nodes `0..n` the leaves
    /// `1..=n`.
    pub fn from_edges(n: usize, node_count: usize, edges: &[(usize, usize)], root: Option<usize>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTree("at least two leaves are required".into()));
        }
        if n > MAX_LEAVES {
            return Err(Error::TooManyLeaves(n, MAX_LEAVES));
        }
        if node_count < n {
            return Err(Error::InvalidTree("fewer nodes than leaves".into()));
        }
        if edges.len() + 1 != node_count {
            return Err(Error::InvalidTree(format!(
                "{} nodes need {} edges, got {}",
                node_count,
                node_count - 1,
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u >= node_count || v >= node_count || u == v {
                return Err(Error::InvalidTree(format!("bad edge ({u}, {v})")));
            }
            if adj[u].contains(&NodeId(v)) {
                return Err(Error::InvalidTree(format!("edge ({u}, {v}) listed twice")));
            }
            adj[u].push(NodeId(v));
            adj[v].push(NodeId(u));
        }
        for a in &mut adj {
            a.sort();
        }
        for (v, a) in adj.iter().enumerate() {
            if v < n && a.len() != 1 {
                return Err(Error::InvalidTree(format!("leaf {} has degree {}", v + 1, a.len())));
            }
            if v >= n && a.len() < 2 {
                return Err(Error::InvalidTree(format!("inner node h{} has degree {}", v - n + 1, a.len())));
            }
        }
        if let Some(r) = root {
            if r >= node_count {
                return Err(Error::UnknownNode(NodeId(r)));
            }
        }
        let t = TreeTopology { n, adj, root: root.map(NodeId) };
        // |E| = |V| - 1 plus connectivity gives acyclicity.
        let seen = t.bfs_order(NodeId(0));
        if seen.len() != node_count {
            return Err(Error::InvalidTree("graph is not connected".into()));
        }
        Ok(t)
    }

    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn leaf_set(&self) -> LeafSet {
        LeafSet::full(self.n)
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn with_root(&self, root: NodeId) -> Result<Self> {
        if root.0 >= self.node_count() {
            return Err(Error::UnknownNode(root));
        }
        Ok(TreeTopology { root: Some(root), ..self.clone() })
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v.0]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v.0].len()
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        v.0 < self.n
    }

    pub fn label(&self, v: NodeId) -> Option<usize> {
        self.is_leaf(v).then_some(v.0 + 1)
    }

    pub fn leaf(&self, label: usize) -> Result<NodeId> {
        if label == 0 || label > self.n {
            Err(Error::UnknownLeaf(label))
        } else {
            Ok(NodeId(label - 1))
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn inner_nodes(&self) -> impl Iterator<Item = NodeId> {
        (self.n..self.node_count()).map(NodeId)
    }

    /// `1`, `2`, … for leaves and `h1`, `h2`, … for inner nodes.
    pub fn node_name(&self, v: NodeId) -> String {
        match self.label(v) {
            Some(l) => l.to_string(),
            None => format!("h{}", v.0 - self.n + 1),
        }
    }

    pub fn parse_node(&self, name: &str) -> Result<NodeId> {
        let name = name.trim();
        let bad = || Error::InvalidTree(format!("unknown node name '{name}'"));
        if let Some(rest) = name.strip_prefix('h') {
            let k: usize = rest.parse().map_err(|_| bad())?;
            if k == 0 || self.n + k > self.node_count() {
                return Err(bad());
            }
            Ok(NodeId(self.n + k - 1))
        } else {
            let l: usize = name.parse().map_err(|_| bad())?;
            self.leaf(l)
        }
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .nodes()
            .flat_map(|u| self.adj[u.0].iter().filter(move |&&v| u < v).map(move |&v| Edge::new(u, v)))
            .collect();
        out.sort();
        out
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u.0 < self.node_count() && self.adj[u.0].contains(&v)
    }

    pub fn is_inner_edge(&self, e: Edge) -> bool {
        let (u, v) = e.ends();
        !self.is_leaf(u) && !self.is_leaf(v)
    }

    pub fn is_trivalent(&self) -> bool {
        self.inner_nodes().all(|v| self.degree(v) == 3)
    }

    fn bfs_order(&self, start: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.node_count()];
        let mut order = Vec::with_capacity(self.node_count());
        let mut queue = VecDeque::from([start]);
        seen[start.0] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.adj[v.0] {
                if !seen[w.0] {
                    seen[w.0] = true;
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Hangs the tree from `root`.
    pub fn orient(&self, root: NodeId) -> Rooted {
        let mut parent = vec![None; self.node_count()];
        let mut preorder = Vec::with_capacity(self.node_count());
        let mut stack = vec![root];
        let mut seen = vec![false; self.node_count()];
        seen[root.0] = true;
        while let Some(v) = stack.pop() {
            preorder.push(v);
            for &w in self.adj[v.0].iter().rev() {
                if !seen[w.0] {
                    seen[w.0] = true;
                    parent[w.0] = Some(v);
                    stack.push(w);
                }
            }
        }
        Rooted { root, parent, preorder }
    }

    /// Orientation from the stored root.
    pub fn rooted(&self) -> Result<Rooted> {
        self.root.map(|r| self.orient(r)).ok_or(Error::Unrooted)
    }

    /// Leaves in the component of `v` after deleting the edge `(u, v)`.
    pub fn side_leaves(&self, u: NodeId, v: NodeId) -> LeafSet {
        let mut acc = LeafSet::EMPTY;
        let mut stack = vec![(u, v)];
        while let Some((from, x)) = stack.pop() {
            if let Some(l) = self.label(x) {
                acc = acc.with(l);
            }
            for &y in &self.adj[x.0] {
                if y != from {
                    stack.push((x, y));
                }
            }
        }
        acc
    }

    pub fn split_of(&self, e: Edge) -> Result<Split> {
        let (u, v) = e.ends();
        if !self.has_edge(u, v) {
            return Err(Error::NotAnEdge(u, v));
        }
        let b = self.side_leaves(u, v);
        Ok(Split::new(e, self.leaf_set().difference(b), b))
    }

    /// One split per edge, in edge order.
    pub fn edge_splits(&self) -> Vec<Split> {
        self.edges().into_iter().map(|e| self.split_of(e).expect("own edge")).collect()
    }

    /// Nodes on the path from `u` to `v`, endpoints included.
    pub fn path_nodes(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let hung = self.orient(v);
        let mut out = vec![u];
        let mut x = u;
        while let Some(p) = hung.parent[x.0] {
            out.push(p);
            x = p;
        }
        out
    }

    /// Directed edges of the path from leaf `i` to leaf `j`.
    pub fn path_edges(&self, i: usize, j: usize) -> Result<Vec<(NodeId, NodeId)>> {
        let (u, v) = (self.leaf(i)?, self.leaf(j)?);
        if i == j {
            return Err(Error::RepeatedLeaf);
        }
        let nodes = self.path_nodes(u, v);
        Ok(nodes.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// The unique node common to the three pairwise paths between `i`, `j`, `k`.
    pub fn separating_node(&self, i: usize, j: usize, k: usize) -> Result<NodeId> {
        let (a, b, c) = (self.leaf(i)?, self.leaf(j)?, self.leaf(k)?);
        if i == j || i == k || j == k {
            return Err(Error::RepeatedLeaf);
        }
        // The median is the node of the a–b path closest to c.
        let dist = self.distances_from(c);
        let best = self.path_nodes(a, b).into_iter().min_by_key(|v| dist[v.0]).expect("path is nonempty");
        Ok(best)
    }

    fn distances_from(&self, s: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[s.0] = 0;
        for v in self.bfs_order(s) {
            for &w in &self.adj[v.0] {
                if dist[w.0] == usize::MAX {
                    dist[w.0] = dist[v.0] + 1;
                }
            }
        }
        dist
    }

    /// The minimal subtree containing the leaves in `set`.
    pub fn restrict(&self, set: LeafSet) -> Result<RestrictedTree> {
        let Some(anchor) = set.min_label() else {
            return Err(Error::InvalidTree("restriction to the empty set".into()));
        };
        if let Some(bad) = set.labels().find(|&l| l > self.n) {
            return Err(Error::UnknownLeaf(bad));
        }
        let hung = self.orient(self.leaf(anchor)?);
        let mut hits = vec![false; self.node_count()];
        for &v in hung.preorder.iter().rev() {
            if self.label(v).is_some_and(|l| set.contains(l)) {
                hits[v.0] = true;
            }
            if hits[v.0] {
                if let Some(p) = hung.parent[v.0] {
                    hits[p.0] = true;
                }
            }
        }
        let nodes: Vec<NodeId> = self.nodes().filter(|v| hits[v.0]).collect();
        let mut degree = vec![0; self.node_count()];
        let mut edges = Vec::new();
        for &v in &nodes {
            if v.0 == hung.root.0 {
                continue;
            }
            let p = hung.parent[v.0].expect("non-anchor node has a parent");
            edges.push(Edge::new(p, v));
            degree[p.0] += 1;
            degree[v.0] += 1;
        }
        edges.sort();
        Ok(RestrictedTree { leaves: set, nodes, edges, degree, n: self.n })
    }

    /// Node of the restriction to `set` closest to the root.
    pub fn root_of_restriction(&self, set: LeafSet) -> Result<NodeId> {
        let root = self.root.ok_or(Error::Unrooted)?;
        let rt = self.restrict(set)?;
        let dist = self.distances_from(root);
        Ok(rt.nodes.iter().copied().min_by_key(|v| dist[v.0]).expect("restriction is nonempty"))
    }

    /// Identifies the endpoints of an inner edge. The surviving node keeps the
    /// smaller id and later inner ids shift down by one.
    pub fn contract_edge(&self, e: Edge) -> Result<TreeTopology> {
        let (u, v) = e.ends();
        if !self.has_edge(u, v) {
            return Err(Error::NotAnEdge(u, v));
        }
        if !self.is_inner_edge(e) {
            return Err(Error::PendantEdge(u, v));
        }
        let relabel = |x: NodeId| -> usize {
            let x = if x == v { u } else { x };
            if x.0 > v.0 {
                x.0 - 1
            } else {
                x.0
            }
        };
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter(|&f| f != e)
            .map(|f| {
                let (a, b) = f.ends();
                (relabel(a), relabel(b))
            })
            .collect();
        let root = self.root.map(relabel);
        TreeTopology::from_edges(self.n, self.node_count() - 1, &edges, root)
    }

    /// Smallest leaf label on the `v` side of the edge `(u, v)`.
    fn branch_key(&self, u: NodeId, v: NodeId) -> usize {
        self.side_leaves(u, v).min_label().unwrap_or(usize::MAX)
    }

    /// Replaces every inner node of degree `d > 3` by a chain of `d - 2`
    /// trivalent nodes. Branches are attached in order of their smallest leaf
    /// label. Returns the tree and, for every node of it, the node it came from.
    pub fn resolve_multifurcations(&self) -> (TreeTopology, Vec<NodeId>) {
        let mut origin: Vec<NodeId> = self.nodes().collect();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut next = self.node_count();
        for e in self.edges() {
            let (a, b) = e.ends();
            if self.degree(a) <= 3 && self.degree(b) <= 3 {
                edges.push((a.0, b.0));
            }
        }
        // Edges touching a high-degree node are re-wired from that node's side.
        let mut attach: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); self.node_count()];
        for v in self.inner_nodes() {
            let d = self.degree(v);
            if d <= 3 {
                continue;
            }
            let mut nbrs: Vec<NodeId> = self.neighbors(v).to_vec();
            nbrs.sort_by_key(|&w| self.branch_key(v, w));
            let mut hub = v.0;
            for (k, &w) in nbrs.iter().enumerate() {
                let spot = if k >= 2 && k + 2 <= d {
                    let fresh = next;
                    next += 1;
                    origin.push(v);
                    edges.push((hub, fresh));
                    hub = fresh;
                    hub
                } else {
                    hub
                };
                attach[v.0].push((w, spot));
            }
        }
        // `attach[v]` maps each neighbour w of v to the chain node it hangs from.
        let spot_of = |v: NodeId, w: NodeId| -> usize {
            attach[v.0].iter().find(|(x, _)| *x == w).map(|&(_, s)| s).unwrap_or(v.0)
        };
        for e in self.edges() {
            let (a, b) = e.ends();
            if self.degree(a) <= 3 && self.degree(b) <= 3 {
                continue;
            }
            edges.push((spot_of(a, b), spot_of(b, a)));
        }
        let t = TreeTopology::from_edges(self.n, next, &edges, self.root.map(|r| r.0))
            .expect("refinement of a valid tree is valid");
        (t, origin)
    }

    /// Removes inner nodes of degree two by joining their neighbours. Returns
    /// the tree and the old id of every surviving node. A suppressed root is
    /// replaced by its smallest-id inner neighbour, if any.
    pub fn suppress_degree_two(&self) -> (TreeTopology, Vec<NodeId>) {
        let keep: Vec<bool> = self.nodes().map(|v| self.is_leaf(v) || self.degree(v) != 2).collect();
        let mut new_id = vec![usize::MAX; self.node_count()];
        let mut old: Vec<NodeId> = Vec::new();
        for v in self.nodes() {
            if keep[v.0] {
                new_id[v.0] = old.len();
                old.push(v);
            }
        }
        if old.len() == self.node_count() {
            return (self.clone(), old);
        }
        let mut edges = Vec::new();
        for &v in &old {
            for &w in self.neighbors(v) {
                // Walk through suppressed nodes to the next kept one.
                let (mut prev, mut cur) = (v, w);
                while !keep[cur.0] {
                    let nxt = self.neighbors(cur).iter().copied().find(|&x| x != prev).expect("degree two");
                    prev = cur;
                    cur = nxt;
                }
                if v < cur {
                    edges.push((new_id[v.0], new_id[cur.0]));
                }
            }
        }
        edges.sort();
        edges.dedup();
        let root = self.root.and_then(|r| {
            if keep[r.0] {
                Some(new_id[r.0])
            } else {
                let dist = self.distances_from(r);
                old.iter().filter(|v| !self.is_leaf(**v)).min_by_key(|v| (dist[v.0], v.0)).map(|v| new_id[v.0])
            }
        });
        let t = TreeTopology::from_edges(self.n, old.len(), &edges, root).expect("suppression keeps a valid tree");
        (t, old)
    }

    /// Canonical Newick string: hung from the root (or from the neighbour of
    /// leaf 1), children sorted by smallest leaf label.
    pub fn to_newick(&self) -> String {
        let top = match self.root {
            Some(r) if !self.is_leaf(r) => r,
            Some(r) => self.neighbors(r)[0],
            None => self.neighbors(NodeId(0))[0],
        };
        let mut out = String::new();
        if self.is_leaf(top) {
            // Two-leaf tree.
            out.push_str("(1,2);");
            return out;
        }
        self.write_newick(top, None, &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, v: NodeId, from: Option<NodeId>, out: &mut String) {
        if let Some(l) = self.label(v) {
            out.push_str(&l.to_string());
            return;
        }
        let mut kids: Vec<NodeId> = self.neighbors(v).iter().copied().filter(|&w| Some(w) != from).collect();
        kids.sort_by_key(|&w| self.branch_key(v, w));
        out.push('(');
        for (k, w) in kids.into_iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            self.write_newick(w, Some(v), out);
        }
        out.push(')');
    }
}

impl fmt::Display for TreeTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_newick())
    }
}

enum Raw {
    Leaf(usize),
    Inner(Vec<Raw>),
}

struct NewickParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> NewickParser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::NewickSyntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len()
            && !b"(),:;".contains(&self.s[self.pos])
            && !self.s[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn branch_length(&mut self) -> Result<()> {
        if self.peek() == Some(b':') {
            self.pos += 1;
            let len = self.token();
            if len.parse::<f64>().is_err() {
                return Err(self.err("bad branch length"));
            }
        }
        Ok(())
    }

    fn subtree(&mut self, depth: usize) -> Result<Raw> {
        if depth > 10_000 {
            return Err(self.err("nesting too deep"));
        }
        let node = if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut kids = vec![self.subtree(depth + 1)?];
            loop {
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        kids.push(self.subtree(depth + 1)?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("unbalanced parentheses: expected ',' or ')'")),
                }
            }
            let at = self.pos;
            if !self.token().is_empty() {
                self.pos = at;
                return Err(self.err("inner nodes must not carry labels"));
            }
            Raw::Inner(kids)
        } else {
            let at = self.pos;
            let tok = self.token();
            if tok.is_empty() {
                return Err(self.err("expected a leaf label"));
            }
            match tok.parse::<usize>() {
                Ok(l) if l >= 1 => Raw::Leaf(l),
                _ => {
                    self.pos = at;
                    return Err(self.err("leaf labels must be positive integers"));
                }
            }
        };
        self.branch_length()?;
        Ok(node)
    }
}

/// Parses a Newick string with integer leaf labels `1..=n`.
///
/// A bifurcating top level is suppressed: its two subtrees are joined by a
/// single edge and the tree is rooted at the first inner endpoint, so
/// `((1,2),(3,4));` is the quartet rooted at the cherry of 1 and 2. Branch
/// lengths are ignored.
pub fn parse_newick(text: &str) -> Result<TreeTopology> {
    let mut p = NewickParser { s: text.as_bytes(), pos: 0 };
    let raw = p.subtree(0)?;
    if p.peek() != Some(b';') {
        let msg = if p.peek() == Some(b')') { "unbalanced parentheses" } else { "expected ';'" };
        return Err(p.err(msg));
    }
    p.pos += 1;
    if p.peek().is_some() {
        return Err(p.err("trailing characters after ';'"));
    }

    let mut labels = Vec::new();
    collect_labels(&raw, &mut labels);
    let n = labels.len();
    let mut seen = vec![false; n + 1];
    for &l in &labels {
        if l > n {
            let missing = (1..=n).find(|&k| !labels.contains(&k)).unwrap_or(n);
            return Err(Error::MissingLabel { n, missing });
        }
        if seen[l] {
            return Err(Error::DuplicateLabel(l));
        }
        seen[l] = true;
    }
    if n < 2 {
        return Err(Error::InvalidTree("at least two leaves are required".into()));
    }

    let mut edges = Vec::new();
    let mut next = n;
    let top = build(&raw, &mut next, &mut edges);
    let mut root = Some(top);
    if let Raw::Inner(kids) = &raw {
        if kids.len() == 2 {
            // Drop the degree-2 top node and join its two children.
            let ends: Vec<usize> = edges.iter().filter(|e| e.0 == top).map(|e| e.1).collect();
            edges.retain(|e| e.0 != top);
            edges.push((ends[0], ends[1]));
            root = ends.iter().copied().find(|&x| x >= n);
            // Close the id gap left by the removed node.
            for e in &mut edges {
                if e.0 > top {
                    e.0 -= 1;
                }
                if e.1 > top {
                    e.1 -= 1;
                }
            }
            root = root.map(|r| if r > top { r - 1 } else { r });
            next -= 1;
        } else if kids.len() == 1 {
            return Err(Error::InvalidTree("the outermost node has a single child".into()));
        }
    }
    TreeTopology::from_edges(n, next, &edges, root)
}

fn collect_labels(raw: &Raw, out: &mut Vec<usize>) {
    match raw {
        Raw::Leaf(l) => out.push(*l),
        Raw::Inner(kids) => kids.iter().for_each(|k| collect_labels(k, out)),
    }
}

fn build(raw: &Raw, next: &mut usize, edges: &mut Vec<(usize, usize)>) -> usize {
    match raw {
        Raw::Leaf(l) => l - 1,
        Raw::Inner(kids) => {
            let id = *next;
            *next += 1;
            for k in kids {
                let c = build(k, next, edges);
                edges.push((id, c));
            }
            id
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartet() -> TreeTopology {
        parse_newick("((1,2),(3,4));").unwrap()
    }

    #[test]
    fn tripod_and_quartet_shapes() {
        let t = parse_newick("(1,2,3);").unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.root(), Some(NodeId(3)));
        assert!(t.is_trivalent());
        let q = quartet();
        assert_eq!(q.node_count(), 6);
        assert_eq!(q.edges().len(), 5);
        assert!(q.is_trivalent());
        assert_eq!(q.root(), Some(NodeId(4)));
        assert_eq!(q.neighbors(NodeId(4)), &[NodeId(0), NodeId(1), NodeId(5)]);
    }

    #[test]
    fn newick_errors() {
        assert!(matches!(parse_newick("(1,2,(3,4);"), Err(Error::NewickSyntax { .. })));
        assert!(matches!(parse_newick("(1,2,2);"), Err(Error::DuplicateLabel(2))));
        assert!(matches!(parse_newick("(1,2,4);"), Err(Error::MissingLabel { n: 3, missing: 3 })));
        assert!(matches!(parse_newick("(1,2,3)x;"), Err(Error::NewickSyntax { .. })));
        assert!(matches!(parse_newick("(1,2,3)"), Err(Error::NewickSyntax { .. })));
        assert!(parse_newick("(1:0.5,2:1e-3,3);").is_ok());
    }

    #[test]
    fn splits() {
        let t = parse_newick("(1,2,3);").unwrap();
        let s: Vec<String> = t.edge_splits().iter().map(|s| format!("{s}")).collect();
        assert_eq!(s, ["1|23", "13|2", "12|3"]);
        let q = quartet();
        assert!(q
            .edge_splits()
            .iter()
            .any(|s| s.a == LeafSet::from_labels([1, 2]) && s.b == LeafSet::from_labels([3, 4])));
        let p = parse_newick("(1,2);").unwrap();
        assert_eq!(p.edge_splits().len(), 1);
        assert_eq!(p.root(), None);
    }

    #[test]
    fn restrictions_and_paths() {
        let q = quartet();
        let (a, b) = (NodeId(4), NodeId(5));
        let r = q.restrict(LeafSet::from_labels([1, 3])).unwrap();
        assert_eq!(r.nodes, [NodeId(0), NodeId(2), a, b]);
        assert_eq!(r.degree(a), 2);
        let r = q.restrict(LeafSet::from_labels([1, 2])).unwrap();
        assert_eq!(r.edges.len(), 2);
        assert_eq!(q.path_edges(1, 3).unwrap(), [(NodeId(0), a), (a, b), (b, NodeId(2))]);
        assert!(q.path_edges(2, 2).is_err());
        assert_eq!(q.separating_node(1, 2, 3).unwrap(), a);
        assert_eq!(q.separating_node(1, 3, 4).unwrap(), b);
        assert_eq!(q.root_of_restriction(LeafSet::from_labels([3, 4])).unwrap(), b);
        assert_eq!(q.root_of_restriction(LeafSet::from_labels([1, 4])).unwrap(), a);
    }

    #[test]
    fn contraction() {
        let q = quartet();
        let star = q.contract_edge(Edge::new(NodeId(4), NodeId(5))).unwrap();
        assert_eq!(star.node_count(), 5);
        assert_eq!(star.degree(NodeId(4)), 4);
        assert!(!star.is_trivalent());
        assert!(matches!(star.contract_edge(Edge::new(NodeId(0), NodeId(4))), Err(Error::PendantEdge(..))));
        let cat = parse_newick("(1,2,((3,4),(5,6)));").unwrap();
        let inner: Vec<Edge> = cat.edges().into_iter().filter(|&e| cat.is_inner_edge(e)).collect();
        let c = cat.contract_edge(inner[0]).unwrap();
        assert_eq!(c.inner_nodes().filter(|&v| c.degree(v) == 4).count(), 1);
    }

    #[test]
    fn refinement_of_a_star() {
        let star = parse_newick("(1,2,3,4,5);").unwrap();
        let (r, origin) = star.resolve_multifurcations();
        assert!(r.is_trivalent());
        assert_eq!(r.node_count(), 8);
        assert!(origin[5..].iter().all(|&o| o == NodeId(5)));
        assert_eq!(r.to_newick(), "(1,2,(3,(4,5)));");
    }

    #[test]
    fn suppression() {
        let t = TreeTopology::from_edges(3, 5, &[(0, 3), (3, 4), (4, 1), (4, 2)], Some(3)).unwrap();
        let (s, old) = t.suppress_degree_two();
        assert_eq!(s.node_count(), 4);
        assert_eq!(old, [NodeId(0), NodeId(1), NodeId(2), NodeId(4)]);
        assert_eq!(s.root(), Some(NodeId(3)));
    }

    #[test]
    fn newick_round_trip() {
        for s in ["(1,2,3);", "((1,2),(3,4));", "(1,(2,(3,4)),(5,6));", "((1,3),2,(4,5));"] {
            let t = parse_newick(s).unwrap();
            let u = parse_newick(&t.to_newick()).unwrap();
            assert_eq!(t.edge_splits().iter().map(|x| (x.a, x.b)).collect::<Vec<_>>().len(), u.edge_splits().len());
            let mut a: Vec<_> = t.edge_splits().iter().map(|x| x.a).collect();
            let mut b: Vec<_> = u.edge_splits().iter().map(|x| x.a).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }
}
