//! Recovering `ω` (and `θ`) from tree cumulants.
//!
//! Where every covariance is nonzero, squared parameters come from second and
//! third order moments, signs from an edge sign assignment of the covariance
//! signs. Otherwise edges crossed only by vanishing covariances get `η = 0`,
//! and each remaining component is solved on its own. The result is then
//! checked against the parameter space and against the input cumulants.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::metrics::{covariance, sign_assignment, SignMatrix};
use crate::model::{omega_to_theta, psi, validate_omega, validate_theta, OmegaParams, ThetaParams, Violation};
use crate::scalar::Scalar;
use crate::semialgebraic::hyperdet_from_moments;
use crate::subset::LeafSet;
use crate::transforms::{probs_to_cumulants, MomentKind, MomentSet, ProbTable};
use crate::tree::{Edge, NodeId, TreeTopology};

/// A recovered parameter.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Param {
    Mean(NodeId),
    Eta { parent: NodeId, child: NodeId },
}

/// Two witness choices giving different values for the same square.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch<S> {
    pub param: Param,
    pub witness: Vec<usize>,
    pub value: S,
    pub alternative_witness: Vec<usize>,
    pub alternative: S,
}

/// Squared parameters on a trivalent tree, oriented away from `root`.
#[derive(Clone, Debug, PartialEq)]
pub struct Squares<S> {
    pub root: NodeId,
    /// `μ̄_h²` at inner nodes.
    pub mean_sq: Vec<Option<S>>,
    /// `η²` on the edge into each non-root node.
    pub eta_sq: Vec<Option<S>>,
    /// Leaves used for each parameter.
    pub witnesses: BTreeMap<Param, Vec<usize>>,
    pub mismatches: Vec<Mismatch<S>>,
}

fn pair<S: Scalar>(k: &MomentSet<S>, i: usize, j: usize) -> S {
    covariance(k, i, j)
}

fn triple<S: Scalar>(k: &MomentSet<S>, i: usize, j: usize, l: usize) -> S {
    k.get(LeafSet::from_labels([i, j, l])).clone()
}

fn det<S: Scalar>(k: &MomentSet<S>, i: usize, j: usize, l: usize) -> S {
    hyperdet_from_moments(&pair(k, i, j), &pair(k, i, l), &pair(k, j, l), &triple(k, i, j, l))
}

fn nonzero<S: Scalar>(x: S, what: impl FnOnce() -> String) -> Result<S> {
    if x.is_zero() {
        Err(Error::Degenerate(what()))
    } else {
        Ok(x)
    }
}

fn mean_sq_at<S: Scalar>(k: &MomentSet<S>, w: &[usize]) -> Result<S> {
    let (i, j, l) = (w[0], w[1], w[2]);
    let d = nonzero(det(k, i, j, l), || format!("Det of ({i},{j},{l}) vanishes"))?;
    let m = triple(k, i, j, l);
    Ok(m.clone() * m / d)
}

fn terminal_sq_at<S: Scalar>(k: &MomentSet<S>, w: &[usize]) -> Result<S> {
    let (i, j, l) = (w[0], w[1], w[2]);
    let c = nonzero(pair(k, j, l), || format!("covariance ({j},{l}) vanishes"))?;
    Ok(det(k, i, j, l) / (c.clone() * c))
}

fn inner_sq_at<S: Scalar>(k: &MomentSet<S>, w: &[usize]) -> Result<S> {
    let (i, j, kk, l) = (w[0], w[1], w[2], w[3]);
    let cij = nonzero(pair(k, i, j), || format!("covariance ({i},{j}) vanishes"))?;
    let dikl = nonzero(det(k, i, kk, l), || format!("Det of ({i},{kk},{l}) vanishes"))?;
    let cil = pair(k, i, l);
    Ok(cil.clone() * cil / (cij.clone() * cij) * det(k, i, j, kk) / dikl)
}

/// Leaf sets of the branches at `h`, one per neighbour, excluding `skip`.
fn branches(t: &TreeTopology, h: NodeId, skip: Option<NodeId>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> =
        t.neighbors(h).iter().filter(|&&x| Some(x) != skip).map(|&x| t.side_leaves(h, x).labels().collect()).collect();
    out.sort();
    out
}

/// Replaces, one at a time, a witness by the next leaf of its branch.
fn variants(base: &[usize], pools: &[&[usize]]) -> Vec<Vec<usize>> {
    pools
        .iter()
        .enumerate()
        .filter_map(|(slot, pool)| {
            let next = pool.iter().copied().find(|&x| x != base[slot])?;
            let mut w = base.to_vec();
            w[slot] = next;
            Some(w)
        })
        .take(3)
        .collect()
}

fn agrees<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    if S::EXACT {
        a == b
    } else {
        (a.to_f64() - b.to_f64()).abs() <= tol * (1.0 + a.to_f64().abs())
    }
}

fn first_inner(t: &TreeTopology) -> Option<NodeId> {
    match t.root() {
        Some(r) if !t.is_leaf(r) => Some(r),
        _ => t.inner_nodes().next(),
    }
}

/// Squared parameters on a trivalent tree whose covariances are all nonzero.
/// Each value uses the smallest admissible leaves; up to three other choices
/// are evaluated and any disagreement is recorded.
pub fn recover_squares<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, tol: f64) -> Result<Squares<S>> {
    if !t.is_trivalent() {
        let v = t.inner_nodes().find(|&v| t.degree(v) != 3).expect("non-trivalent node");
        return Err(Error::NotTrivalent(v, t.degree(v)));
    }
    let root = first_inner(t).ok_or_else(|| Error::Degenerate("tree has no inner node".into()))?;
    let hung = t.orient(root);
    let nc = t.node_count();
    let mut out = Squares {
        root,
        mean_sq: vec![None; nc],
        eta_sq: vec![None; nc],
        witnesses: BTreeMap::new(),
        mismatches: Vec::new(),
    };
    let mut settle =
        |param: Param, w: Vec<usize>, alts: Vec<Vec<usize>>, f: &dyn Fn(&[usize]) -> Result<S>| -> Result<S> {
            let value = f(&w)?;
            for a in alts {
                if let Ok(alt) = f(&a) {
                    if !agrees(&value, &alt, tol) {
                        out.mismatches.push(Mismatch {
                            param,
                            witness: w.clone(),
                            value: value.clone(),
                            alternative_witness: a,
                            alternative: alt,
                        });
                    }
                }
            }
            out.witnesses.insert(param, w);
            Ok(value)
        };
    let mut mean_sq = vec![None; nc];
    let mut eta_sq = vec![None; nc];
    for h in t.inner_nodes() {
        let b = branches(t, h, None);
        let w = vec![b[0][0], b[1][0], b[2][0]];
        let alts = variants(&w, &[&b[0], &b[1], &b[2]]);
        mean_sq[h.0] = Some(settle(Param::Mean(h), w, alts, &|w| mean_sq_at(k, w))?);
    }
    for (u, v) in hung.directed_edges() {
        let param = Param::Eta { parent: u, child: v };
        let ub = branches(t, u, Some(v));
        let value = if let Some(i) = t.label(v) {
            let w = vec![i, ub[0][0], ub[1][0]];
            let alts = variants(&w, &[&[i], &ub[0], &ub[1]]);
            settle(param, w, alts, &|w| terminal_sq_at(k, w))?
        } else {
            let vb = branches(t, v, Some(u));
            let w = vec![ub[0][0], ub[1][0], vb[0][0], vb[1][0]];
            let alts = vec![vec![w[1], w[0], w[2], w[3]], vec![w[0], w[1], w[3], w[2]], vec![w[1], w[0], w[3], w[2]]];
            settle(param, w, alts, &|w| inner_sq_at(k, w))?
        };
        eta_sq[v.0] = Some(value);
    }
    out.mean_sq = mean_sq;
    out.eta_sq = eta_sq;
    Ok(out)
}

fn signed_root<S: Scalar>(sq: &S, sign: i8, what: impl FnOnce() -> String) -> Result<S::Ext> {
    let r = sq.sqrt_ext().ok_or_else(|| Error::Degenerate(what()))?;
    Ok(if sign < 0 { -r } else { r })
}

fn covariance_signs<S: Scalar>(k: &MomentSet<S>) -> SignMatrix {
    let n = k.n();
    (1..=n).map(|i| (1..=n).map(|j| if i != j && pair(k, i, j).is_negative() { -1 } else { 1 }).collect()).collect()
}

/// Signs for [`Squares`]: `sgn η_e = s0(e)` and
/// `sgn μ̄_v = sgn(μ_ijk) s(v,i) s(v,j) s(v,k)`.
pub fn resolve_signs<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, sq: &Squares<S>) -> Result<OmegaParams<S::Ext>> {
    let signs = sign_assignment(t, &covariance_signs(k))?;
    let hung = t.orient(sq.root);
    let mut mean_bar: Vec<S::Ext> = t.nodes().map(|_| S::Ext::zero()).collect();
    for i in 1..=t.n_leaves() {
        mean_bar[i - 1] = k.mean_bar(i).to_ext();
    }
    for h in t.inner_nodes() {
        let w = &sq.witnesses[&Param::Mean(h)];
        let s: i8 = w.iter().map(|&x| signs.s(t, h, NodeId(x - 1))).product();
        let sign = triple(k, w[0], w[1], w[2]).sign_tol(0.0) * s;
        let m2 = sq.mean_sq[h.0].as_ref().expect("inner node");
        mean_bar[h.0] = signed_root(m2, sign, || format!("negative square for mean at {}", t.node_name(h)))?;
    }
    let mut eta: Vec<Option<S::Ext>> = vec![None; t.node_count()];
    for (u, v) in hung.directed_edges() {
        let e2 = sq.eta_sq[v.0].as_ref().expect("non-root node");
        let sign = signs.edge_sign(Edge::new(u, v));
        eta[v.0] =
            Some(signed_root(e2, sign, || format!("negative square for edge {}-{}", t.node_name(u), t.node_name(v)))?);
    }
    Ok(OmegaParams { root: sq.root, mean_bar, eta })
}

/// A connected part of the tree left after deleting isolated edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub nodes: Vec<NodeId>,
    pub leaves: LeafSet,
}

/// Edges crossed only by vanishing covariances, and what remains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KForest {
    pub isolated: Vec<Edge>,
    /// Components with at least one leaf, ordered by smallest leaf. A lone
    /// leaf is a component of its own.
    pub components: Vec<Component>,
    /// Inner nodes all of whose edges are isolated.
    pub isolated_nodes: Vec<NodeId>,
}

impl KForest {
    pub fn is_trivial(&self) -> bool {
        self.isolated.is_empty()
    }

    fn contains(&self, e: Edge) -> bool {
        self.isolated.binary_search(&e).is_ok()
    }
}

pub fn k_forest<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, tol: f64) -> Result<KForest> {
    let n = t.n_leaves();
    let mut used: BTreeMap<Edge, bool> = t.edges().into_iter().map(|e| (e, false)).collect();
    for i in 1..=n {
        for j in i + 1..=n {
            if pair(k, i, j).is_negligible(tol) {
                continue;
            }
            for (u, v) in t.path_edges(i, j)? {
                used.insert(Edge::new(u, v), true);
            }
        }
    }
    let isolated: Vec<Edge> = used.iter().filter(|(_, &u)| !u).map(|(&e, _)| e).collect();
    let mut comp = vec![usize::MAX; t.node_count()];
    let mut components = Vec::new();
    let mut isolated_nodes = Vec::new();
    for start in t.nodes() {
        if comp[start.0] != usize::MAX {
            continue;
        }
        let id = components.len() + isolated_nodes.len();
        let mut nodes = vec![start];
        comp[start.0] = id;
        let mut at = 0;
        while at < nodes.len() {
            let v = nodes[at];
            at += 1;
            for &w in t.neighbors(v) {
                if comp[w.0] == usize::MAX && used[&Edge::new(v, w)] {
                    comp[w.0] = id;
                    nodes.push(w);
                }
            }
        }
        nodes.sort();
        let leaves = LeafSet::from_labels(nodes.iter().filter_map(|&v| t.label(v)));
        if leaves.is_empty() {
            isolated_nodes.extend(nodes);
        } else {
            components.push(Component { nodes, leaves });
        }
    }
    components.sort_by_key(|c| c.leaves.min_label());
    Ok(KForest { isolated, components, isolated_nodes })
}

/// Which part of the recovery went wrong.
#[derive(Clone, Debug, PartialEq)]
pub enum Issue<S> {
    /// Witness choices disagree, which happens only off the model.
    Mismatch(Mismatch<S>),
    /// No real solution on this component (zero denominator, negative square).
    Degenerate { leaves: LeafSet, reason: String },
    /// Covariance signs admit no edge signs.
    InfeasibleSigns([usize; 3]),
    /// A leaf inside a component has a vanishing covariance with another leaf of it.
    Disconnected { pair: [usize; 2] },
}

#[derive(Clone, Copy, Debug)]
pub struct RecoverOptions {
    /// Float mode: zero tests and constraint slack.
    pub tol: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions { tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryResult<S: Scalar> {
    /// The rooted tree `omega` and `theta` refer to.
    pub tree: TreeTopology,
    pub omega: Option<OmegaParams<S::Ext>>,
    pub theta: Option<ThetaParams<S::Ext>>,
    /// `omega ∈ Ω_T`, `theta ∈ Θ_T`, and `ψ(omega)` equals the input.
    pub feasible: bool,
    pub violations: Vec<Violation<S::Ext>>,
    pub theta_violations: Vec<Violation<S::Ext>>,
    pub reproduces: bool,
    pub issues: Vec<Issue<S>>,
    pub forest: KForest,
    /// False when some parameters are not determined by the input.
    pub unique: bool,
}

/// The recovery pipeline on a joint table.
pub fn recover<S: Scalar>(t: &TreeTopology, p: &ProbTable<S>, opts: &RecoverOptions) -> Result<RecoveryResult<S>> {
    let k = probs_to_cumulants(t, p)?;
    recover_cumulants(t, &k, opts)
}

/// η on the edges of one component, keyed by edge, stored in one direction.
type DirEta<E> = BTreeMap<Edge, (NodeId, E)>;

pub fn recover_cumulants<S: Scalar>(
    t: &TreeTopology,
    k: &MomentSet<S>,
    opts: &RecoverOptions,
) -> Result<RecoveryResult<S>> {
    if k.kind() != MomentKind::Cumulant {
        return Err(Error::WrongMomentKind { expected: "cumulant", found: k.kind().name() });
    }
    if k.n() != t.n_leaves() {
        return Err(Error::Shape(format!("cumulants on {} leaves, tree has {}", k.n(), t.n_leaves())));
    }
    if let Some(v) = t.inner_nodes().find(|&v| t.degree(v) > 3) {
        return Err(Error::NotTrivalent(v, t.degree(v)));
    }
    let tol = if S::EXACT { 0.0 } else { opts.tol };
    let root = t.root().or_else(|| first_inner(t)).unwrap_or(NodeId(0));
    let tree = t.with_root(root)?;
    let forest = k_forest(&tree, k, tol)?;

    let mut mean_bar: Vec<S::Ext> = tree.nodes().map(|_| S::Ext::zero()).collect();
    for i in 1..=tree.n_leaves() {
        mean_bar[i - 1] = k.mean_bar(i).to_ext();
    }
    let mut dir: DirEta<S::Ext> = forest.isolated.iter().map(|&e| (e, (e.ends().0, S::Ext::zero()))).collect();
    let mut issues = Vec::new();
    let mut unique = forest.is_trivial();
    for c in &forest.components {
        let labels: Vec<usize> = c.leaves.labels().collect();
        if labels.len() < 2 {
            continue;
        }
        if let Some((i, j)) = labels
            .iter()
            .flat_map(|&i| labels.iter().map(move |&j| (i, j)))
            .find(|&(i, j)| i < j && pair(k, i, j).is_negligible(tol))
        {
            issues.push(Issue::Disconnected { pair: [i, j] });
            continue;
        }
        let solved = if labels.len() == 2 {
            unique = false;
            solve_pair(&tree, k, c, &mut mean_bar, &mut dir)
        } else {
            solve_component(&tree, k, &forest, c, tol, &mut mean_bar, &mut dir, &mut issues)
        };
        match solved {
            Ok(()) => {}
            Err(Error::InfeasibleSigns(a, b, d)) => issues.push(Issue::InfeasibleSigns([a, b, d])),
            Err(Error::Degenerate(reason)) => issues.push(Issue::Degenerate { leaves: c.leaves, reason }),
            Err(e) => return Err(e),
        }
    }

    let blocked = issues.iter().any(|i| !matches!(i, Issue::Mismatch(_)));
    let omega = if blocked { None } else { orient_omega(&tree, root, mean_bar, &dir) };
    let Some(mut omega) = omega else {
        if !blocked {
            issues.push(Issue::Degenerate {
                leaves: tree.leaf_set(),
                reason: "cannot re-root at a node of unit mean".into(),
            });
        }
        return Ok(RecoveryResult {
            tree,
            omega: None,
            theta: None,
            feasible: false,
            violations: Vec::new(),
            theta_violations: Vec::new(),
            reproduces: false,
            issues,
            forest,
            unique,
        });
    };
    canonicalize(&tree, &mut omega);
    let violations = validate_omega(&tree, &omega, tol)?;
    let theta = omega_to_theta(&tree, &omega)?;
    let theta_violations = validate_theta(&tree, &theta, tol)?;
    let reproduces = reproduces(&tree, &omega, k, tol)?;
    let feasible = violations.is_empty() && theta_violations.is_empty() && reproduces && issues.is_empty();
    Ok(RecoveryResult {
        tree,
        omega: Some(omega),
        theta: Some(theta),
        feasible,
        violations,
        theta_violations,
        reproduces,
        issues,
        forest,
        unique,
    })
}

fn reproduces<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S::Ext>, k: &MomentSet<S>, tol: f64) -> Result<bool> {
    let back = psi(t, om)?;
    Ok(back.values().iter().zip(k.values()).all(|(a, b)| (a.clone() - b.to_ext()).is_negligible(tol)))
}

/// A component with two leaves: a copy of one leaf carried along the path,
/// with all dependence put on the last edge.
fn solve_pair<S: Scalar>(
    t: &TreeTopology,
    k: &MomentSet<S>,
    c: &Component,
    mean_bar: &mut [S::Ext],
    dir: &mut DirEta<S::Ext>,
) -> Result<()> {
    let labels: Vec<usize> = c.leaves.labels().collect();
    let (i, j) = (labels[0], labels[1]);
    let path = t.path_nodes(t.leaf(i)?, t.leaf(j)?);
    let mi = k.mean_bar(i);
    let var = nonzero(S::one() - mi.clone() * &mi, || format!("leaf {i} is constant"))?;
    let last = S::from_int(4) * pair(k, i, j) / var;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !t.is_leaf(b) {
            mean_bar[b.0] = mi.to_ext();
        }
        let value = if t.is_leaf(b) { last.to_ext() } else { S::Ext::one() };
        dir.insert(Edge::new(a, b), (a, value));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve_component<S: Scalar>(
    t: &TreeTopology,
    k: &MomentSet<S>,
    forest: &KForest,
    c: &Component,
    tol: f64,
    mean_bar: &mut [S::Ext],
    dir: &mut DirEta<S::Ext>,
    issues: &mut Vec<Issue<S>>,
) -> Result<()> {
    let in_comp = |v: NodeId| c.nodes.binary_search(&v).is_ok();
    let nbrs = |v: NodeId| -> Vec<NodeId> {
        t.neighbors(v).iter().copied().filter(|&w| in_comp(w) && !forest.contains(Edge::new(v, w))).collect()
    };
    let labels: Vec<usize> = c.leaves.labels().collect();
    let n_l = labels.len();
    let kept: Vec<NodeId> = c.nodes.iter().copied().filter(|&v| t.is_leaf(v) || nbrs(v).len() == 3).collect();
    let mut new_id = BTreeMap::new();
    for &v in &kept {
        let id = match t.label(v) {
            Some(l) => labels.binary_search(&l).expect("component leaf"),
            None => n_l + new_id.len() - new_id.keys().filter(|x: &&NodeId| t.is_leaf(**x)).count(),
        };
        new_id.insert(v, id);
    }
    // Chains between kept nodes, with the degree-2 nodes between them.
    let mut chains: Vec<(NodeId, Vec<NodeId>, NodeId)> = Vec::new();
    for &a in &kept {
        for w in nbrs(a) {
            let (mut prev, mut cur) = (a, w);
            let mut inner = Vec::new();
            while !new_id.contains_key(&cur) {
                inner.push(cur);
                let next = nbrs(cur).into_iter().find(|&x| x != prev).expect("degree two");
                prev = cur;
                cur = next;
            }
            if a < cur {
                chains.push((a, inner, cur));
            }
        }
    }
    let edges: Vec<(usize, usize)> = chains.iter().map(|(a, _, b)| (new_id[a], new_id[b])).collect();
    let local_root = kept.iter().copied().find(|&v| !t.is_leaf(v)).map(|v| new_id[&v]);
    let small = TreeTopology::from_edges(n_l, kept.len(), &edges, local_root)?;

    let mut values = vec![S::zero(); 1 << n_l];
    for (mask, slot) in values.iter_mut().enumerate() {
        let set = LeafSet::from_labels(LeafSet(mask as u32).labels().map(|x| labels[x - 1]));
        *slot = k.get(set).clone();
    }
    let means = labels.iter().map(|&l| k.mean(l).clone()).collect();
    let ks = MomentSet::new(n_l, MomentKind::Cumulant, values, means)?;

    let sq = recover_squares(&small, &ks, tol)?;
    let old_of: BTreeMap<usize, NodeId> = new_id.iter().map(|(&v, &id)| (id, v)).collect();
    let relabel = |w: &[usize]| w.iter().map(|&x| labels[x - 1]).collect::<Vec<_>>();
    let lift = |p: Param| match p {
        Param::Mean(h) => Param::Mean(old_of[&h.0]),
        Param::Eta { parent, child } => Param::Eta { parent: old_of[&parent.0], child: old_of[&child.0] },
    };
    for m in &sq.mismatches {
        issues.push(Issue::Mismatch(Mismatch {
            param: lift(m.param),
            witness: relabel(&m.witness),
            value: m.value.clone(),
            alternative_witness: relabel(&m.alternative_witness),
            alternative: m.alternative.clone(),
        }));
    }
    let om = resolve_signs(&small, &ks, &sq).map_err(|e| match e {
        Error::InfeasibleSigns(a, b, d) => Error::InfeasibleSigns(labels[a - 1], labels[b - 1], labels[d - 1]),
        e => e,
    })?;
    let hung = small.orient(om.root);
    for (&id, &v) in &old_of {
        if !t.is_leaf(v) {
            mean_bar[v.0] = om.mean_bar[id].clone();
        }
    }
    for (a, inner, b) in chains {
        let (ia, ib) = (new_id[&a], new_id[&b]);
        let (parent, child, mut walk) = if hung.parent[ib] == Some(NodeId(ia)) {
            (a, b, inner)
        } else {
            let mut r = inner;
            r.reverse();
            (b, a, r)
        };
        let eta = om.eta_into(NodeId(new_id[&child])).clone();
        walk.insert(0, parent);
        walk.push(child);
        let copy = om.mean_bar[new_id[&parent]].clone();
        for w in walk.windows(2) {
            let (x, y) = (w[0], w[1]);
            if y == child {
                dir.insert(Edge::new(x, y), (x, eta.clone()));
            } else {
                mean_bar[y.0] = copy.clone();
                dir.insert(Edge::new(x, y), (x, S::Ext::one()));
            }
        }
    }
    Ok(())
}

/// Puts every edge coefficient into the orientation from `root`, using
/// `η_{v,u} = η_{u,v} (1-μ̄_u²)/(1-μ̄_v²)`.
fn orient_omega<E: Scalar>(
    t: &TreeTopology,
    root: NodeId,
    mean_bar: Vec<E>,
    dir: &DirEta<E>,
) -> Option<OmegaParams<E>> {
    let hung = t.orient(root);
    let var = |v: NodeId| E::one() - mean_bar[v.0].clone() * &mean_bar[v.0];
    let mut eta = vec![None; t.node_count()];
    for (u, v) in hung.directed_edges() {
        let (from, x) = &dir[&Edge::new(u, v)];
        let value = if *from == u || x.is_zero() {
            x.clone()
        } else {
            let vu = var(u);
            if vu.is_zero() {
                return None;
            }
            x.clone() * var(v) / vu
        };
        eta[v.0] = Some(value);
    }
    Some(OmegaParams { root, mean_bar, eta })
}

/// The same point with every edge coefficient oriented away from `root`;
/// `None` when a reversed edge ends at a node with `μ̄² = 1`.
pub fn reroot_omega<E: Scalar>(t: &TreeTopology, om: &OmegaParams<E>, root: NodeId) -> Option<OmegaParams<E>> {
    let hung = t.orient(om.root);
    let dir: DirEta<E> = hung.directed_edges().map(|(u, v)| (Edge::new(u, v), (u, om.eta_into(v).clone()))).collect();
    orient_omega(t, root, om.mean_bar.clone(), &dir)
}

/// Inner-node counts up to which [`canonicalize`] searches all flips.
const EXHAUSTIVE_FLIPS: usize = 16;

/// Negating `μ̄_h` together with every `η` at `h` leaves `ψ` unchanged. Picks,
/// over all such flips of inner nodes, the point with fewest negative `η`,
/// then fewest negative `μ̄`, then the smallest sign pattern (means in node
/// order, then edges). The choice depends only on the flip class when there
/// are at most 16 inner nodes; larger trees use a tree recursion that breaks
/// the remaining ties by not flipping.
pub fn canonicalize<E: Scalar>(t: &TreeTopology, om: &mut OmegaParams<E>) {
    let hung = t.orient(om.root);
    let inner: Vec<NodeId> = t.inner_nodes().collect();
    let flip = if inner.len() <= EXHAUSTIVE_FLIPS { exhaustive_flips(t, om, &inner) } else { recursive_flips(t, om) };
    for v in t.nodes() {
        if !flip[v.0] {
            continue;
        }
        om.mean_bar[v.0] = -om.mean_bar[v.0].clone();
        if let Some(e) = om.eta[v.0].as_mut() {
            *e = -e.clone();
        }
        for ch in hung.children(t, v) {
            let e = om.eta[ch.0].as_mut().expect("child edge");
            *e = -e.clone();
        }
    }
}

fn is_neg<E: Scalar>(x: &E) -> bool {
    x.is_negative() && !x.is_zero()
}

fn exhaustive_flips<E: Scalar>(t: &TreeTopology, om: &OmegaParams<E>, inner: &[NodeId]) -> Vec<bool> {
    let hung = t.orient(om.root);
    let edges: Vec<(NodeId, NodeId)> = hung.directed_edges().collect();
    let mean_neg: Vec<bool> = inner.iter().map(|h| is_neg(&om.mean_bar[h.0])).collect();
    let mean_zero: Vec<bool> = inner.iter().map(|h| om.mean_bar[h.0].is_zero()).collect();
    let eta_neg: Vec<(bool, bool)> =
        edges.iter().map(|&(_, v)| (is_neg(om.eta_into(v)), om.eta_into(v).is_zero())).collect();
    let mut slot = vec![usize::MAX; t.node_count()];
    for (k, h) in inner.iter().enumerate() {
        slot[h.0] = k;
    }
    let flipped = |mask: u32, v: NodeId| slot[v.0] != usize::MAX && mask >> slot[v.0] & 1 == 1;
    let key = |mask: u32| {
        let means: Vec<bool> =
            (0..inner.len()).map(|k| !mean_zero[k] && (mean_neg[k] != (mask >> k & 1 == 1))).collect();
        let etas: Vec<bool> = edges
            .iter()
            .zip(&eta_neg)
            .map(|(&(u, v), &(neg, zero))| !zero && (neg != (flipped(mask, u) != flipped(mask, v))))
            .collect();
        let counts = (etas.iter().filter(|&&b| b).count(), means.iter().filter(|&&b| b).count());
        (counts, means, etas)
    };
    let best = (0..1u32 << inner.len()).min_by_key(|&m| key(m)).unwrap_or(0);
    t.nodes().map(|v| flipped(best, v)).collect()
}

fn recursive_flips<E: Scalar>(t: &TreeTopology, om: &OmegaParams<E>) -> Vec<bool> {
    let hung = t.orient(om.root);
    let neg = |x: &E, f: bool| !x.is_zero() && (is_neg(x) != f);
    // cost[v][f]: best (negative η, negative μ̄) below v when v is flipped iff f.
    let mut cost = vec![[(0usize, 0usize); 2]; t.node_count()];
    for &v in hung.preorder.iter().rev() {
        for f in [false, true] {
            if f && t.is_leaf(v) {
                cost[v.0][1] = (usize::MAX / 4, 0);
                continue;
            }
            let mut c = (0, usize::from(!t.is_leaf(v) && neg(&om.mean_bar[v.0], f)));
            for ch in hung.children(t, v) {
                let e = om.eta_into(ch);
                let best = [false, true]
                    .into_iter()
                    .map(|g| {
                        let (a, b) = cost[ch.0][usize::from(g)];
                        (a + usize::from(neg(e, f != g)), b)
                    })
                    .min()
                    .expect("two options");
                c = (c.0 + best.0, c.1 + best.1);
            }
            cost[v.0][usize::from(f)] = c;
        }
    }
    let mut flip = vec![false; t.node_count()];
    flip[om.root.0] = !t.is_leaf(om.root) && cost[om.root.0][1] < cost[om.root.0][0];
    for &v in &hung.preorder {
        for ch in hung.children(t, v) {
            let e = om.eta_into(ch);
            let score = |g: bool| {
                let (a, b) = cost[ch.0][usize::from(g)];
                (a + usize::from(neg(e, flip[v.0] != g)), b)
            };
            flip[ch.0] = !t.is_leaf(ch) && score(true) < score(false);
        }
    }
    flip
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, theta_to_omega};
    use crate::scalar::Rational;
    use crate::tree::parse_newick;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn tripod_moments() -> MomentSet<f64> {
        let entries = [
            (LeafSet::from_labels([1, 2]), 0.0625),
            (LeafSet::from_labels([1, 3]), 0.0625),
            (LeafSet::from_labels([2, 3]), 0.0625),
            (LeafSet::from_labels([1, 2, 3]), 0.0526),
        ];
        MomentSet::from_entries(3, MomentKind::Cumulant, vec![0.15; 3], entries).unwrap()
    }

    #[test]
    fn tripod_squares_and_violation() {
        let t = parse_newick("(1,2,3);").unwrap();
        let k = tripod_moments();
        let sq = recover_squares(&t, &k, 1e-12).unwrap();
        let h = NodeId(3);
        assert!((sq.mean_sq[h.0].unwrap() - 0.0526f64.powi(2) / 0.0037433225).abs() < 1e-12);
        let r = recover_cumulants(&t, &k, &RecoverOptions::default()).unwrap();
        assert!(!r.feasible && r.reproduces);
        let om = r.omega.unwrap();
        assert!((om.mean_bar[h.0] - 0.8597).abs() < 1e-4);
        assert!((om.eta_into(NodeId(0)) - 0.9789).abs() < 1e-4);
        let v = &r.violations[0];
        assert!(v.lhs > 1.820 && v.lhs < 1.825 && (v.rhs - 1.7).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_on_one_leaf() {
        let t = parse_newick("(1,2,3);").unwrap();
        let mut k = tripod_moments();
        let vals: Vec<f64> = k
            .values()
            .iter()
            .enumerate()
            .map(|(m, &v)| if LeafSet(m as u32).contains(1) && m.count_ones() == 2 { -v } else { v })
            .collect();
        k = MomentSet::new(3, MomentKind::Cumulant, vals, vec![0.15; 3]).unwrap();
        let r = recover_cumulants(&t, &k, &RecoverOptions::default()).unwrap();
        let om = r.omega.unwrap();
        let signs: Vec<bool> = (0..3).map(|i| om.eta_into(NodeId(i)).is_sign_negative()).collect();
        assert_eq!(signs, [true, false, false]);
    }

    #[test]
    fn round_trip_with_zero_edge() {
        let t = parse_newick("((1,2),(3,4));").unwrap();
        let root = t.root().unwrap();
        let mut cond: Vec<Option<(Rational, Rational)>> = vec![None; t.node_count()];
        let params = [(1, 5, 4, 5), (1, 10, 3, 5), (3, 10, 7, 10), (1, 4, 9, 10), (1, 2, 1, 2)];
        let mut it = params.iter();
        for v in t.nodes().filter(|&v| v != root) {
            let &(a, b, c, d) = it.next().unwrap();
            cond[v.0] = Some((q(a, b), q(c, d)));
        }
        let th = ThetaParams { root, root_prob: q(2, 5), cond };
        let p = forward(&t, &th).unwrap();
        let r = recover(&t, &p, &RecoverOptions::default()).unwrap();
        assert_eq!(r.forest.isolated.len(), 1);
        assert_eq!(r.forest.components.len(), 2);
        assert!(r.feasible && r.reproduces && !r.unique);
        let _ = theta_to_omega(&t, &th).unwrap();
    }

    #[test]
    fn product_distribution_is_all_isolated() {
        let t = parse_newick("((1,2),(3,4));").unwrap();
        let k = MomentSet::from_entries(4, MomentKind::Cumulant, vec![q(1, 3); 4], []).unwrap();
        let f = k_forest(&t, &k, 0.0).unwrap();
        assert_eq!(f.isolated.len(), t.edges().len());
        let r = recover_cumulants(&t, &k, &RecoverOptions::default()).unwrap();
        assert!(r.feasible);
    }
}
