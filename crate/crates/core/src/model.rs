//! Parameter spaces of the binary hidden Markov model on a rooted tree, the
//! forward map to the joint table, and the monomial map to tree cumulants.
//!
//! `ThetaParams` holds a root distribution and one 2×2 transition per
//! non-root node. `OmegaParams` holds a signed mean `μ̄_v = 1 - 2λ_v` per node
//! and a regression coefficient `η = θ_{1|1} - θ_{1|0}` per edge.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::subset::LeafSet;
use crate::transforms::{MomentKind, MomentSet, ProbTable};
use crate::tree::{NodeId, Rooted, TreeTopology};

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParams<S> {
    pub root: NodeId,
    /// `P(Y_root = 1)`.
    pub root_prob: S,
    /// `(θ_{1|0}, θ_{1|1})` per node, `None` at the root.
    pub cond: Vec<Option<(S, S)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaParams<S> {
    pub root: NodeId,
    /// `μ̄_v` per node.
    pub mean_bar: Vec<S>,
    /// `η` on the edge from the parent of `v` into `v`, `None` at the root.
    pub eta: Vec<Option<S>>,
}

impl<S: Scalar> OmegaParams<S> {
    /// `η` on the directed edge `parent → child`.
    pub fn eta_into(&self, child: NodeId) -> &S {
        self.eta[child.0].as_ref().expect("non-root node")
    }

    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> OmegaParams<T> {
        OmegaParams {
            root: self.root,
            mean_bar: self.mean_bar.iter().map(&f).collect(),
            eta: self.eta.iter().map(|e| e.as_ref().map(&f)).collect(),
        }
    }
}

impl<S: Scalar> ThetaParams<S> {
    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> ThetaParams<T> {
        ThetaParams {
            root: self.root,
            root_prob: f(&self.root_prob),
            cond: self.cond.iter().map(|c| c.as_ref().map(|(a, b)| (f(a), f(b)))).collect(),
        }
    }
}

/// Which inequality of the parameter space is meant.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Constraint {
    /// `0 ≤ θ_root ≤ 1`; `upper` selects the side.
    RootProb { upper: bool },
    /// `0 ≤ θ_{1|given} ≤ 1` at `node`.
    Conditional { node: NodeId, given: u8, upper: bool },
    /// `-1 ≤ μ̄_root ≤ 1`.
    RootMean { upper: bool },
    /// One of the four edge inequalities on `parent → child`.
    Edge { parent: NodeId, child: NodeId, side: EdgeSide },
}

/// The edge inequalities, each read as `lhs ≤ rhs`:
///
/// * `MinusLower`: `-(1+μ̄_v) ≤ (1-μ̄_u)η`
/// * `MinusUpper`: `(1-μ̄_u)η ≤ 1-μ̄_v`
/// * `PlusLower`: `-(1-μ̄_v) ≤ (1+μ̄_u)η`
/// * `PlusUpper`: `(1+μ̄_u)η ≤ 1+μ̄_v`
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EdgeSide {
    MinusLower,
    MinusUpper,
    PlusLower,
    PlusUpper,
}

impl Constraint {
    pub fn describe(&self, t: &TreeTopology) -> String {
        match *self {
            Constraint::RootProb { upper } => format!("theta_root {}", if upper { "<= 1" } else { ">= 0" }),
            Constraint::Conditional { node, given, upper } => {
                format!("theta[{}]_1|{} {}", t.node_name(node), given, if upper { "<= 1" } else { ">= 0" })
            }
            Constraint::RootMean { upper } => format!("mubar_root {}", if upper { "<= 1" } else { ">= -1" }),
            Constraint::Edge { parent, child, side } => {
                let (u, v) = (t.node_name(parent), t.node_name(child));
                match side {
                    EdgeSide::MinusLower => format!("-(1+mubar_{v}) <= (1-mubar_{u})*eta_{u},{v}"),
                    EdgeSide::MinusUpper => format!("(1-mubar_{u})*eta_{u},{v} <= 1-mubar_{v}"),
                    EdgeSide::PlusLower => format!("-(1-mubar_{v}) <= (1+mubar_{u})*eta_{u},{v}"),
                    EdgeSide::PlusUpper => format!("(1+mubar_{u})*eta_{u},{v} <= 1+mubar_{v}"),
                }
            }
        }
    }
}

/// A failed inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation<S> {
    pub constraint: Constraint,
    pub lhs: S,
    pub rhs: S,
}

impl<S: Scalar> fmt::Display for Violation<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {} > {}", self.constraint, self.lhs, self.rhs)
    }
}

fn check_le<S: Scalar>(out: &mut Vec<Violation<S>>, constraint: Constraint, lhs: S, rhs: S, tol: f64) {
    if !lhs.le_tol(&rhs, tol) {
        out.push(Violation { constraint, lhs, rhs });
    }
}

fn rooted_for(t: &TreeTopology, root: NodeId) -> Result<Rooted> {
    if root.0 >= t.node_count() {
        return Err(Error::UnknownNode(root));
    }
    if let Some(r) = t.root() {
        if r != root {
            return Err(Error::Shape(format!(
                "parameters rooted at {} but tree at {}",
                t.node_name(root),
                t.node_name(r)
            )));
        }
    }
    Ok(t.orient(root))
}

fn check_theta_shape<S>(t: &TreeTopology, th: &ThetaParams<S>) -> Result<Rooted> {
    let hung = rooted_for(t, th.root)?;
    if th.cond.len() != t.node_count() {
        return Err(Error::Shape(format!("{} conditional slots for {} nodes", th.cond.len(), t.node_count())));
    }
    for v in t.nodes() {
        if (v == th.root) != th.cond[v.0].is_none() {
            return Err(Error::Shape(format!("conditional table at node {} misplaced", t.node_name(v))));
        }
    }
    Ok(hung)
}

fn check_omega_shape<S>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<Rooted> {
    let hung = rooted_for(t, om.root)?;
    if om.mean_bar.len() != t.node_count() || om.eta.len() != t.node_count() {
        return Err(Error::Shape(format!("omega parameters sized for {} nodes", om.mean_bar.len())));
    }
    for v in t.nodes() {
        if (v == om.root) != om.eta[v.0].is_none() {
            return Err(Error::Shape(format!("edge coefficient into {} misplaced", t.node_name(v))));
        }
    }
    Ok(hung)
}

/// Lists every entry of `θ` outside `[0, 1]`; empty means `θ ∈ Θ_T`.
pub fn validate_theta<S: Scalar>(t: &TreeTopology, th: &ThetaParams<S>, tol: f64) -> Result<Vec<Violation<S>>> {
    check_theta_shape(t, th)?;
    let mut out = Vec::new();
    let mut unit = |c_lo: Constraint, c_hi: Constraint, x: &S| {
        check_le(&mut out, c_lo, S::zero(), x.clone(), tol);
        check_le(&mut out, c_hi, x.clone(), S::one(), tol);
    };
    unit(Constraint::RootProb { upper: false }, Constraint::RootProb { upper: true }, &th.root_prob);
    for v in t.nodes() {
        if let Some((p0, p1)) = &th.cond[v.0] {
            for (given, x) in [(0u8, p0), (1u8, p1)] {
                unit(
                    Constraint::Conditional { node: v, given, upper: false },
                    Constraint::Conditional { node: v, given, upper: true },
                    x,
                );
            }
        }
    }
    Ok(out)
}

/// The joint law of the leaves: hidden states are summed out by pruning,
/// once per leaf assignment.
pub fn forward<S: Scalar>(t: &TreeTopology, th: &ThetaParams<S>) -> Result<ProbTable<S>> {
    let hung = check_theta_shape(t, th)?;
    let n = t.n_leaves();
    let trans: Vec<Option<[[S; 2]; 2]>> = th
        .cond
        .iter()
        .map(|c| {
            c.as_ref().map(|(p0, p1)| {
                // trans[a][b] = P(child = b | parent = a)
                [[S::one() - p0, p0.clone()], [S::one() - p1, p1.clone()]]
            })
        })
        .collect();
    let root_dist = [S::one() - &th.root_prob, th.root_prob.clone()];
    let mut p = Vec::with_capacity(1 << n);
    let mut partial: Vec<[S; 2]> = vec![[S::one(), S::one()]; t.node_count()];
    for cell in 0..(1u32 << n) {
        let cell = LeafSet(cell);
        for &v in hung.preorder.iter().rev() {
            let mut acc = match t.label(v) {
                Some(l) if cell.contains(l) => [S::zero(), S::one()],
                Some(_) => [S::one(), S::zero()],
                None => [S::one(), S::one()],
            };
            for c in hung.children(t, v) {
                let m = trans[c.0].as_ref().expect("child has a transition");
                for (a, slot) in acc.iter_mut().enumerate() {
                    let s = m[a][0].clone() * &partial[c.0][0] + m[a][1].clone() * &partial[c.0][1];
                    *slot *= s;
                }
            }
            partial[v.0] = acc;
        }
        let r = &partial[hung.root.0];
        p.push(root_dist[0].clone() * &r[0] + root_dist[1].clone() * &r[1]);
    }
    ProbTable::new(n, p)
}

/// `η = θ_{1|1} - θ_{1|0}`; node means propagate down from the root.
pub fn theta_to_omega<S: Scalar>(t: &TreeTopology, th: &ThetaParams<S>) -> Result<OmegaParams<S>> {
    let hung = check_theta_shape(t, th)?;
    let mut lambda = vec![S::zero(); t.node_count()];
    let mut eta = vec![None; t.node_count()];
    for &v in &hung.preorder {
        match (&th.cond[v.0], hung.parent[v.0]) {
            (Some((p0, p1)), Some(u)) => {
                lambda[v.0] = lambda[u.0].clone() * p1 + (S::one() - &lambda[u.0]) * p0;
                eta[v.0] = Some(p1.clone() - p0);
            }
            _ => lambda[v.0] = th.root_prob.clone(),
        }
    }
    let two = S::from_int(2);
    let mean_bar = lambda.iter().map(|l| S::one() - two.clone() * l).collect();
    Ok(OmegaParams { root: th.root, mean_bar, eta })
}

/// Inverse of [`theta_to_omega`]. Never fails on values outside `Ω_T`; the
/// resulting `θ` then leaves `[0, 1]`, which [`validate_theta`] reports.
pub fn omega_to_theta<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<ThetaParams<S>> {
    let hung = check_omega_shape(t, om)?;
    let lambda: Vec<S> = om.mean_bar.iter().map(|m| (S::one() - m) * S::half()).collect();
    let mut cond = vec![None; t.node_count()];
    for (u, v) in hung.directed_edges() {
        let e = om.eta_into(v);
        let lo = lambda[v.0].clone() - lambda[u.0].clone() * e;
        let hi = lambda[v.0].clone() + (S::one() - &lambda[u.0]) * e;
        cond[v.0] = Some((lo, hi));
    }
    Ok(ThetaParams { root: om.root, root_prob: lambda[om.root.0].clone(), cond })
}

/// Lists every failed inequality of `Ω_T`; empty means membership.
pub fn validate_omega<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>, tol: f64) -> Result<Vec<Violation<S>>> {
    let hung = check_omega_shape(t, om)?;
    let mut out = Vec::new();
    let one = S::one();
    let mr = &om.mean_bar[om.root.0];
    check_le(&mut out, Constraint::RootMean { upper: false }, -one.clone(), mr.clone(), tol);
    check_le(&mut out, Constraint::RootMean { upper: true }, mr.clone(), one.clone(), tol);
    for (u, v) in hung.directed_edges() {
        let (mu, mv) = (&om.mean_bar[u.0], &om.mean_bar[v.0]);
        let e = om.eta_into(v);
        let minus = (one.clone() - mu) * e;
        let plus = (one.clone() + mu) * e;
        let edge = |side| Constraint::Edge { parent: u, child: v, side };
        check_le(&mut out, edge(EdgeSide::MinusLower), -(one.clone() + mv), minus.clone(), tol);
        check_le(&mut out, edge(EdgeSide::MinusUpper), minus, one.clone() - mv, tol);
        check_le(&mut out, edge(EdgeSide::PlusLower), -(one.clone() - mv), plus.clone(), tol);
        check_le(&mut out, edge(EdgeSide::PlusUpper), plus, one.clone() + mv, tol);
    }
    Ok(out)
}

/// Tree cumulants as monomials in `ω`:
/// `κ_I = ¼(1-μ̄_{r(I)}²) Π_{v inner in T(I)} μ̄_v^{deg(v)-2} Π_{e∈E(I)} η_e`.
///
/// Inner nodes of degree above three are refused; see [`psi_refined`].
pub fn psi<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<MomentSet<S>> {
    let hung = check_omega_shape(t, om)?;
    if let Some(v) = t.inner_nodes().find(|&v| t.degree(v) > 3) {
        return Err(Error::NotTrivalent(v, t.degree(v)));
    }
    let n = t.n_leaves();
    let mut depth = vec![0usize; t.node_count()];
    for &v in &hung.preorder {
        if let Some(u) = hung.parent[v.0] {
            depth[v.0] = depth[u.0] + 1;
        }
    }
    let quarter = S::quarter();
    let mut values = vec![S::zero(); 1 << n];
    for mask in 0..(1u32 << n) {
        let set = LeafSet(mask);
        if set.len() < 2 {
            continue;
        }
        let rt = t.restrict(set)?;
        let top = *rt.nodes.iter().min_by_key(|v| depth[v.0]).expect("nonempty");
        let mb = &om.mean_bar[top.0];
        let mut k = quarter.clone() * (S::one() - mb.clone() * mb);
        for v in rt.inner_nodes() {
            for _ in 2..rt.degree(v) {
                k *= &om.mean_bar[v.0];
            }
        }
        for e in &rt.edges {
            let (a, b) = e.ends();
            let child = if hung.parent[a.0] == Some(b) { a } else { b };
            k *= om.eta_into(child);
        }
        values[mask as usize] = k;
    }
    let means = (0..n).map(|i| (S::one() - &om.mean_bar[i]) * S::half()).collect();
    MomentSet::new(n, MomentKind::Cumulant, values, means)
}

/// A trivalent refinement of `t` with `ω` carried over: every new node copies
/// the mean of the node it splits off from and new edges get `η = 1`.
#[derive(Clone, Debug)]
pub struct Refined<S> {
    pub tree: TreeTopology,
    /// Original node of every node of `tree`.
    pub origin: Vec<NodeId>,
    pub omega: OmegaParams<S>,
}

pub fn refine_omega<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<Refined<S>> {
    check_omega_shape(t, om)?;
    let (tree, origin) = t.resolve_multifurcations();
    let tree = tree.with_root(om.root)?;
    let hung = tree.orient(om.root);
    let mean_bar = origin.iter().map(|o| om.mean_bar[o.0].clone()).collect();
    let mut eta = vec![None; tree.node_count()];
    for (u, v) in hung.directed_edges() {
        eta[v.0] = Some(if origin[u.0] == origin[v.0] { S::one() } else { om.eta_into(origin[v.0]).clone() });
    }
    Ok(Refined { tree, origin, omega: OmegaParams { root: om.root, mean_bar, eta } })
}

/// [`psi`] on the canonical trivalent refinement.
pub fn psi_refined<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<(Refined<S>, MomentSet<S>)> {
    let r = refine_omega(t, om)?;
    let k = psi(&r.tree, &r.omega)?;
    Ok((r, k))
}

/// Uniform draw from the grid `{0, 1/grid, …, 1}^{2|E|+1}` inside `Θ_T`.
pub fn sample_theta<S: Scalar, R: Rng + ?Sized>(
    t: &TreeTopology,
    root: NodeId,
    grid: u32,
    rng: &mut R,
) -> ThetaParams<S> {
    let mut draw = || S::from_ratio(rng.gen_range(0..=grid) as i64, grid as i64);
    let root_prob = draw();
    let cond = t.nodes().map(|v| (v != root).then(|| (draw(), draw()))).collect();
    ThetaParams { root, root_prob, cond }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::transforms::probs_to_cumulants;
    use crate::tree::parse_newick;
    use rand::SeedableRng;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn halves(t: &TreeTopology) -> ThetaParams<Rational> {
        let root = t.root().unwrap();
        ThetaParams {
            root,
            root_prob: q(1, 2),
            cond: t.nodes().map(|v| (v != root).then(|| (q(1, 2), q(1, 2)))).collect(),
        }
    }

    #[test]
    fn identity_transitions() {
        let t = parse_newick("(1,2,3);").unwrap();
        let mut th = halves(&t);
        for v in 0..3 {
            th.cond[v] = Some((q(0, 1), q(1, 1)));
        }
        let p = forward(&t, &th).unwrap();
        assert_eq!(p.get(LeafSet::EMPTY), &q(1, 2));
        assert_eq!(p.get(LeafSet::full(3)), &q(1, 2));
        let om = theta_to_omega(&t, &th).unwrap();
        assert!(om.eta.iter().flatten().all(|e| *e == q(1, 1)));
        assert!(om.mean_bar.iter().all(|m| *m == q(0, 1)));
    }

    #[test]
    fn theta_bounds() {
        let t = parse_newick("(1,2,3);").unwrap();
        let mut th = halves(&t);
        assert!(validate_theta(&t, &th, 0.0).unwrap().is_empty());
        th.cond[0] = Some((q(-3, 10), q(1, 1)));
        let v = validate_theta(&t, &th, 0.0).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Constraint::Conditional { node: NodeId(0), given: 0, upper: false });
        assert_eq!(v[0].rhs, q(-3, 10));
    }

    #[test]
    fn omega_round_trip_and_bounds() {
        let t = parse_newick("((1,2),(3,4));").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let th: ThetaParams<Rational> = sample_theta(&t, t.root().unwrap(), 1000, &mut rng);
            let om = theta_to_omega(&t, &th).unwrap();
            assert!(validate_omega(&t, &om, 0.0).unwrap().is_empty());
            // θ_{1|0} = θ_{1|1} when λ of the parent is 0 or 1 is not recoverable.
            let back = omega_to_theta(&t, &om).unwrap();
            assert_eq!(theta_to_omega(&t, &back).unwrap(), om);
        }
    }

    #[test]
    fn tripod_monomials_match_forward_map() {
        let t = parse_newick("(1,2,3);").unwrap();
        let th = ThetaParams {
            root: NodeId(3),
            root_prob: q(3, 10),
            cond: vec![Some((q(1, 10), q(9, 10))), Some((q(2, 10), q(7, 10))), Some((q(1, 4), q(1, 2))), None],
        };
        let k = probs_to_cumulants(&t, &forward(&t, &th).unwrap()).unwrap();
        let om = theta_to_omega(&t, &th).unwrap();
        assert_eq!(psi(&t, &om).unwrap(), k);
        let h = &om.mean_bar[3];
        let e: Vec<_> = (0..3).map(|i| om.eta_into(NodeId(i)).clone()).collect();
        let var = q(1, 4) * (q(1, 1) - h * h);
        assert_eq!(k.at(&[1, 2]), &(var.clone() * &e[0] * &e[1]));
        assert_eq!(k.at(&[1, 2, 3]), &(var * h * &e[0] * &e[1] * &e[2]));
    }

    #[test]
    fn star_needs_refinement() {
        let star = parse_newick("(1,2,3,4);").unwrap();
        let root = star.root().unwrap();
        let om = OmegaParams {
            root,
            mean_bar: vec![q(1, 5), q(0, 1), q(-1, 3), q(1, 2), q(2, 5)],
            eta: vec![Some(q(1, 2)), Some(q(1, 3)), Some(q(1, 4)), Some(q(1, 5)), None],
        };
        assert!(matches!(psi(&star, &om), Err(Error::NotTrivalent(..))));
        let (_, k) = psi_refined(&star, &om).unwrap();
        let r = q(2, 5);
        let expect = q(1, 4) * (q(1, 1) - r.clone() * &r) * &r * &r * q(1, 2) * q(1, 3) * q(1, 4) * q(1, 5);
        assert_eq!(k.at(&[1, 2, 3, 4]), &expect);
    }

    #[test]
    fn omega_boundary_cases() {
        let t = parse_newick("(1,2,3);").unwrap();
        let root = NodeId(3);
        let mut om = OmegaParams {
            root,
            mean_bar: vec![q(0, 1); 4],
            eta: vec![Some(q(1, 2)), Some(q(1, 2)), Some(q(1, 2)), None],
        };
        assert!(validate_omega(&t, &om, 0.0).unwrap().is_empty());
        om.mean_bar = vec![q(3, 10); 4];
        om.eta = vec![Some(q(1, 1)), Some(q(1, 1)), Some(q(1, 1)), None];
        assert!(validate_omega(&t, &om, 0.0).unwrap().is_empty());
        om.eta[0] = Some(q(0, 1));
        let th = omega_to_theta(&t, &om).unwrap();
        let (lo, hi) = th.cond[0].clone().unwrap();
        assert_eq!(lo, hi);
    }
}
