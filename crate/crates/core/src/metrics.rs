//! Correlations, the induced tree metric, four-point and second-order
//! checks, and edge sign assignments.
//!
//! Correlations are carried as squares plus signs so that exact mode stays
//! rational; `ρ` itself is available in the scalar extension.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::model::OmegaParams;
use crate::scalar::Scalar;
use crate::subset::LeafSet;
use crate::transforms::{MomentKind, MomentSet};
use crate::tree::{Edge, NodeId, TreeTopology};

/// `Cov(X_i, X_j)` from any kind of moment set.
pub fn covariance<S: Scalar>(m: &MomentSet<S>, i: usize, j: usize) -> S {
    let v = m.get(LeafSet::from_labels([i, j])).clone();
    match m.kind() {
        MomentKind::NonCentral => v - m.mean(i).clone() * m.mean(j),
        MomentKind::Central | MomentKind::Cumulant => v,
    }
}

fn sign_of<S: Scalar>(x: &S) -> i8 {
    x.sign_tol(0.0)
}

/// Leaf correlations as `ρ_ij²` and `sgn ρ_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationData<S> {
    n: usize,
    rho_sq: Vec<Vec<S>>,
    sign: Vec<Vec<i8>>,
}

impl<S: Scalar> CorrelationData<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho_sq(&self, i: usize, j: usize) -> &S {
        &self.rho_sq[i - 1][j - 1]
    }

    pub fn sign(&self, i: usize, j: usize) -> i8 {
        self.sign[i - 1][j - 1]
    }

    pub fn rho(&self, i: usize, j: usize) -> S::Ext {
        let r = self.rho_sq(i, j).sqrt_ext().expect("squares are non-negative");
        if self.sign(i, j) < 0 {
            -r
        } else {
            r
        }
    }

    pub fn rho_f64(&self, i: usize, j: usize) -> f64 {
        f64::from(self.sign(i, j)) * self.rho_sq(i, j).to_f64().sqrt()
    }
}

/// `ρ_ij = 4μ_ij / √((1-μ̄_i²)(1-μ̄_j²))`.
pub fn correlations<S: Scalar>(m: &MomentSet<S>) -> Result<CorrelationData<S>> {
    let n = m.n();
    let var: Vec<S> = (1..=n)
        .map(|i| {
            let mb = m.mean_bar(i);
            S::one() - mb.clone() * mb
        })
        .collect();
    if let Some(i) = var.iter().position(|v| v.is_zero()) {
        return Err(Error::ZeroVariance(i + 1));
    }
    let mut rho_sq = vec![vec![S::one(); n]; n];
    let mut sign = vec![vec![1i8; n]; n];
    for i in 1..=n {
        for j in i + 1..=n {
            let c = covariance(m, i, j);
            let r2 = S::from_int(16) * &c * &c / (var[i - 1].clone() * &var[j - 1]);
            let s = sign_of(&c);
            rho_sq[i - 1][j - 1] = r2.clone();
            rho_sq[j - 1][i - 1] = r2;
            sign[i - 1][j - 1] = s;
            sign[j - 1][i - 1] = s;
        }
    }
    Ok(CorrelationData { n, rho_sq, sign })
}

/// Correlation across one tree edge, `parent → child` in the rooting of `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCorrelation<S> {
    pub parent: NodeId,
    pub child: NodeId,
    pub rho_sq: S,
    pub sign: i8,
}

impl<S: Scalar> EdgeCorrelation<S> {
    pub fn rho(&self) -> S::Ext {
        let r = self.rho_sq.sqrt_ext().expect("squares are non-negative");
        if self.sign < 0 {
            -r
        } else {
            r
        }
    }
}

/// `ρ_uv = η_{u,v} √((1-μ̄_u²)/(1-μ̄_v²))` on every edge.
pub fn edge_correlations<S: Scalar>(t: &TreeTopology, om: &OmegaParams<S>) -> Result<Vec<EdgeCorrelation<S>>> {
    if om.mean_bar.len() != t.node_count() || om.eta.len() != t.node_count() {
        return Err(Error::Shape(alloc::format!(
            "parameters for {} nodes, tree has {}",
            om.mean_bar.len(),
            t.node_count()
        )));
    }
    let var = |v: NodeId| -> Result<S> {
        let mb = &om.mean_bar[v.0];
        let x = S::one() - mb.clone() * mb;
        if x.is_zero() {
            return Err(Error::ZeroVariance(v.0 + 1));
        }
        Ok(x)
    };
    let hung = t.orient(om.root);
    hung.directed_edges()
        .map(|(u, v)| {
            let eta = om.eta_into(v);
            let rho_sq = eta.clone() * eta * var(u)? / var(v)?;
            Ok(EdgeCorrelation { parent: u, child: v, rho_sq, sign: sign_of(eta) })
        })
        .collect()
}

/// `ρ_ij` against the product of edge correlations on the path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResidual<S> {
    pub pair: [usize; 2],
    pub rho_sq: S,
    pub product_sq: S,
    pub sign: i8,
    pub product_sign: i8,
    pub holds: bool,
}

impl<S: Scalar> PathResidual<S> {
    /// `ρ_ij - Π ρ_e` as a float.
    pub fn residual(&self) -> f64 {
        f64::from(self.sign) * self.rho_sq.to_f64().sqrt()
            - f64::from(self.product_sign) * self.product_sq.to_f64().sqrt()
    }
}

pub fn check_path_factorization<S: Scalar>(
    t: &TreeTopology,
    rho: &CorrelationData<S>,
    edges: &[EdgeCorrelation<S>],
    tol: f64,
) -> Result<Vec<PathResidual<S>>> {
    let lookup = |e: Edge| {
        edges.iter().find(|c| Edge::new(c.parent, c.child) == e).ok_or_else(|| {
            let (a, b) = e.ends();
            Error::NotAnEdge(a, b)
        })
    };
    let n = rho.n();
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            let mut product_sq = S::one();
            let mut product_sign = 1i8;
            for (u, v) in t.path_edges(i, j)? {
                let c = lookup(Edge::new(u, v))?;
                product_sq *= &c.rho_sq;
                product_sign *= c.sign;
            }
            if product_sq.is_zero() {
                product_sign = 0;
            }
            let sign = rho.sign(i, j);
            let r2 = rho.rho_sq(i, j).clone();
            let holds = if S::EXACT {
                r2 == product_sq && sign == product_sign
            } else {
                let r = PathResidual {
                    pair: [i, j],
                    rho_sq: r2.clone(),
                    product_sq: product_sq.clone(),
                    sign,
                    product_sign,
                    holds: false,
                };
                r.residual().abs() <= tol
            };
            out.push(PathResidual { pair: [i, j], rho_sq: r2, product_sq, sign, product_sign, holds });
        }
    }
    Ok(out)
}

/// A distance that may be infinite.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Distance {
    Finite(f64),
    Infinite,
}

impl Distance {
    pub fn value(self) -> Option<f64> {
        match self {
            Distance::Finite(x) => Some(x),
            Distance::Infinite => None,
        }
    }

    fn plus(self, other: Distance) -> Distance {
        match (self, other) {
            (Distance::Finite(a), Distance::Finite(b)) => Distance::Finite(a + b),
            _ => Distance::Infinite,
        }
    }

    fn le_tol(self, other: Distance, tol: f64) -> bool {
        match (self, other) {
            (_, Distance::Infinite) => true,
            (Distance::Infinite, Distance::Finite(_)) => false,
            (Distance::Finite(a), Distance::Finite(b)) => a <= b + tol,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(x) => write!(f, "{x}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// `δ(i,j) = -log ρ_ij²`, infinite where the correlation vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeMetricMap {
    n: usize,
    d: Vec<Vec<Distance>>,
}

impl TreeMetricMap {
    pub fn from_matrix(d: Vec<Vec<Distance>>) -> Self {
        TreeMetricMap { n: d.len(), d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Distance {
        self.d[i - 1][j - 1]
    }

    pub fn rows(&self) -> &[Vec<Distance>] {
        &self.d
    }
}

pub fn tree_metric_map<S: Scalar>(rho: &CorrelationData<S>) -> TreeMetricMap {
    let n = rho.n();
    let d = (1..=n)
        .map(|i| {
            (1..=n)
                .map(|j| {
                    if i == j {
                        return Distance::Finite(0.0);
                    }
                    let r2 = rho.rho_sq(i, j);
                    if r2.is_zero() {
                        Distance::Infinite
                    } else {
                        Distance::Finite(-num_traits::Float::ln(r2.to_f64()))
                    }
                })
                .collect()
        })
        .collect();
    TreeMetricMap { n, d }
}

/// One instance of `δ(i,j)+δ(k,l) ≤ max{δ(i,k)+δ(j,l), δ(i,l)+δ(j,k)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourPoint {
    pub leaves: [usize; 4],
    pub holds: bool,
    /// Both sides are the same expression, so the instance says `x ≤ x`.
    pub vacuous: bool,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn same_pairs(p: [(usize, usize); 2], q: [(usize, usize); 2]) -> bool {
    let mut a = [pair_key(p[0].0, p[0].1), pair_key(p[1].0, p[1].1)];
    let mut b = [pair_key(q[0].0, q[0].1), pair_key(q[1].0, q[1].1)];
    a.sort();
    b.sort();
    a == b
}

fn quadruples(n: usize) -> impl Iterator<Item = [usize; 4]> {
    (1..=n).flat_map(move |i| (1..=n).flat_map(move |j| (1..=n).flat_map(move |k| (1..=n).map(move |l| [i, j, k, l]))))
}

fn is_vacuous([i, j, k, l]: [usize; 4]) -> bool {
    let lhs = [(i, j), (k, l)];
    same_pairs(lhs, [(i, k), (j, l)]) || same_pairs(lhs, [(i, l), (j, k)])
}

/// Four-point condition on a distance matrix over all `n⁴` quadruples.
pub fn four_point_check(delta: &TreeMetricMap, tol: f64) -> Vec<FourPoint> {
    quadruples(delta.n())
        .map(|q @ [i, j, k, l]| {
            let d = |a, b| delta.get(a, b);
            let lhs = d(i, j).plus(d(k, l));
            let r1 = d(i, k).plus(d(j, l));
            let r2 = d(i, l).plus(d(j, k));
            let holds = lhs.le_tol(r1, tol) || lhs.le_tol(r2, tol);
            FourPoint { leaves: q, holds, vacuous: is_vacuous(q) }
        })
        .collect()
}

/// The same condition in correlation form,
/// `min(ρ_ik²ρ_jl², ρ_il²ρ_jk²) ≤ ρ_ij²ρ_kl²`, which needs no logarithms.
pub fn four_point_check_correlations<S: Scalar>(rho: &CorrelationData<S>, tol: f64) -> Vec<FourPoint> {
    quadruples(rho.n())
        .map(|q @ [i, j, k, l]| {
            let r = |a, b| rho.rho_sq(a, b).clone();
            let lhs = r(i, j) * r(k, l);
            let a = r(i, k) * r(j, l);
            let b = r(i, l) * r(j, k);
            let min = if a < b { a } else { b };
            FourPoint { leaves: q, holds: min.le_tol(&lhs, tol), vacuous: is_vacuous(q) }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecondOrderKind {
    /// `μ_ij μ_ik μ_jk ≥ 0`.
    TripleSign,
    /// `0 ≤ min{μ_ik μ_jl, μ_il μ_jk} / (μ_ij μ_kl) ≤ 1`.
    Ratio,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderReport<S> {
    pub kind: SecondOrderKind,
    pub leaves: Vec<usize>,
    /// Triple product or smaller ratio; `None` for a zero denominator.
    pub value: Option<S>,
    pub holds: bool,
    pub vacuous: bool,
}

/// The inequalities on covariances alone: triple signs and, for each way of
/// pairing four distinct leaves, the bounded ratio.
pub fn second_order_necessary<S: Scalar>(m: &MomentSet<S>, tol: f64) -> Vec<SecondOrderReport<S>> {
    let n = m.n();
    let c = |a, b| covariance(m, a, b);
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            for k in j + 1..=n {
                let v = c(i, j) * c(i, k) * c(j, k);
                let holds = S::zero().le_tol(&v, tol);
                out.push(SecondOrderReport {
                    kind: SecondOrderKind::TripleSign,
                    leaves: vec![i, j, k],
                    value: Some(v),
                    holds,
                    vacuous: false,
                });
            }
        }
    }
    for set in (0..1u32 << n).map(LeafSet).filter(|s| s.len() == 4) {
        let [a, b, cc, d]: [usize; 4] = set.labels().collect::<Vec<_>>().try_into().expect("four labels");
        for [i, j, k, l] in [[a, b, cc, d], [a, cc, b, d], [a, d, b, cc]] {
            let den = c(i, j) * c(k, l);
            if den.is_negligible(if S::EXACT { 0.0 } else { tol }) {
                out.push(SecondOrderReport {
                    kind: SecondOrderKind::Ratio,
                    leaves: vec![i, j, k, l],
                    value: None,
                    holds: true,
                    vacuous: true,
                });
                continue;
            }
            let r1 = c(i, k) * c(j, l) / &den;
            let r2 = c(i, l) * c(j, k) / &den;
            let min = if r1 < r2 { r1 } else { r2 };
            let holds = S::zero().le_tol(&min, tol) && min.le_tol(&S::one(), tol);
            out.push(SecondOrderReport {
                kind: SecondOrderKind::Ratio,
                leaves: vec![i, j, k, l],
                value: Some(min),
                holds,
                vacuous: false,
            });
        }
    }
    out
}

/// Pairwise signs `σ(i,j)` in `{-1, 1}`, row `i-1`, column `j-1`.
pub type SignMatrix = Vec<Vec<i8>>;

/// `σ(i,j) = sgn μ_ij`, with vanishing covariances read as `+1`.
pub fn covariance_signs<S: Scalar>(m: &MomentSet<S>, tol: f64) -> SignMatrix {
    let n = m.n();
    (1..=n)
        .map(|i| (1..=n).map(|j| if i == j || covariance(m, i, j).sign_tol(tol) >= 0 { 1 } else { -1 }).collect())
        .collect()
}

/// Edge signs reproducing `σ` as path products.
#[derive(Clone, Debug, PartialEq)]
pub struct SignAssignment {
    pub sigma: SignMatrix,
    /// `s0(e)` for every edge, sorted by edge.
    pub s0: Vec<(Edge, i8)>,
}

impl SignAssignment {
    pub fn edge_sign(&self, e: Edge) -> i8 {
        self.s0.iter().find(|(f, _)| *f == e).map_or(1, |(_, s)| *s)
    }

    /// `s(u, v)`, the product of `s0` along the path.
    pub fn s(&self, t: &TreeTopology, u: NodeId, v: NodeId) -> i8 {
        t.path_nodes(u, v).windows(2).map(|w| self.edge_sign(Edge::new(w[0], w[1]))).product()
    }
}

/// Edge signs with `Π_{e ∈ E(ij)} s0(e) = σ(i,j)`, possible iff every triple
/// has `σ(i,j)σ(i,k)σ(j,k) = 1`. Inner edges get `+1`, leaf 1 gets `+1`, and
/// every other leaf `i` gets `σ(1,i)` on its pendant edge.
pub fn sign_assignment(t: &TreeTopology, sigma: &SignMatrix) -> Result<SignAssignment> {
    let n = t.n_leaves();
    if sigma.len() != n || sigma.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(alloc::format!("sign matrix must be {n}×{n}")));
    }
    let s = |i: usize, j: usize| sigma[i - 1][j - 1];
    for i in 1..=n {
        for j in 1..=n {
            if i != j && (s(i, j) != s(j, i) || s(i, j).abs() != 1) {
                return Err(Error::Shape(alloc::format!("σ({i},{j}) must be ±1 and symmetric")));
            }
        }
    }
    for i in 1..=n {
        for j in i + 1..=n {
            for k in j + 1..=n {
                if s(i, j) * s(i, k) * s(j, k) != 1 {
                    return Err(Error::InfeasibleSigns(i, j, k));
                }
            }
        }
    }
    let s0 = t
        .edges()
        .into_iter()
        .map(|e| {
            let (a, b) = e.ends();
            let leaf = t.label(a).or_else(|| t.label(b));
            let sign = match leaf {
                Some(i) if i != 1 && !t.is_inner_edge(e) => s(1, i),
                _ => 1,
            };
            (e, sign)
        })
        .collect();
    let out = SignAssignment { sigma: sigma.clone(), s0 };
    for i in 1..=n {
        for j in i + 1..=n {
            debug_assert_eq!(out.s(t, t.leaf(i)?, t.leaf(j)?), s(i, j));
        }
    }
    Ok(out)
}
