//! Coordinate changes between cell probabilities, non-central moments,
//! central moments and tree cumulants.
//!
//! Every vector here is indexed by leaf-subset mask (see [`LeafSet`]). Tables
//! may carry negative entries; such "formal" tables flow through every map.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::poset::tree_partitions;
use crate::scalar::Scalar;
use crate::subset::{LeafSet, MAX_LEAVES};
use crate::tree::TreeTopology;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable<S> {
    n: usize,
    p: Vec<S>,
}

impl<S: Scalar> ProbTable<S> {
    /// Entries indexed by cell mask.
    pub fn new(n: usize, p: Vec<S>) -> Result<Self> {
        if n > MAX_LEAVES {
            return Err(Error::TooManyLeaves(n, MAX_LEAVES));
        }
        if p.len() != 1 << n {
            return Err(Error::Shape(format!("table for {n} leaves needs {} entries, got {}", 1usize << n, p.len())));
        }
        Ok(ProbTable { n, p })
    }

    /// Entries listed in external order, `p_{0…0}, p_{0…01}, …, p_{1…1}`.
    pub fn from_external(n: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != 1 << n {
            return Err(Error::Shape(format!(
                "table for {n} leaves needs {} entries, got {}",
                1usize << n,
                values.len()
            )));
        }
        let mut p = vec![S::zero(); values.len()];
        for (k, v) in values.into_iter().enumerate() {
            p[LeafSet::from_external_index(k, n).index()] = v;
        }
        ProbTable::new(n, p)
    }

    pub fn to_external(&self) -> Vec<S> {
        (0..self.p.len()).map(|k| self.p[LeafSet::from_external_index(k, self.n).index()].clone()).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, cell: LeafSet) -> &S {
        &self.p[cell.index()]
    }

    pub fn values(&self) -> &[S] {
        &self.p
    }

    pub fn total(&self) -> S {
        self.p.iter().fold(S::zero(), |acc, v| acc + v)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - S::one()).is_negligible(tol)
    }

    /// Cells with a negative entry; empty for a genuine distribution.
    pub fn negative_cells(&self, tol: f64) -> Vec<LeafSet> {
        (0..self.p.len()).filter(|&m| self.p[m].sign_tol(tol) < 0).map(|m| LeafSet(m as u32)).collect()
    }

    /// Checks normalization, and nonnegativity when `strict`.
    pub fn validate(&self, strict: bool, tol: f64) -> Result<()> {
        if !self.is_normalized(tol) {
            return Err(Error::NotNormalized);
        }
        if strict {
            if let Some(c) = self.negative_cells(tol).first() {
                return Err(Error::Shape(format!("negative probability at cell {}", c.binary_string(self.n))));
            }
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ProbTable<T> {
        ProbTable { n: self.n, p: self.p.iter().map(f).collect() }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MomentKind {
    NonCentral,
    Central,
    Cumulant,
}

impl MomentKind {
    pub fn name(self) -> &'static str {
        match self {
            MomentKind::NonCentral => "noncentral",
            MomentKind::Central => "central",
            MomentKind::Cumulant => "cumulant",
        }
    }
}

/// Moments of one kind indexed by leaf subset, together with the leaf means.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet<S> {
    n: usize,
    kind: MomentKind,
    values: Vec<S>,
    means: Vec<S>,
}

impl<S: Scalar> MomentSet<S> {
    /// `values` indexed by mask, `means[i-1]` the mean of leaf `i`. For the
    /// non-central kind the means are read off the singleton entries.
    pub fn new(n: usize, kind: MomentKind, mut values: Vec<S>, means: Vec<S>) -> Result<Self> {
        if n > MAX_LEAVES {
            return Err(Error::TooManyLeaves(n, MAX_LEAVES));
        }
        if values.len() != 1 << n {
            return Err(Error::Shape(format!("{} moments for {n} leaves", values.len())));
        }
        let means = if kind == MomentKind::NonCentral {
            (1..=n).map(|i| values[LeafSet::singleton(i).index()].clone()).collect()
        } else {
            if means.len() != n {
                return Err(Error::Shape(format!("{} means for {n} leaves", means.len())));
            }
            values[0] = S::one();
            for i in 1..=n {
                values[LeafSet::singleton(i).index()] = S::zero();
            }
            means
        };
        Ok(MomentSet { n, kind, values, means })
    }

    /// Central moments or cumulants from a list of `(subset, value)` pairs;
    /// unlisted subsets are zero.
    pub fn from_entries(
        n: usize,
        kind: MomentKind,
        means: Vec<S>,
        entries: impl IntoIterator<Item = (LeafSet, S)>,
    ) -> Result<Self> {
        let mut values = vec![S::zero(); 1 << n];
        for (set, v) in entries {
            if set.index() >= values.len() {
                return Err(Error::Shape(format!("subset {set:?} outside 1..{n}")));
            }
            values[set.index()] = v;
        }
        MomentSet::new(n, kind, values, means)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MomentKind {
        self.kind
    }

    pub fn get(&self, set: LeafSet) -> &S {
        &self.values[set.index()]
    }

    /// Value on the subset `{labels}`.
    pub fn at(&self, labels: &[usize]) -> &S {
        self.get(LeafSet::from_labels(labels.iter().copied()))
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn means(&self) -> &[S] {
        &self.means
    }

    /// `λ_i` for leaf label `i`.
    pub fn mean(&self, i: usize) -> &S {
        &self.means[i - 1]
    }

    /// `1 - 2λ_i`.
    pub fn mean_bar(&self, i: usize) -> S {
        S::one() - S::from_int(2) * self.mean(i)
    }

    fn expect(&self, kind: MomentKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongMomentKind { expected: kind.name(), found: self.kind.name() })
        }
    }

    fn same_shape(&self, kind: MomentKind, values: Vec<S>) -> Self {
        MomentSet { n: self.n, kind, values, means: self.means.clone() }
    }
}

/// `λ_α = Σ_{β ≥ α} p_β`.
pub fn probs_to_noncentral<S: Scalar>(p: &ProbTable<S>) -> MomentSet<S> {
    let n = p.n;
    let mut v = p.p.clone();
    for bit in 0..n {
        let b = 1 << bit;
        for m in 0..v.len() {
            if m & b == 0 {
                let hi = v[m | b].clone();
                v[m] += hi;
            }
        }
    }
    let means = (0..n).map(|i| v[1 << i].clone()).collect();
    MomentSet { n, kind: MomentKind::NonCentral, values: v, means }
}

/// `p_α = Σ_{β ≥ α} (-1)^{|β|-|α|} λ_β`.
pub fn noncentral_to_probs<S: Scalar>(l: &MomentSet<S>) -> Result<ProbTable<S>> {
    l.expect(MomentKind::NonCentral)?;
    let mut v = l.values.clone();
    for bit in 0..l.n {
        let b = 1 << bit;
        for m in 0..v.len() {
            if m & b == 0 {
                let hi = v[m | b].clone();
                v[m] -= hi;
            }
        }
    }
    ProbTable::new(l.n, v)
}

/// `μ_α = E Π_{i∈α} (X_i - λ_i)`, expanded one leaf at a time.
pub fn noncentral_to_central<S: Scalar>(l: &MomentSet<S>) -> Result<MomentSet<S>> {
    l.expect(MomentKind::NonCentral)?;
    let mut v = l.values.clone();
    for (bit, mean) in l.means.iter().enumerate() {
        let b = 1 << bit;
        for m in 0..v.len() {
            if m & b != 0 {
                let lower = v[m ^ b].clone() * mean;
                v[m] -= lower;
            }
        }
    }
    for bit in 0..l.n {
        v[1 << bit] = S::zero();
    }
    Ok(l.same_shape(MomentKind::Central, v))
}

pub fn central_to_noncentral<S: Scalar>(m: &MomentSet<S>) -> Result<MomentSet<S>> {
    m.expect(MomentKind::Central)?;
    let mut v = m.values.clone();
    for (bit, mean) in m.means.iter().enumerate() {
        let b = 1 << bit;
        v[b] = mean.clone();
        for k in 0..v.len() {
            if k & b != 0 && k != b {
                let lower = v[k ^ b].clone() * mean;
                v[k] += lower;
            }
        }
    }
    Ok(m.same_shape(MomentKind::NonCentral, v))
}

/// For every subset `I` with `|I| ≥ 2`, the tree partitions of `I` without
/// singleton blocks and their Möbius values `m(π, 1̂)`. Singleton blocks can
/// be dropped because central moments and cumulants vanish on singletons.
#[derive(Clone, Debug)]
pub struct CumulantPlan {
    n: usize,
    terms: Vec<Vec<(i64, Vec<LeafSet>)>>,
}

impl CumulantPlan {
    pub fn new(t: &TreeTopology) -> Self {
        let n = t.n_leaves();
        let mut terms = vec![Vec::new(); 1 << n];
        for mask in 0..(1u32 << n) {
            let set = LeafSet(mask);
            if set.len() < 2 {
                continue;
            }
            let poset = tree_partitions(&t.restrict(set).expect("subset of the leaves"));
            let mob = poset.mobius_to_top();
            terms[mask as usize] = poset
                .elements()
                .iter()
                .zip(mob)
                .filter(|(p, _)| !p.has_singleton())
                .map(|(p, m)| (m, p.blocks().to_vec()))
                .collect();
        }
        CumulantPlan { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Partitions of `set` that contribute, with `m(π, 1̂)`.
    pub fn partitions(&self, set: LeafSet) -> &[(i64, Vec<LeafSet>)] {
        &self.terms[set.index()]
    }

    fn check<S: Scalar>(&self, m: &MomentSet<S>, kind: MomentKind) -> Result<()> {
        m.expect(kind)?;
        if m.n != self.n {
            return Err(Error::Shape(format!("moments on {} leaves, tree has {}", m.n, self.n)));
        }
        Ok(())
    }

    /// `κ_I = Σ_π m(π, 1̂) Π_{B∈π} μ_B`.
    pub fn to_cumulants<S: Scalar>(&self, mu: &MomentSet<S>) -> Result<MomentSet<S>> {
        self.check(mu, MomentKind::Central)?;
        let v = self.combine(&mu.values, true);
        Ok(mu.same_shape(MomentKind::Cumulant, v))
    }

    /// `μ_I = Σ_π Π_{B∈π} κ_B`.
    pub fn to_central<S: Scalar>(&self, kappa: &MomentSet<S>) -> Result<MomentSet<S>> {
        self.check(kappa, MomentKind::Cumulant)?;
        let v = self.combine(&kappa.values, false);
        Ok(kappa.same_shape(MomentKind::Central, v))
    }

    fn combine<S: Scalar>(&self, src: &[S], with_mobius: bool) -> Vec<S> {
        let mut out = vec![S::zero(); src.len()];
        out[0] = S::one();
        for (mask, terms) in self.terms.iter().enumerate().skip(1) {
            let mut acc = S::zero();
            for (coef, blocks) in terms {
                let c = if with_mobius { *coef } else { 1 };
                if c == 0 {
                    continue;
                }
                let mut prod = S::from_int(c);
                for b in blocks {
                    prod *= &src[b.index()];
                }
                acc += prod;
            }
            out[mask] = acc;
        }
        out
    }
}

pub fn central_to_cumulants<S: Scalar>(t: &TreeTopology, m: &MomentSet<S>) -> Result<MomentSet<S>> {
    CumulantPlan::new(t).to_cumulants(m)
}

pub fn cumulants_to_central<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>) -> Result<MomentSet<S>> {
    CumulantPlan::new(t).to_central(k)
}

pub fn probs_to_cumulants<S: Scalar>(t: &TreeTopology, p: &ProbTable<S>) -> Result<MomentSet<S>> {
    probs_to_cumulants_with(&CumulantPlan::new(t), p)
}

pub fn cumulants_to_probs<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>) -> Result<ProbTable<S>> {
    cumulants_to_probs_with(&CumulantPlan::new(t), k)
}

pub fn probs_to_cumulants_with<S: Scalar>(plan: &CumulantPlan, p: &ProbTable<S>) -> Result<MomentSet<S>> {
    plan.to_cumulants(&noncentral_to_central(&probs_to_noncentral(p))?)
}

pub fn cumulants_to_probs_with<S: Scalar>(plan: &CumulantPlan, k: &MomentSet<S>) -> Result<ProbTable<S>> {
    noncentral_to_probs(&central_to_noncentral(&plan.to_central(k)?)?)
}
