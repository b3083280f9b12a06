//! Membership certificate for the model on a trivalent tree.
//!
//! Five families of conditions on the tree cumulants decide membership:
//!
//! * C1: every 2×2 minor of every cumulant flattening vanishes;
//! * C2: per triple, `μ_ij μ_ik μ_jk ≥ 0` and
//!   `Σ μ_ij²μ_ik² ≤ Det ≤ min μ_ll'²`;
//! * C3: per triple, six bounds `Det ≤ ((1 ± μ̄_p) μ_qr ∓ μ_ijk)²`;
//! * C4: a vanishing covariance forces every cumulant containing the pair
//!   to vanish;
//! * C5: per quadruple `i,j | k,l` separated by an edge, two bounds with
//!   nested square roots.
//!
//! `Det` is the hyperdeterminant of the three-way margin, computed from
//! moments as `μ_123² + 4 μ_12 μ_13 μ_23`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::invariants::cumulant_flattening_for;
use crate::scalar::Scalar;
use crate::subset::LeafSet;
use crate::transforms::{CumulantPlan, MomentKind, MomentSet, ProbTable};
use crate::tree::TreeTopology;

/// Hyperdeterminant of a 2×2×2 array indexed `a[4·i + 2·j + k]`.
pub fn hyperdet<S: Scalar>(a: &[S; 8]) -> S {
    let x = |i: usize| &a[i];
    let sq = |i: usize, j: usize| x(i).clone() * x(i) * x(j) * x(j);
    let four = |i: usize, j: usize, k: usize, l: usize| x(i).clone() * x(j) * x(k) * x(l);
    let squares = sq(0b000, 0b111) + sq(0b001, 0b110) + sq(0b010, 0b101) + sq(0b011, 0b100);
    let cross = four(0b000, 0b001, 0b110, 0b111)
        + four(0b000, 0b010, 0b101, 0b111)
        + four(0b000, 0b011, 0b100, 0b111)
        + four(0b001, 0b010, 0b101, 0b110)
        + four(0b001, 0b011, 0b110, 0b100)
        + four(0b010, 0b011, 0b101, 0b100);
    let quad = four(0b000, 0b011, 0b101, 0b110) + four(0b001, 0b010, 0b100, 0b111);
    squares - S::from_int(2) * cross + S::from_int(4) * quad
}

/// `μ_123² + 4 μ_12 μ_13 μ_23`; equals [`hyperdet`] on normalized tables.
pub fn hyperdet_from_moments<S: Scalar>(mu12: &S, mu13: &S, mu23: &S, mu123: &S) -> S {
    mu123.clone() * mu123 + S::from_int(4) * mu12 * mu13 * mu23
}

/// The margin of `(X_i, X_j, X_k)` as a 2×2×2 array, `i` the slowest index.
pub fn marginal_table<S: Scalar>(p: &ProbTable<S>, i: usize, j: usize, k: usize) -> Result<[S; 8]> {
    let n = p.n();
    for l in [i, j, k] {
        if l == 0 || l > n {
            return Err(Error::UnknownLeaf(l));
        }
    }
    if i == j || i == k || j == k {
        return Err(Error::RepeatedLeaf);
    }
    let mut out: [S; 8] = core::array::from_fn(|_| S::zero());
    for (m, v) in p.values().iter().enumerate() {
        let cell = LeafSet(m as u32);
        let idx = (cell.contains(i) as usize) << 2 | (cell.contains(j) as usize) << 1 | cell.contains(k) as usize;
        out[idx] += v;
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Family {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Part of a triple condition.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TriplePart {
    /// `0 ≤ μ_ij μ_ik μ_jk`.
    Sign,
    /// `Σ μ_ij²μ_ik² ≤ Det`.
    Lower,
    /// `Det ≤ min μ_ll'²`.
    Upper,
    /// `Det ≤ ((1 ± μ̄_pivot) μ_qr ∓ μ_ijk)²` with `plus` selecting the upper signs.
    Pivot { leaf: usize, plus: bool },
}

/// Identifies one reported inequality or equation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Witness {
    /// `κ_{I1 J1} κ_{I2 J2} = κ_{I1 J2} κ_{I2 J1}`.
    Minor {
        rows: [LeafSet; 2],
        cols: [LeafSet; 2],
    },
    Triple {
        leaves: [usize; 3],
        part: TriplePart,
    },
    /// `κ_set = 0` because `μ_pair = 0`.
    Vanishing {
        pair: [usize; 2],
        set: LeafSet,
    },
    /// Ordered `(i, j, k, l)` with `i, j` against `k, l`.
    Quadruple {
        leaves: [usize; 4],
        plus: bool,
    },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Minor { rows, cols } => write!(f, "rows {},{} cols {},{}", rows[0], rows[1], cols[0], cols[1]),
            Witness::Triple { leaves: [i, j, k], part } => {
                write!(f, "({i},{j},{k}) ")?;
                match part {
                    TriplePart::Sign => write!(f, "sign"),
                    TriplePart::Lower => write!(f, "lower"),
                    TriplePart::Upper => write!(f, "upper"),
                    TriplePart::Pivot { leaf, plus } => write!(f, "pivot {leaf} {}", if *plus { "+" } else { "-" }),
                }
            }
            Witness::Vanishing { pair: [i, j], set } => write!(f, "mu_{i}{j}=0 => kappa_{set}"),
            Witness::Quadruple { leaves: [i, j, k, l], plus } => {
                write!(f, "({i},{j}|{k},{l}) {}", if *plus { "+" } else { "-" })
            }
        }
    }
}

/// One checked relation `lhs ≤ rhs` (or `lhs = rhs` for C1 and C4). A side
/// is `None` when it is undefined, as for the square root of a negative
/// hyperdeterminant; such reports are unsatisfied.
#[derive(Clone, Debug, PartialEq)]
pub struct Report<E> {
    pub family: Family,
    pub witness: Witness,
    pub lhs: Option<E>,
    pub rhs: Option<E>,
    pub satisfied: bool,
}

impl<E: Scalar> Report<E> {
    pub fn residual(&self) -> Option<E> {
        Some(self.lhs.clone()? - self.rhs.as_ref()?)
    }

    pub fn is_equation(&self) -> bool {
        matches!(self.family, Family::C1 | Family::C4)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// Which reading of the C5 bound to check.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum C5Form {
    /// `(2μ_ik μ_jl)² ≤ (√(μ_jl² Det^{ijk}) ± μ_jl μ_ijk)(√Det^{ikl} ∓ μ_ikl)`.
    #[default]
    Scaled,
    /// The same with `√Det^{ijk}` in place of `√(μ_jl² Det^{ijk})`; kept
    /// for diagnostics only, it is not a valid model constraint.
    Unscaled,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    /// Float mode only: equations hold up to `tol`, inequalities may fail by `tol`.
    pub tol: f64,
    /// Certify non-trivalent trees against their canonical trivalent refinement.
    pub refine: bool,
    pub c5_form: C5Form,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { tol: 1e-9, refine: false, c5_form: C5Form::Scaled }
    }
}

#[derive(Clone, Debug)]
pub struct Certificate<E> {
    pub verdict: Verdict,
    pub tol: f64,
    pub mode: &'static str,
    /// The trivalent tree actually certified, when a refinement was used.
    pub refined: Option<TreeTopology>,
    pub reports: Vec<Report<E>>,
}

impl<E: Scalar> Certificate<E> {
    pub fn failures(&self) -> impl Iterator<Item = &Report<E>> {
        self.reports.iter().filter(|r| !r.satisfied)
    }

    pub fn first_failure(&self) -> Option<&Report<E>> {
        self.failures().next()
    }

    pub fn family(&self, fam: Family) -> impl Iterator<Item = &Report<E>> {
        self.reports.iter().filter(move |r| r.family == fam)
    }

    pub fn failed_families(&self) -> BTreeSet<Family> {
        self.failures().map(|r| r.family).collect()
    }
}

fn ineq<S: Scalar>(family: Family, witness: Witness, lhs: S, rhs: S, tol: f64) -> Report<S::Ext> {
    let satisfied = lhs.le_tol(&rhs, tol);
    Report { family, witness, lhs: Some(lhs.to_ext()), rhs: Some(rhs.to_ext()), satisfied }
}

fn equation<S: Scalar>(family: Family, witness: Witness, lhs: S, rhs: S, tol: f64) -> Report<S::Ext> {
    let satisfied = (lhs.clone() - &rhs).is_negligible(tol);
    Report { family, witness, lhs: Some(lhs.to_ext()), rhs: Some(rhs.to_ext()), satisfied }
}

fn pair<S: Scalar>(k: &MomentSet<S>, i: usize, j: usize) -> &S {
    k.get(LeafSet::from_labels([i, j]))
}

fn det_of<S: Scalar>(k: &MomentSet<S>, i: usize, j: usize, l: usize) -> S {
    hyperdet_from_moments(pair(k, i, j), pair(k, i, l), pair(k, j, l), k.get(LeafSet::from_labels([i, j, l])))
}

fn triples(n: usize) -> impl Iterator<Item = [usize; 3]> {
    (1..=n).flat_map(move |i| (i + 1..=n).flat_map(move |j| (j + 1..=n).map(move |k| [i, j, k])))
}

/// C1 as the 2×2 minors of every edge's cumulant flattening.
pub fn check_c1<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, tol: f64) -> Vec<Report<S::Ext>> {
    let mut out = Vec::new();
    for split in t.edge_splits() {
        let nf = cumulant_flattening_for(k, &split);
        let m = &nf.matrix;
        for r1 in 0..nf.rows.len() {
            for r2 in r1 + 1..nf.rows.len() {
                for c1 in 0..nf.cols.len() {
                    for c2 in c1 + 1..nf.cols.len() {
                        let lhs = m[r1][c1].clone() * &m[r2][c2];
                        let rhs = m[r1][c2].clone() * &m[r2][c1];
                        let w = Witness::Minor { rows: [nf.rows[r1], nf.rows[r2]], cols: [nf.cols[c1], nf.cols[c2]] };
                        out.push(equation::<S>(Family::C1, w, lhs, rhs, tol));
                    }
                }
            }
        }
    }
    out
}

pub fn check_c2<S: Scalar>(k: &MomentSet<S>, tol: f64) -> Vec<Report<S::Ext>> {
    let mut out = Vec::new();
    for [i, j, l] in triples(k.n()) {
        let (a, b, c) = (pair(k, i, j), pair(k, i, l), pair(k, j, l));
        let det = det_of(k, i, j, l);
        let w = |part| Witness::Triple { leaves: [i, j, l], part };
        out.push(ineq(Family::C2, w(TriplePart::Sign), S::zero(), a.clone() * b * c, tol));
        let (a2, b2, c2) = (a.clone() * a, b.clone() * b, c.clone() * c);
        let lower = a2.clone() * &b2 + a2.clone() * &c2 + b2.clone() * &c2;
        out.push(ineq(Family::C2, w(TriplePart::Lower), lower, det.clone(), tol));
        let min = [a2, b2, c2].into_iter().reduce(|x, y| if y < x { y } else { x }).expect("three values");
        out.push(ineq(Family::C2, w(TriplePart::Upper), det, min, tol));
    }
    out
}

pub fn check_c3<S: Scalar>(k: &MomentSet<S>, tol: f64) -> Vec<Report<S::Ext>> {
    let mut out = Vec::new();
    let one = S::one();
    for [i, j, l] in triples(k.n()) {
        let det = det_of(k, i, j, l);
        let m3 = k.get(LeafSet::from_labels([i, j, l]));
        for (p, q, r) in [(i, j, l), (j, i, l), (l, i, j)] {
            let mb = k.mean_bar(p);
            let cov = pair(k, q, r);
            for plus in [true, false] {
                let base = if plus { (one.clone() + &mb) * cov - m3 } else { (one.clone() - &mb) * cov + m3 };
                let rhs = base.clone() * &base;
                let w = Witness::Triple { leaves: [i, j, l], part: TriplePart::Pivot { leaf: p, plus } };
                out.push(ineq(Family::C3, w, det.clone(), rhs, tol));
            }
        }
    }
    out
}

pub fn check_c4<S: Scalar>(k: &MomentSet<S>, tol: f64) -> Vec<Report<S::Ext>> {
    let n = k.n();
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            if !pair(k, i, j).is_negligible(tol) {
                continue;
            }
            let ij = LeafSet::from_labels([i, j]);
            for rest in LeafSet::full(n).difference(ij).subsets().skip(1) {
                let set = ij.union(rest);
                let w = Witness::Vanishing { pair: [i, j], set };
                out.push(equation::<S>(Family::C4, w, k.get(set).clone(), S::zero(), tol));
            }
        }
    }
    out
}

/// Ordered quadruples `(i, j, k, l)`, `i ≠ j` on one side of an inner edge and
/// `k ≠ l` on the other, each listed once.
pub fn c5_quadruples(t: &TreeTopology) -> Vec<[usize; 4]> {
    let mut seen = BTreeSet::new();
    for s in t.edge_splits() {
        if s.is_trivial() {
            continue;
        }
        for (a, b) in [(s.a, s.b), (s.b, s.a)] {
            for i in a.labels() {
                for j in a.labels().filter(|&j| j != i) {
                    for k in b.labels() {
                        for l in b.labels().filter(|&l| l != k) {
                            seen.insert([i, j, k, l]);
                        }
                    }
                }
            }
        }
    }
    seen.into_iter().collect()
}

pub fn check_c5<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, form: C5Form, tol: f64) -> Vec<Report<S::Ext>> {
    let mut out = Vec::new();
    for [i, j, kk, l] in c5_quadruples(t) {
        let (m_ik, m_jl) = (pair(k, i, kk), pair(k, j, l));
        let m_ijk = k.get(LeafSet::from_labels([i, j, kk]));
        let m_ikl = k.get(LeafSet::from_labels([i, kk, l]));
        let d_ijk = det_of(k, i, j, kk);
        let d_ikl = det_of(k, i, kk, l);
        let two = S::from_int(2);
        let base = two * m_ik * m_jl;
        let lhs = (base.clone() * &base).to_ext();
        let scaled = match form {
            C5Form::Scaled => m_jl.clone() * m_jl * &d_ijk,
            C5Form::Unscaled => d_ijk.clone(),
        };
        let roots = (scaled.sqrt_ext(), d_ikl.sqrt_ext());
        let a = (m_jl.clone() * m_ijk).to_ext();
        let c = m_ikl.to_ext();
        for plus in [true, false] {
            let witness = Witness::Quadruple { leaves: [i, j, kk, l], plus };
            let report = match &roots {
                (Some(r1), Some(r2)) => {
                    let (f1, f2) =
                        if plus { (r1.clone() + &a, r2.clone() - &c) } else { (r1.clone() - &a, r2.clone() + &c) };
                    let rhs = f1 * f2;
                    let satisfied = lhs.le_tol(&rhs, tol);
                    Report { family: Family::C5, witness, lhs: Some(lhs.clone()), rhs: Some(rhs), satisfied }
                }
                _ => Report { family: Family::C5, witness, lhs: Some(lhs.clone()), rhs: None, satisfied: false },
            };
            out.push(report);
        }
    }
    out
}

/// The tree actually checked and cumulants relative to it.
fn prepare<S: Scalar>(
    t: &TreeTopology,
    k: &MomentSet<S>,
    refine: bool,
) -> Result<(Option<TreeTopology>, Option<MomentSet<S>>)> {
    if k.kind() != MomentKind::Cumulant {
        return Err(Error::WrongMomentKind { expected: "cumulant", found: k.kind().name() });
    }
    if k.n() != t.n_leaves() {
        return Err(Error::Shape(format!("cumulants on {} leaves, tree has {}", k.n(), t.n_leaves())));
    }
    let multifurcating = t.inner_nodes().find(|&v| t.degree(v) > 3);
    let has_unary = t.inner_nodes().any(|v| t.degree(v) == 2);
    match multifurcating {
        None if !has_unary => Ok((None, None)),
        None => Ok((Some(t.suppress_degree_two().0), None)),
        Some(v) if !refine => Err(Error::NotTrivalent(v, t.degree(v))),
        Some(_) => {
            let refined = t.resolve_multifurcations().0.suppress_degree_two().0;
            // Cumulants depend on the tree through its partition lattice.
            let mu = CumulantPlan::new(t).to_central(k)?;
            let k2 = CumulantPlan::new(&refined).to_cumulants(&mu)?;
            Ok((Some(refined), Some(k2)))
        }
    }
}

/// Runs C1 to C5. The verdict is `Pass` iff every report is satisfied.
pub fn certify<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, opts: &CertifyOptions) -> Result<Certificate<S::Ext>> {
    let (refined, recomputed) = prepare(t, k, opts.refine)?;
    let tree = refined.as_ref().unwrap_or(t);
    let k = recomputed.as_ref().unwrap_or(k);
    let tol = if S::EXACT { 0.0 } else { opts.tol };
    let mut reports = check_c1(tree, k, tol);
    reports.extend(check_c2(k, tol));
    reports.extend(check_c3(k, tol));
    reports.extend(check_c4(k, tol));
    reports.extend(check_c5(tree, k, opts.c5_form, tol));
    reports.sort_by(|a, b| (a.family, &a.witness).cmp(&(b.family, &b.witness)));
    let verdict = if reports.iter().all(|r| r.satisfied) { Verdict::Pass } else { Verdict::Fail };
    let multifurcated = t.inner_nodes().any(|v| t.degree(v) > 3);
    Ok(Certificate { verdict, tol: opts.tol, mode: S::MODE, refined: refined.filter(|_| multifurcated), reports })
}

/// [`certify`] starting from a joint table.
pub fn certify_table<S: Scalar>(
    t: &TreeTopology,
    p: &ProbTable<S>,
    opts: &CertifyOptions,
) -> Result<Certificate<S::Ext>> {
    let k = crate::transforms::probs_to_cumulants(t, p)?;
    certify(t, &k, opts)
}

/// Short text for one report, used by front ends.
pub fn describe<E: Scalar>(r: &Report<E>) -> String {
    let show = |x: &Option<E>| x.as_ref().map_or_else(|| String::from("undefined"), |v| format!("{:.6e}", v.to_f64()));
    let rel = if r.is_equation() { "=" } else { "<=" };
    let status = if r.satisfied { "holds" } else { "VIOLATED" };
    format!("{} {}: {} {} {} {status}", r.family, r.witness, show(&r.lhs), rel, show(&r.rhs))
}
