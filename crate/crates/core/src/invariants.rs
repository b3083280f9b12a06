//! Edge flattenings of the joint table, their 3×3 minors, and the cumulant
//! flattening whose rank drops to one exactly when the table flattening has
//! rank at most two.
//!
//! Rows and columns follow the binary order of the restricted cell with the
//! smallest leaf as the most significant digit, all-zeros first.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::subset::{ordered_subsets, LeafSet};
use crate::transforms::{MomentKind, MomentSet, ProbTable};
use crate::tree::{Edge, Split, TreeTopology};

/// `P_{A|B}`: entry `(α, β)` is `p` at the cell `α ∪ β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flattening<S> {
    pub split: Split,
    pub rows: Vec<LeafSet>,
    pub cols: Vec<LeafSet>,
    pub matrix: Vec<Vec<S>>,
}

/// `N_e`: entry `(I, J)` is `κ_{I∪J}` over nonempty `I ⊆ A`, `J ⊆ B`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantFlattening<S> {
    pub split: Split,
    pub rows: Vec<LeafSet>,
    pub cols: Vec<LeafSet>,
    pub matrix: Vec<Vec<S>>,
}

fn check_split(n: usize, s: &Split) -> Result<()> {
    if s.a.is_empty() || s.b.is_empty() || !s.a.is_disjoint(s.b) || s.a.union(s.b) != LeafSet::full(n) {
        return Err(Error::Shape(alloc::format!("{s} is not a split of 1..{n}")));
    }
    Ok(())
}

pub fn flatten<S: Scalar>(p: &ProbTable<S>, split: &Split) -> Result<Flattening<S>> {
    check_split(p.n(), split)?;
    let rows = ordered_subsets(split.a);
    let cols = ordered_subsets(split.b);
    let matrix = rows.iter().map(|r| cols.iter().map(|c| p.get(r.union(*c)).clone()).collect()).collect();
    Ok(Flattening { split: *split, rows, cols, matrix })
}

/// Reassembles the joint table from a flattening.
pub fn unflatten<S: Scalar>(f: &Flattening<S>) -> Result<ProbTable<S>> {
    let n = f.split.a.union(f.split.b).len();
    let mut p = vec![S::zero(); 1 << n];
    for (r, row) in f.rows.iter().zip(&f.matrix) {
        for (c, v) in f.cols.iter().zip(row) {
            p[r.union(*c).index()] = v.clone();
        }
    }
    ProbTable::new(n, p)
}

pub fn cumulant_flattening<S: Scalar>(t: &TreeTopology, k: &MomentSet<S>, e: Edge) -> Result<CumulantFlattening<S>> {
    if k.kind() != MomentKind::Cumulant {
        return Err(Error::WrongMomentKind { expected: "cumulant", found: k.kind().name() });
    }
    let split = t.split_of(e)?;
    Ok(cumulant_flattening_for(k, &split))
}

pub(crate) fn cumulant_flattening_for<S: Scalar>(k: &MomentSet<S>, split: &Split) -> CumulantFlattening<S> {
    let rows: Vec<LeafSet> = ordered_subsets(split.a).into_iter().skip(1).collect();
    let cols: Vec<LeafSet> = ordered_subsets(split.b).into_iter().skip(1).collect();
    let matrix = rows.iter().map(|r| cols.iter().map(|c| k.get(r.union(*c)).clone()).collect()).collect();
    CumulantFlattening { split: *split, rows, cols, matrix }
}

/// One minor: row indices, column indices and value.
#[derive(Clone, Debug, PartialEq)]
pub struct Minor<S> {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub value: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinorReport<S> {
    pub max_abs: S,
    pub minors: Vec<Minor<S>>,
}

impl<S: Scalar> MinorReport<S> {
    pub fn all_vanish(&self, tol: f64) -> bool {
        self.max_abs.is_negligible(tol)
    }
}

/// All 3×3 minors; vacuous (empty) when a side has fewer than three cells.
pub fn minor_residuals_3x3<S: Scalar>(f: &Flattening<S>) -> MinorReport<S> {
    let minors = minors_of(&f.matrix, 3);
    let max_abs = minors.iter().map(|m| m.value.abs()).fold(S::zero(), |a, b| if b > a { b } else { a });
    MinorReport { max_abs, minors }
}

/// Every `size × size` minor, rows and columns in lexicographic order.
pub fn minors_of<S: Scalar>(m: &[Vec<S>], size: usize) -> Vec<Minor<S>> {
    let nr = m.len();
    let nc = m.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for rows in combinations(nr, size) {
        for cols in combinations(nc, size) {
            let sub: Vec<Vec<S>> = rows.iter().map(|&r| cols.iter().map(|&c| m[r][c].clone()).collect()).collect();
            out.push(Minor { rows: rows.clone(), cols, value: det(sub) });
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Determinant by fraction-free expansion (Bareiss); exact over rationals.
pub fn det<S: Scalar>(mut a: Vec<Vec<S>>) -> S {
    let n = a.len();
    if n == 0 {
        return S::one();
    }
    let mut sign = S::one();
    let mut prev = S::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return S::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (a[i][j].clone() * &a[k][k] - a[i][k].clone() * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Outcome of a rank test.
#[derive(Clone, Debug, PartialEq)]
pub struct RankCheck<S> {
    pub rank: usize,
    pub holds: bool,
    /// A nonvanishing minor of size `rank` (exact mode) when the bound fails.
    pub witness: Option<Minor<S>>,
    /// Singular values, float mode only.
    pub singular_values: Vec<f64>,
}

/// `rank(m) ≤ r`. Exact scalars use elimination, so the test is the same as
/// the vanishing of every `(r+1)`-minor; floats threshold singular values at
/// `tol` times the largest.
pub fn rank_leq<S: Scalar>(m: &[Vec<S>], r: usize, tol: f64) -> RankCheck<S> {
    if S::EXACT {
        let (rank, rows, cols) = exact_rank(m);
        let holds = rank <= r;
        let witness = (!holds).then(|| {
            let sub: Vec<Vec<S>> = rows.iter().map(|&i| cols.iter().map(|&j| m[i][j].clone()).collect()).collect();
            Minor { rows: rows.clone(), cols: cols.clone(), value: det(sub) }
        });
        RankCheck { rank, holds, witness, singular_values: Vec::new() }
    } else {
        let sv = singular_values(m);
        let top = sv.first().copied().unwrap_or(0.0);
        let rank = sv.iter().filter(|&&s| s > tol * top && s > 0.0).count();
        RankCheck { rank, holds: rank <= r, witness: None, singular_values: sv }
    }
}

fn exact_rank<S: Scalar>(m: &[Vec<S>]) -> (usize, Vec<usize>, Vec<usize>) {
    let mut a: Vec<Vec<S>> = m.to_vec();
    let nr = a.len();
    let nc = a.first().map_or(0, Vec::len);
    let mut row_of: Vec<usize> = (0..nr).collect();
    let (mut pr, mut pc) = (Vec::new(), Vec::new());
    let mut r = 0;
    for c in 0..nc {
        let Some(p) = (r..nr).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        row_of.swap(r, p);
        for i in r + 1..nr {
            if a[i][c].is_zero() {
                continue;
            }
            let f = a[i][c].clone() / &a[r][c];
            let pivot = a[r][c..nc].to_vec();
            for (x, p) in a[i][c..nc].iter_mut().zip(&pivot) {
                *x -= f.clone() * p;
            }
        }
        pr.push(row_of[r]);
        pc.push(c);
        r += 1;
        if r == nr {
            break;
        }
    }
    pr.sort();
    (r, pr, pc)
}

fn singular_values<S: Scalar>(m: &[Vec<S>]) -> Vec<f64> {
    let nr = m.len();
    let nc = m.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Vec::new();
    }
    let mat = DMatrix::from_fn(nr, nc, |i, j| m[i][j].to_f64());
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    sv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::tree::parse_newick;
    use num_traits::Zero;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn flattening_shape_and_order() {
        let t = parse_newick("(1,2,3);").unwrap();
        let vals: Vec<Rational> = (0..8).map(|k| q(k + 1, 36)).collect();
        let p = ProbTable::from_external(3, vals).unwrap();
        let s = t.edge_splits()[0];
        let f = flatten(&p, &s).unwrap();
        assert_eq!((f.matrix.len(), f.matrix[0].len()), (2, 4));
        // Row 0 is X1 = 0, columns run 00, 01, 10, 11 over (X2, X3).
        assert_eq!(f.matrix[0], [q(1, 36), q(2, 36), q(3, 36), q(4, 36)]);
        assert!(minor_residuals_3x3(&f).minors.is_empty());
        assert_eq!(unflatten(&f).unwrap(), p);
    }

    #[test]
    fn bareiss_matches_cofactors() {
        let m =
            vec![vec![q(2, 1), q(-1, 3), q(0, 1)], vec![q(1, 2), q(0, 1), q(4, 1)], vec![q(0, 1), q(5, 1), q(1, 7)]];
        let expect = q(2, 1) * (q(0, 1) - q(20, 1)) - q(-1, 3) * (q(1, 14) - q(0, 1));
        assert_eq!(det(m), expect);
        let z = vec![vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(2, 1)]];
        assert_eq!(det(z), q(0, 1));
    }

    #[test]
    fn ranks() {
        let zero = vec![vec![q(0, 1); 3]; 3];
        assert!(rank_leq(&zero, 0, 0.0).holds);
        let m = vec![vec![q(1, 1), q(2, 1)], vec![q(2, 1), q(4, 1)], vec![q(0, 1), q(1, 1)]];
        let r = rank_leq(&m, 1, 0.0);
        assert_eq!(r.rank, 2);
        let w = r.witness.unwrap();
        assert!(!w.value.is_zero());
        let f: Vec<Vec<f64>> = m.iter().map(|row| row.iter().map(|x| x.to_f64()).collect()).collect();
        assert_eq!(rank_leq(&f, 1, 1e-12).rank, 2);
    }
}
