//! End-to-end checks on points drawn from the model, against a brute-force
//! marginalization written independently of the library.

use hmtree_core::metrics::{
    check_path_factorization, correlations, edge_correlations, four_point_check, four_point_check_correlations,
    second_order_necessary, tree_metric_map,
};
use hmtree_core::model::{forward, psi, sample_theta, theta_to_omega, ThetaParams};
use hmtree_core::recovery::{canonicalize, recover, RecoverOptions};
use hmtree_core::semialgebraic::{certify, CertifyOptions, Verdict};
use hmtree_core::transforms::probs_to_cumulants;
use hmtree_core::tree::parse_newick;
use hmtree_core::{NodeId, Rational, Scalar, TreeTopology};
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TREES: [&str; 4] = ["(1,2,3);", "((1,2),(3,4));", "((1,2),3,(4,5));", "((1,2),(3,4),(5,6));"];

/// Sums the joint law over every hidden assignment.
fn brute_force(t: &TreeTopology, th: &ThetaParams<Rational>) -> Vec<Rational> {
    let nodes = t.node_count();
    let n = t.n_leaves();
    let hung = t.orient(th.root);
    let mut p = vec![Rational::zero(); 1 << n];
    for states in 0u64..(1 << nodes) {
        let y = |v: NodeId| states >> v.0 & 1 == 1;
        let mut w = if y(th.root) { th.root_prob.clone() } else { Rational::one() - &th.root_prob };
        for (u, v) in hung.directed_edges() {
            let (p0, p1) = th.cond[v.0].as_ref().unwrap();
            let on = if y(u) { p1 } else { p0 };
            w *= if y(v) { on.clone() } else { Rational::one() - on };
        }
        let mask: usize = (0..n).filter(|&i| y(NodeId(i))).map(|i| 1 << i).sum();
        p[mask] += w;
    }
    p
}

fn samples(newick: &str, count: usize, seed: u64) -> (TreeTopology, Vec<ThetaParams<Rational>>) {
    let t = parse_newick(newick).unwrap();
    let root = t.root().unwrap_or(NodeId(t.n_leaves()));
    let t = t.with_root(root).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = (0..count).map(|_| sample_theta(&t, root, 20, &mut rng)).collect();
    (t, th)
}

#[test]
fn forward_matches_brute_force() {
    for (s, newick) in TREES.iter().enumerate() {
        let (t, draws) = samples(newick, 10, s as u64);
        for th in &draws {
            assert_eq!(forward(&t, th).unwrap().values(), brute_force(&t, th).as_slice());
        }
    }
}

#[test]
fn monomials_agree_with_moebius_inversion() {
    for (s, newick) in TREES.iter().enumerate() {
        let (t, draws) = samples(newick, 25, 100 + s as u64);
        for th in &draws {
            let p = forward(&t, th).unwrap();
            let kappa = probs_to_cumulants(&t, &p).unwrap();
            let om = theta_to_omega(&t, th).unwrap();
            assert_eq!(psi(&t, &om).unwrap().values(), kappa.values());
        }
    }
}

#[test]
fn model_points_certify_and_recover() {
    for (s, newick) in TREES.iter().enumerate() {
        let (t, draws) = samples(newick, 40, 200 + s as u64);
        for th in &draws {
            let p = forward(&t, th).unwrap();
            let kappa = probs_to_cumulants(&t, &p).unwrap();
            let cert = certify(&t, &kappa, &CertifyOptions::default()).unwrap();
            assert_eq!(cert.verdict, Verdict::Pass, "{newick} {:?}", cert.first_failure());
            let r = recover(&t, &p, &RecoverOptions::default()).unwrap();
            assert!(r.feasible, "{newick}: {:?} {:?}", r.issues, r.violations);
            // Generic points are identified up to flips of hidden nodes.
            let truth = theta_to_omega(&t, th).unwrap();
            let generic = truth.eta.iter().flatten().all(|e| !e.is_zero())
                && truth.mean_bar.iter().all(|m| m.abs() != Rational::one());
            if generic {
                assert!(r.unique);
                let mut want = truth.map(|x| x.to_ext());
                canonicalize(&t, &mut want);
                assert_eq!(r.omega.unwrap(), want);
            }
        }
    }
}

#[test]
fn model_points_satisfy_metric_conditions() {
    for (s, newick) in TREES.iter().enumerate() {
        let (t, draws) = samples(newick, 25, 300 + s as u64);
        for th in &draws {
            let om = theta_to_omega(&t, th).unwrap();
            if om.mean_bar.iter().any(|m| m.abs() == Rational::one()) {
                continue;
            }
            let kappa = psi(&t, &om).unwrap();
            let rho = correlations(&kappa).unwrap();
            let edges = edge_correlations(&t, &om).unwrap();
            assert!(check_path_factorization(&t, &rho, &edges, 0.0).unwrap().iter().all(|r| r.holds));
            assert!(four_point_check_correlations(&rho, 0.0).iter().all(|r| r.holds));
            assert!(four_point_check(&tree_metric_map(&rho), 1e-9).iter().all(|r| r.holds));
            assert!(second_order_necessary(&kappa, 0.0).iter().all(|r| r.holds));
        }
    }
}
