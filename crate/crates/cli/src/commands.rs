//! One function per subcommand. Each takes parsed inputs and returns an
//! [`Outcome`] holding the JSON document, the text rendering and the status.

use std::fmt::Write as _;

use hmtree_core::invariants::{cumulant_flattening, flatten, minor_residuals_3x3, rank_leq};
use hmtree_core::metrics::{
    correlations, four_point_check_correlations, second_order_necessary, tree_metric_map, FourPoint,
};
use hmtree_core::model::{forward, omega_to_theta, sample_theta, ThetaParams};
use hmtree_core::recovery::{recover_cumulants, reroot_omega, Issue, Param, RecoverOptions, RecoveryResult};
use hmtree_core::semialgebraic::{certify, describe, Certificate, CertifyOptions, Verdict};
use hmtree_core::transforms::{
    noncentral_to_central, probs_to_cumulants, probs_to_noncentral, MomentKind, MomentSet, ProbTable,
};
use hmtree_core::{NodeId, Scalar, TreeTopology};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::formats::{
    distances_to_csv, distances_to_json, keyed, matrix_to_csv, moments_to_json, omega_to_json, show, subset_key,
    table_to_json, theta_to_json, value, Params,
};
use crate::CliError;

/// Resolution of the grid `sample` draws from.
pub const SAMPLE_GRID: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// A certificate failed or a recovery is infeasible.
    Fail,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Fail => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub json: Value,
    pub text: String,
    pub status: Status,
}

impl Outcome {
    fn ok(json: Value, text: String) -> Self {
        Outcome { json, text, status: Status::Success }
    }
}

/// Joint table or moments, whichever the user supplied.
#[derive(Clone, Debug)]
pub enum Input<S> {
    Table(ProbTable<S>),
    Moments(MomentSet<S>),
}

impl<S: Scalar> Input<S> {
    fn cumulants(&self, t: &TreeTopology) -> Result<MomentSet<S>, CliError> {
        match self {
            Input::Table(p) => Ok(probs_to_cumulants(t, p)?),
            Input::Moments(m) if m.kind() == MomentKind::Cumulant => Ok(m.clone()),
            Input::Moments(m) => Err(CliError::Format(format!("expected cumulants, got {} moments", m.kind().name()))),
        }
    }

    /// Any moment kind carrying the covariances.
    fn second_order(&self) -> Result<MomentSet<S>, CliError> {
        match self {
            Input::Table(p) => Ok(noncentral_to_central(&probs_to_noncentral(p))?),
            Input::Moments(m) => Ok(m.clone()),
        }
    }
}

/// `λ`, `μ` and `κ` of a joint table.
#[derive(Clone, Debug)]
pub struct MomentReport<S> {
    pub noncentral: MomentSet<S>,
    pub central: MomentSet<S>,
    pub cumulant: MomentSet<S>,
}

pub fn moment_report<S: Scalar>(t: &TreeTopology, p: &ProbTable<S>, tol: f64) -> Result<MomentReport<S>, CliError> {
    p.validate(false, tol)?;
    let noncentral = probs_to_noncentral(p);
    let central = noncentral_to_central(&noncentral)?;
    let cumulant = probs_to_cumulants(t, p)?;
    Ok(MomentReport { noncentral, central, cumulant })
}

pub fn cmd_cumulants<S: Scalar>(t: &TreeTopology, p: &ProbTable<S>, tol: f64) -> Result<Outcome, CliError> {
    let r = moment_report(t, p, tol)?;
    let lambda: serde_json::Map<String, Value> =
        keyed(&r.noncentral).iter().map(|(s, v)| (subset_key(*s), value(v))).collect();
    let pick = |m: &MomentSet<S>| moments_to_json(m)["values"].clone();
    let json = json!({
        "n": p.n(),
        "means": r.cumulant.means().iter().map(value).collect::<Vec<_>>(),
        "noncentral": lambda,
        "central": pick(&r.central),
        "cumulant": pick(&r.cumulant),
    });
    let mut text = String::from("subset\tlambda\tmu\tkappa\n");
    for (s, l) in keyed(&r.noncentral) {
        let (mu, kappa) =
            if s.len() >= 2 { (show(r.central.get(s)), show(r.cumulant.get(s))) } else { ("-".into(), "-".into()) };
        let _ = writeln!(text, "{}\t{}\t{mu}\t{kappa}", subset_key(s), show(&l));
    }
    Ok(Outcome::ok(json, text))
}

pub fn certificate_to_json<E: Scalar>(c: &Certificate<E>) -> Value {
    let reports: Vec<Value> = c
        .reports
        .iter()
        .map(|r| {
            json!({
                "family": r.family.to_string(),
                "witness": r.witness.to_string(),
                "relation": if r.is_equation() { "=" } else { "<=" },
                "lhs": r.lhs.as_ref().map(value),
                "rhs": r.rhs.as_ref().map(value),
                "residual": r.residual().as_ref().map(value),
                "satisfied": r.satisfied,
            })
        })
        .collect();
    json!({
        "verdict": c.verdict.to_string(),
        "mode": c.mode,
        "tol": c.tol,
        "refined_tree": c.refined.as_ref().map(|t| t.to_newick()),
        "failed_families": c.failed_families().iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "reports": reports,
    })
}

pub fn cmd_certify<S: Scalar>(t: &TreeTopology, input: &Input<S>, opts: &CertifyOptions) -> Result<Outcome, CliError> {
    let k = input.cumulants(t)?;
    let cert = certify(t, &k, opts)?;
    let mut text = format!("verdict: {} ({} mode, {} checks)\n", cert.verdict, cert.mode, cert.reports.len());
    if let Some(r) = &cert.refined {
        let _ = writeln!(text, "certified on refinement {}", r.to_newick());
    }
    for r in cert.failures() {
        let _ = writeln!(text, "{}", describe(r));
    }
    let status = if cert.verdict == Verdict::Pass { Status::Success } else { Status::Fail };
    Ok(Outcome { json: certificate_to_json(&cert), text, status })
}

fn param_name(t: &TreeTopology, p: Param) -> String {
    match p {
        Param::Mean(v) => format!("mean_bar_{}", t.node_name(v)),
        Param::Eta { parent, child } => format!("eta_{},{}", t.node_name(parent), t.node_name(child)),
    }
}

fn describe_issue<S: Scalar>(t: &TreeTopology, issue: &Issue<S>) -> String {
    match issue {
        Issue::Mismatch(m) => format!(
            "{} is {} from leaves {:?} but {} from leaves {:?}",
            param_name(t, m.param),
            show(&m.value),
            m.witness,
            show(&m.alternative),
            m.alternative_witness
        ),
        Issue::Degenerate { leaves, reason } => format!("component {{{leaves}}}: {reason}"),
        Issue::InfeasibleSigns([i, j, k]) => format!("covariance signs on ({i},{j},{k}) admit no edge signs"),
        Issue::Disconnected { pair: [i, j] } => format!("covariance of ({i},{j}) vanishes inside a component"),
    }
}

pub fn recovery_to_json<S: Scalar>(r: &RecoveryResult<S>) -> Value {
    let t = &r.tree;
    let violations = |vs: &[hmtree_core::model::Violation<S::Ext>]| -> Vec<Value> {
        vs.iter()
            .map(|v| json!({ "constraint": v.constraint.describe(t), "lhs": value(&v.lhs), "rhs": value(&v.rhs) }))
            .collect()
    };
    let forest = json!({
        "isolated_edges": r.forest.isolated.iter().map(|e| {
            let (u, v) = e.ends();
            json!([t.node_name(u), t.node_name(v)])
        }).collect::<Vec<_>>(),
        "components": r.forest.components.iter().map(|c| c.leaves.labels().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "isolated_nodes": r.forest.isolated_nodes.iter().map(|&v| t.node_name(v)).collect::<Vec<_>>(),
    });
    json!({
        "tree": t.to_newick(),
        "feasible": r.feasible,
        "reproduces": r.reproduces,
        "unique": r.unique,
        "omega": r.omega.as_ref().map(|om| omega_to_json(t, om)),
        "theta": r.theta.as_ref().map(|th| theta_to_json(t, th)),
        "violations": violations(&r.violations),
        "theta_violations": violations(&r.theta_violations),
        "issues": r.issues.iter().map(|i| describe_issue(t, i)).collect::<Vec<_>>(),
        "forest": forest,
    })
}

fn recovery_text<S: Scalar>(r: &RecoveryResult<S>) -> String {
    let t = &r.tree;
    let mut text = format!("feasible: {}  reproduces: {}  unique: {}\n", r.feasible, r.reproduces, r.unique);
    if let Some(om) = &r.omega {
        let _ = writeln!(text, "omega (root {}):", t.node_name(om.root));
        for v in t.nodes() {
            let _ = writeln!(text, "  mean_bar_{} = {}", t.node_name(v), show(&om.mean_bar[v.0]));
        }
        for (u, v) in t.orient(om.root).directed_edges() {
            let _ = writeln!(text, "  eta_{},{} = {}", t.node_name(u), t.node_name(v), show(om.eta_into(v)));
        }
    }
    if let Some(th) = &r.theta {
        let _ = writeln!(text, "theta (root {}): theta_root = {}", t.node_name(th.root), show(&th.root_prob));
        for v in t.nodes() {
            if let Some((a, b)) = &th.cond[v.0] {
                let _ = writeln!(text, "  {}: theta_1|0 = {}, theta_1|1 = {}", t.node_name(v), show(a), show(b));
            }
        }
    }
    for v in r.violations.iter().chain(&r.theta_violations) {
        let _ = writeln!(text, "violated: {}  ({} > {})", v.constraint.describe(t), show(&v.lhs), show(&v.rhs));
    }
    for i in &r.issues {
        let _ = writeln!(text, "issue: {}", describe_issue(t, i));
    }
    if !r.forest.is_trivial() {
        let _ = writeln!(
            text,
            "K-forest: {} isolated edge(s), {} component(s)",
            r.forest.isolated.len(),
            r.forest.components.len()
        );
    }
    text
}

/// Recovery, optionally re-expressed from another root.
pub fn run_recovery<S: Scalar>(
    t: &TreeTopology,
    input: &Input<S>,
    opts: &RecoverOptions,
    root: Option<NodeId>,
) -> Result<RecoveryResult<S>, CliError> {
    let k = input.cumulants(t)?;
    let mut r = recover_cumulants(t, &k, opts)?;
    if let Some(root) = root {
        let tree = r.tree.with_root(root)?;
        if let Some(om) = &r.omega {
            let om = reroot_omega(&tree, om, root).ok_or_else(|| {
                CliError::Usage(format!("cannot re-root at {}: a mean there is ±1", t.node_name(root)))
            })?;
            r.theta = Some(omega_to_theta(&tree, &om)?);
            r.omega = Some(om);
        }
        r.tree = tree;
    }
    Ok(r)
}

pub fn cmd_recover<S: Scalar>(
    t: &TreeTopology,
    input: &Input<S>,
    opts: &RecoverOptions,
    root: Option<NodeId>,
) -> Result<Outcome, CliError> {
    let r = run_recovery(t, input, opts, root)?;
    let status = if r.feasible { Status::Success } else { Status::Fail };
    Ok(Outcome { json: recovery_to_json(&r), text: recovery_text(&r), status })
}

pub fn theta_of<S: Scalar>(t: &TreeTopology, params: &Params<S>) -> Result<ThetaParams<S>, CliError> {
    match params {
        Params::Theta(th) => Ok(th.clone()),
        Params::Omega(om) => Ok(omega_to_theta(t, om)?),
    }
}

fn table_text<S: Scalar>(p: &ProbTable<S>) -> String {
    let n = p.n();
    let mut text = String::new();
    for (k, v) in p.to_external().iter().enumerate() {
        let cell = hmtree_core::LeafSet::from_external_index(k, n);
        let _ = writeln!(text, "{}\t{}", cell.binary_string(n), show(v));
    }
    text
}

pub fn cmd_forward<S: Scalar>(t: &TreeTopology, params: &Params<S>) -> Result<Outcome, CliError> {
    let th = theta_of(t, params)?;
    let p = forward(&t.with_root(th.root)?, &th)?;
    Ok(Outcome::ok(table_to_json(&p), table_text(&p)))
}

pub fn cmd_invariants<S: Scalar>(t: &TreeTopology, p: &ProbTable<S>, tol: f64) -> Result<Outcome, CliError> {
    let k = probs_to_cumulants(t, p)?;
    let n = p.n();
    let mut edges = Vec::new();
    let mut text = String::new();
    let mut all_hold = true;
    for e in t.edges() {
        let split = t.split_of(e)?;
        let flat = flatten(p, &split)?;
        let cum = cumulant_flattening(t, &k, e)?;
        let p_rank = rank_leq(&flat.matrix, 2, tol);
        let n_rank = rank_leq(&cum.matrix, 1, tol);
        let minors = minor_residuals_3x3(&flat);
        all_hold &= p_rank.holds && n_rank.holds;
        let (u, v) = e.ends();
        edges.push(json!({
            "edge": [t.node_name(u), t.node_name(v)],
            "split": split.to_string(),
            "trivial": split.is_trivial(),
            "flattening_rank": p_rank.rank,
            "flattening_rank_le_2": p_rank.holds,
            "cumulant_rank": n_rank.rank,
            "cumulant_rank_le_1": n_rank.holds,
            "max_abs_3x3_minor": value(&minors.max_abs),
        }));
        let row_names = |cells: &[hmtree_core::LeafSet], side: hmtree_core::LeafSet| -> Vec<String> {
            cells.iter().map(|c| restricted_string(*c, side)).collect()
        };
        let _ = writeln!(
            text,
            "# edge {}-{} split {}: rank P_e = {} (<= 2: {}), rank N_e = {} (<= 1: {})",
            t.node_name(u),
            t.node_name(v),
            split,
            p_rank.rank,
            p_rank.holds,
            n_rank.rank,
            n_rank.holds
        );
        text.push_str(&matrix_to_csv(&row_names(&flat.rows, split.a), &row_names(&flat.cols, split.b), &flat.matrix));
        let keys = |cells: &[hmtree_core::LeafSet]| -> Vec<String> { cells.iter().map(|c| subset_key(*c)).collect() };
        text.push_str(&matrix_to_csv(&keys(&cum.rows), &keys(&cum.cols), &cum.matrix));
    }
    let json = json!({ "n": n, "all_hold": all_hold, "edges": edges });
    let status = if all_hold { Status::Success } else { Status::Fail };
    Ok(Outcome { json, text, status })
}

/// The cell restricted to `side`, smallest leaf first.
fn restricted_string(cell: hmtree_core::LeafSet, side: hmtree_core::LeafSet) -> String {
    side.labels().map(|l| if cell.contains(l) { '1' } else { '0' }).collect()
}

fn four_point_json(fp: &FourPoint) -> Value {
    json!({ "leaves": fp.leaves, "holds": fp.holds, "vacuous": fp.vacuous })
}

pub fn cmd_metric<S: Scalar>(input: &Input<S>, tol: f64) -> Result<Outcome, CliError> {
    let m = input.second_order()?;
    let rho = correlations(&m)?;
    let delta = tree_metric_map(&rho);
    let fp = four_point_check_correlations(&rho, tol);
    let failed: Vec<&FourPoint> = fp.iter().filter(|r| !r.holds).collect();
    let second = second_order_necessary(&m, tol);
    let second_failed = second.iter().filter(|r| !r.holds).count();
    let json = json!({
        "distance": distances_to_json(&delta),
        "four_point": {
            "checked": fp.len(),
            "vacuous": fp.iter().filter(|r| r.vacuous).count(),
            "violations": failed.iter().map(|r| four_point_json(r)).collect::<Vec<_>>(),
        },
        "second_order": {
            "checked": second.len(),
            "violations": second.iter().filter(|r| !r.holds).map(|r| json!({
                "kind": format!("{:?}", r.kind),
                "leaves": r.leaves,
                "value": r.value.as_ref().map(value),
            })).collect::<Vec<_>>(),
        },
    });
    let mut text = distances_to_csv(&delta);
    let _ = writeln!(text, "four-point: {} of {} quadruples violate", failed.len(), fp.len());
    for r in &failed {
        let _ = writeln!(text, "  violated at {:?}", r.leaves);
    }
    let _ = writeln!(text, "second-order: {} of {} checks violate", second_failed, second.len());
    let status = if failed.is_empty() && second_failed == 0 { Status::Success } else { Status::Fail };
    Ok(Outcome { json, text, status })
}

/// Uniform grid draw of `θ` and its joint table; same seed, same output.
pub fn sample<S: Scalar>(
    t: &TreeTopology,
    root: Option<NodeId>,
    seed: u64,
) -> Result<(ThetaParams<S>, ProbTable<S>), CliError> {
    let root = root.or(t.root()).or_else(|| t.inner_nodes().next()).unwrap_or(NodeId(0));
    let t = t.with_root(root)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = sample_theta(&t, root, SAMPLE_GRID, &mut rng);
    let p = forward(&t, &th)?;
    Ok((th, p))
}

pub fn cmd_sample<S: Scalar>(t: &TreeTopology, root: Option<NodeId>, seed: u64) -> Result<Outcome, CliError> {
    let (th, p) = sample::<S>(t, root, seed)?;
    let json = json!({ "seed": seed, "theta": theta_to_json(t, &th), "table": table_to_json(&p) });
    let mut text = format!("theta (root {}): theta_root = {}\n", t.node_name(th.root), show(&th.root_prob));
    for v in t.nodes() {
        if let Some((a, b)) = &th.cond[v.0] {
            let _ = writeln!(text, "  {}: theta_1|0 = {}, theta_1|1 = {}", t.node_name(v), show(a), show(b));
        }
    }
    text.push_str(&table_text(&p));
    Ok(Outcome::ok(json, text))
}
