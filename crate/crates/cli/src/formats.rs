//! File formats: joint tables, moment sets, θ/ω parameter files and value
//! encoding. Exact values are written as strings (`"13/250"`), float values as
//! JSON numbers; readers accept both, and decimal literals are read exactly.

use hmtree_core::metrics::{Distance, TreeMetricMap};
use hmtree_core::model::{OmegaParams, ThetaParams};
use hmtree_core::transforms::{MomentKind, MomentSet, ProbTable};
use hmtree_core::{LeafSet, NodeId, Rational, Scalar, TreeTopology};
use num_bigint::BigInt;
use num_traits::Zero;
use serde_json::{json, Map, Value};

use crate::CliError;

pub const TABLE_ORDER: &str = "binary-ascending";

/// A scalar that can be read from input files.
pub trait Number: Scalar {
    fn parse(text: &str) -> Option<Self>;
}

impl Number for f64 {
    fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            t if t.contains('/') => parse_rational(t).map(|q| q.to_f64()),
            t => t.parse().ok(),
        }
    }
}

impl Number for Rational {
    fn parse(text: &str) -> Option<Self> {
        parse_rational(text)
    }
}

/// Reads `p/q`, integers and decimal literals with an optional exponent,
/// all without rounding.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        return (!d.is_zero()).then(|| Rational::new(n, d));
    }
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(at) => (&text[..at], text[at + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: BigInt = format!("0{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10u8);
    let mut q = Rational::from_integer(whole);
    if scale >= 0 {
        q *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        q /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -q } else { q })
}

/// Encodes a value: exact text when the number system has one, a JSON number
/// otherwise (or `"inf"`/`"nan"` for non-finite floats).
pub fn value<E: Scalar>(x: &E) -> Value {
    if let Some(s) = x.exact_repr() {
        return Value::String(s);
    }
    let f = x.to_f64();
    if f.is_finite() {
        json!(f)
    } else if f.is_nan() {
        json!("nan")
    } else {
        json!(if f > 0.0 { "inf" } else { "-inf" })
    }
}

pub fn read_value<S: Number>(v: &Value) -> Result<S, CliError> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => return Err(CliError::Format(format!("expected a number, found {other}"))),
    };
    S::parse(&text).ok_or_else(|| CliError::Format(format!("cannot read '{text}' as a {} number", S::MODE)))
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value, CliError> {
    obj.get(key).ok_or_else(|| CliError::Format(format!("missing field '{key}'")))
}

fn read_n(obj: &Value) -> Result<usize, CliError> {
    field(obj, "n")?.as_u64().map(|n| n as usize).ok_or_else(|| CliError::Format("'n' must be a count".into()))
}

/// Subset key: labels concatenated, comma separated once a label exceeds 9.
pub fn subset_key(s: LeafSet) -> String {
    s.to_string()
}

pub fn parse_subset_key(key: &str) -> Result<LeafSet, CliError> {
    let bad = || CliError::Format(format!("bad subset key '{key}'"));
    let labels: Vec<usize> = if key.contains(',') {
        key.split(',').map(|l| l.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    } else {
        key.chars().map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad)).collect::<Result<_, _>>()?
    };
    if labels.is_empty() || labels.contains(&0) {
        return Err(bad());
    }
    Ok(LeafSet::from_labels(labels))
}

pub fn table_to_json<S: Scalar>(p: &ProbTable<S>) -> Value {
    json!({
        "n": p.n(),
        "order": TABLE_ORDER,
        "p": p.to_external().iter().map(value).collect::<Vec<_>>(),
    })
}

/// Reads a table document, or the `table` member of a sample document.
pub fn table_from_json<S: Number>(doc: &Value) -> Result<ProbTable<S>, CliError> {
    if doc.get("p").is_none() {
        if let Some(inner) = doc.get("table") {
            return table_from_json(inner);
        }
    }
    let n = read_n(doc)?;
    if let Some(order) = doc.get("order") {
        if order != TABLE_ORDER {
            return Err(CliError::Format(format!("unsupported table order {order}")));
        }
    }
    let cells = field(doc, "p")?.as_array().ok_or_else(|| CliError::Format("'p' must be an array".into()))?;
    let values = cells.iter().map(read_value).collect::<Result<Vec<S>, _>>()?;
    Ok(ProbTable::from_external(n, values)?)
}

fn subset_map<S: Scalar>(m: &MomentSet<S>) -> Map<String, Value> {
    LeafSet::full(m.n()).subsets().filter(|s| s.len() >= 2).map(|s| (subset_key(s), value(m.get(s)))).collect()
}

pub fn moments_to_json<S: Scalar>(m: &MomentSet<S>) -> Value {
    json!({
        "n": m.n(),
        "kind": m.kind().name(),
        "means": m.means().iter().map(value).collect::<Vec<_>>(),
        "values": subset_map(m),
    })
}

/// Reads a moment document (`kind`, `means`, `values` keyed by subset), or
/// the cumulant part of a `cumulants` report. Unlisted subsets are zero.
pub fn moments_from_json<S: Number>(doc: &Value) -> Result<MomentSet<S>, CliError> {
    let n = read_n(doc)?;
    let (kind, values) = match doc.get("kind") {
        Some(k) => {
            let kind = match k.as_str() {
                Some("cumulant") => MomentKind::Cumulant,
                Some("central") => MomentKind::Central,
                Some("noncentral") => MomentKind::NonCentral,
                _ => return Err(CliError::Format(format!("unknown moment kind {k}"))),
            };
            (kind, field(doc, "values")?)
        }
        None => (MomentKind::Cumulant, field(doc, "cumulant")?),
    };
    let means = field(doc, "means")?
        .as_array()
        .ok_or_else(|| CliError::Format("'means' must be an array".into()))?
        .iter()
        .map(read_value)
        .collect::<Result<Vec<S>, _>>()?;
    let entries = values
        .as_object()
        .ok_or_else(|| CliError::Format("moment values must be an object".into()))?
        .iter()
        .map(|(k, v)| Ok((parse_subset_key(k)?, read_value(v)?)))
        .collect::<Result<Vec<(LeafSet, S)>, CliError>>()?;
    if kind == MomentKind::NonCentral {
        let mut all = vec![S::zero(); 1 << n];
        all[0] = S::one();
        for (i, m) in means.iter().enumerate() {
            all[LeafSet::singleton(i + 1).index()] = m.clone();
        }
        for (s, v) in entries {
            *all.get_mut(s.index()).ok_or_else(|| CliError::Format(format!("subset {s} outside 1..{n}")))? = v;
        }
        return Ok(MomentSet::new(n, kind, all, means)?);
    }
    Ok(MomentSet::from_entries(n, kind, means, entries)?)
}

pub fn theta_to_json<E: Scalar>(t: &TreeTopology, th: &ThetaParams<E>) -> Value {
    let cond: Map<String, Value> = t
        .nodes()
        .filter_map(|v| th.cond[v.0].as_ref().map(|(a, b)| (t.node_name(v), json!([value(a), value(b)]))))
        .collect();
    json!({
        "type": "theta",
        "root": t.node_name(th.root),
        "root_prob": value(&th.root_prob),
        "cond": cond,
    })
}

pub fn omega_to_json<E: Scalar>(t: &TreeTopology, om: &OmegaParams<E>) -> Value {
    let hung = t.orient(om.root);
    let mean_bar: Map<String, Value> = t.nodes().map(|v| (t.node_name(v), value(&om.mean_bar[v.0]))).collect();
    let eta: Map<String, Value> = hung
        .directed_edges()
        .map(|(u, v)| (format!("{}->{}", t.node_name(u), t.node_name(v)), value(om.eta_into(v))))
        .collect();
    json!({
        "type": "omega",
        "root": t.node_name(om.root),
        "mean_bar": mean_bar,
        "eta": eta,
    })
}

/// Parameters as given in a file, in either coordinate system.
#[derive(Clone, Debug, PartialEq)]
pub enum Params<S> {
    Theta(ThetaParams<S>),
    Omega(OmegaParams<S>),
}

fn object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>, CliError> {
    v.as_object().ok_or_else(|| CliError::Format(format!("'{what}' must be an object")))
}

/// Reads θ (`root`, `root_prob`, `cond`) or ω (`root`, `mean_bar`, `eta`),
/// or the `theta` member of a sample document.
pub fn params_from_json<S: Number>(t: &TreeTopology, doc: &Value) -> Result<Params<S>, CliError> {
    if doc.get("root").is_none() {
        if let Some(inner) = doc.get("theta") {
            return params_from_json(t, inner);
        }
    }
    let root_name =
        field(doc, "root")?.as_str().ok_or_else(|| CliError::Format("'root' must be a node name".into()))?;
    let root = t.parse_node(root_name)?;
    let hung = t.orient(root);
    let nodes = t.node_count();
    if let Some(cond) = doc.get("cond") {
        let cond = object(cond, "cond")?;
        let mut out: Vec<Option<(S, S)>> = vec![None; nodes];
        for (name, pair) in cond {
            let v = t.parse_node(name)?;
            let pair = pair.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                CliError::Format(format!("conditional pair for {name} must be [theta_1|0, theta_1|1]"))
            })?;
            out[v.0] = Some((read_value(&pair[0])?, read_value(&pair[1])?));
        }
        if let Some(v) = t.nodes().find(|&v| (v == root) != out[v.0].is_none()) {
            return Err(CliError::Format(format!("conditional pair for {} missing or misplaced", t.node_name(v))));
        }
        let root_prob = read_value(field(doc, "root_prob")?)?;
        return Ok(Params::Theta(ThetaParams { root, root_prob, cond: out }));
    }
    let means = object(field(doc, "mean_bar")?, "mean_bar")?;
    let mut mean_bar: Vec<Option<S>> = vec![None; nodes];
    for (name, x) in means {
        mean_bar[t.parse_node(name)?.0] = Some(read_value(x)?);
    }
    let mean_bar = mean_bar
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| CliError::Format(format!("mean_bar missing for {}", t.node_name(NodeId(i))))))
        .collect::<Result<Vec<S>, _>>()?;
    let etas = object(field(doc, "eta")?, "eta")?;
    let mut eta: Vec<Option<S>> = vec![None; nodes];
    for (name, x) in etas {
        let (u, v) =
            name.split_once("->").ok_or_else(|| CliError::Format(format!("edge key '{name}' is not 'u->v'")))?;
        let (u, v) = (t.parse_node(u)?, t.parse_node(v)?);
        if hung.parent[v.0] != Some(u) {
            return Err(CliError::Format(format!("'{name}' is not an edge directed away from the root")));
        }
        eta[v.0] = Some(read_value(x)?);
    }
    if let Some(v) = t.nodes().find(|&v| v != root && eta[v.0].is_none()) {
        return Err(CliError::Format(format!("eta missing on the edge into {}", t.node_name(v))));
    }
    Ok(Params::Omega(OmegaParams { root, mean_bar, eta }))
}

pub fn distance_token(d: Distance) -> String {
    d.to_string()
}

pub fn distances_to_json(delta: &TreeMetricMap) -> Value {
    let rows: Vec<Value> = delta
        .rows()
        .iter()
        .map(|row| {
            Value::Array(
                row.iter()
                    .map(|&d| match d {
                        Distance::Finite(x) => json!(x),
                        Distance::Infinite => json!("inf"),
                    })
                    .collect(),
            )
        })
        .collect();
    Value::Array(rows)
}

/// CSV with a header row of leaf labels and `inf` for infinite distances.
pub fn distances_to_csv(delta: &TreeMetricMap) -> String {
    let n = delta.n();
    let mut out = String::from("leaf");
    for j in 1..=n {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for (i, row) in delta.rows().iter().enumerate() {
        out.push_str(&(i + 1).to_string());
        for &d in row {
            out.push(',');
            out.push_str(&distance_token(d));
        }
        out.push('\n');
    }
    out
}

/// CSV of a labelled matrix; row and column headers are binary cell strings
/// or subset keys as supplied.
pub fn matrix_to_csv<S: Scalar>(rows: &[String], cols: &[String], m: &[Vec<S>]) -> String {
    let mut out = String::from("row");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, row) in rows.iter().zip(m) {
        out.push_str(r);
        for x in row {
            out.push(',');
            out.push_str(&x.exact_repr().unwrap_or_else(|| x.to_string()));
        }
        out.push('\n');
    }
    out
}

/// Renders a value for text output.
pub fn show<E: Scalar>(x: &E) -> String {
    let f = x.to_f64() + 0.0;
    match x.exact_repr() {
        Some(s) => format!("{s} (~{f:.6e})"),
        None => format!("{f:.6e}"),
    }
}

/// Values on nonempty subsets in table order (cell `α` of the subset).
pub fn keyed<S: Scalar>(m: &MomentSet<S>) -> Vec<(LeafSet, S)> {
    let n = m.n();
    (1..1usize << n).map(|k| LeafSet::from_external_index(k, n)).map(|s| (s, m.get(s).clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse_rational("0.0704"), Some(q(704, 10000)));
        assert_eq!(parse_rational("-1.5e-3"), Some(q(-3, 2000)));
        assert_eq!(parse_rational("2E2"), Some(q(200, 1)));
        assert_eq!(parse_rational("7/-14"), Some(q(-1, 2)));
        assert_eq!(parse_rational(".5"), Some(q(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("0x1"), None);
        assert_eq!(parse_rational("."), None);
    }

    #[test]
    fn subset_keys() {
        assert_eq!(parse_subset_key("124").unwrap(), LeafSet::from_labels([1, 2, 4]));
        assert_eq!(parse_subset_key("3,11").unwrap(), LeafSet::from_labels([3, 11]));
        assert!(parse_subset_key("1a").is_err());
        assert_eq!(subset_key(LeafSet::from_labels([2, 3, 4])), "234");
    }

    #[test]
    fn table_round_trip() {
        let p = ProbTable::from_external(2, vec![q(1, 8), q(3, 8), q(1, 4), q(1, 4)]).unwrap();
        let doc = table_to_json(&p);
        assert_eq!(doc["p"][1], json!("3/8"));
        assert_eq!(table_from_json::<Rational>(&doc).unwrap(), p);
    }

    #[test]
    fn params_round_trip() {
        let t = hmtree_core::tree::parse_newick("((1,2),(3,4));").unwrap();
        let root = t.root().unwrap();
        let th = ThetaParams {
            root,
            root_prob: q(1, 3),
            cond: t.nodes().map(|v| (v != root).then(|| (q(v.0 as i64, 10), q(1, 2)))).collect(),
        };
        let doc = theta_to_json(&t, &th);
        assert_eq!(params_from_json::<Rational>(&t, &doc).unwrap(), Params::Theta(th.clone()));
        let om = hmtree_core::model::theta_to_omega(&t, &th).unwrap();
        let doc = omega_to_json(&t, &om);
        assert_eq!(params_from_json::<Rational>(&t, &doc).unwrap(), Params::Omega(om));
    }
}
