use alloc::string::String;

use crate::tree::NodeId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("newick syntax error at byte {pos}: {msg}")]
    NewickSyntax { pos: usize, msg: String },
    #[error("leaf label {0} appears more than once")]
    DuplicateLabel(usize),
    #[error("leaf labels must be exactly 1..{n}; label {missing} is missing")]
    MissingLabel { n: usize, missing: usize },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("unknown leaf label {0}")]
    UnknownLeaf(usize),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("leaves must be distinct")]
    RepeatedLeaf,
    #[error("the tree has no root")]
    Unrooted,
    #[error("edge ({0}, {1}) is not an edge of the tree")]
    NotAnEdge(NodeId, NodeId),
    #[error("edge ({0}, {1}) is a pendant edge and cannot be contracted")]
    PendantEdge(NodeId, NodeId),
    #[error("operation needs a trivalent tree; node {0} has degree {1}")]
    NotTrivalent(NodeId, usize),
    #[error("partitions are over different ground sets")]
    GroundSetMismatch,
    #[error("partition is not an element of this poset")]
    NotInPoset,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("probability table does not sum to one")]
    NotNormalized,
    #[error("moment set has kind {found}, expected {expected}")]
    WrongMomentKind { expected: &'static str, found: &'static str },
    #[error("variance of leaf {0} vanishes, correlation undefined")]
    ZeroVariance(usize),
    #[error("sign map violates the triple condition on ({0}, {1}, {2})")]
    InfeasibleSigns(usize, usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("too many leaves: {0} (at most {1} supported)")]
    TooManyLeaves(usize, usize),
}
