//! Semialgebraic geometry of binary general Markov models on trees.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm of the
//! toolkit: tree combinatorics and Newick parsing, the poset of tree partitions
//! and its Möbius function, the coordinate changes between probabilities,
//! moments and tree cumulants, the conditional-probability and
//! `(μ̄, η)` parametrizations together with the monomial map, the
//! membership certificate (conditions C1 to C5), tree-metric diagnostics,
//! flattening-rank invariants and recovery of the hidden parameters.
//!
//! All numerical code is generic over [`Scalar`], implemented for `f64` and for
//! exact [`Rational`] numbers. Equalities such as the phylogenetic invariants
//! are decidable in the exact mode.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod invariants;
pub mod metrics;
pub mod model;
pub mod poset;
pub mod radical;
pub mod recovery;
pub mod scalar;
pub mod semialgebraic;
pub mod subset;
pub mod transforms;
pub mod tree;

pub use error::{Error, Result};
pub use radical::Radical;
pub use scalar::{Rational, Scalar};
pub use subset::LeafSet;
pub use tree::{Edge, NodeId, Split, TreeTopology};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::model::{OmegaParams, ThetaParams};
    pub use crate::recovery::{recover, RecoverOptions, RecoveryResult};
    pub use crate::scalar::{Rational, Scalar};
    pub use crate::semialgebraic::{certify, Certificate, CertifyOptions, Verdict};
    pub use crate::subset::LeafSet;
    pub use crate::transforms::{MomentKind, MomentSet, ProbTable};
    pub use crate::tree::{Edge, NodeId, Split, TreeTopology};
}
