//! Optimal robust explanations for small piecewise-linear text classifiers.
//!
//! An explanation is a set of word positions that, once fixed, guarantees
//! the prediction cannot change however the remaining words move within
//! their embedding-space boxes. This crate computes minimum-cost
//! explanations with two exact solvers (implicit hitting sets and maximum
//! universal subsets), backed by a complete verifier for networks built
//! from affine, ReLU and 1-D convolution layers.

use std::collections::BTreeSet;

pub mod anchors;
pub mod attacks;
pub mod constraints;
pub mod cost;
pub mod error;
pub mod explanation;
pub mod hitting_set;
pub mod model;
pub mod msa;
pub mod oracle;
pub mod text;
pub mod verifier;

/// A set of word positions, iterated in increasing order.
pub type WordSet = BTreeSet<usize>;

pub use attacks::{AttackConfig, SparseAttack};
pub use constraints::{
    detect_bias, lift_exclude_cost, repair_explanation, BiasVerdict, ConstraintSpec,
};
pub use cost::CostFunction;
pub use error::{Error, Result};
pub use explanation::{ore, Explanation, SolverKind, Trace};
pub use hitting_set::{minimum_hitting_set, ore_hs, HittingSetFamily, HsConfig};
pub use model::{Network, Prediction};
pub use msa::{enumerate_all_minimal, ore_msa, MsaConfig};
pub use oracle::{EntailmentOracle, NetworkOracle, OracleConfig, OracleStats, Query};
pub use text::{
    encode, Embeddings, Hyperbox, Metric, PerturbationSpace, PerturbationSpec, TextInput,
};
pub use verifier::{entails, Verdict, Verifier, VerifierConfig};
