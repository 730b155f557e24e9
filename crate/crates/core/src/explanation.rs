use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSpec;
use crate::cost::CostFunction;
use crate::error::Result;
use crate::hitting_set::{ore_hs, HsConfig};
use crate::msa::{ore_msa, MsaConfig};
use crate::oracle::EntailmentOracle;
use crate::WordSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Hs,
    Msa,
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub solver: SolverKind,
    pub queries: usize,
    pub counterexamples: usize,
    /// Hitting-set iterations, or MUS recursion calls.
    pub iterations: usize,
}

impl Trace {
    pub(crate) fn new(solver: SolverKind) -> Self {
        Self {
            solver,
            queries: 0,
            counterexamples: 0,
            iterations: 0,
        }
    }
}

/// A robust set of fixed words with its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub words: WordSet,
    pub cost: f64,
    pub trace: Trace,
}

/// Minimum-cost robust explanation under `constraints` with either solver.
pub fn ore<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    constraints: &ConstraintSpec,
    solver: SolverKind,
) -> Result<Explanation> {
    match solver {
        SolverKind::Hs | SolverKind::Enumerate => {
            ore_hs(oracle, cost, constraints, &HsConfig::default())
        }
        SolverKind::Msa => ore_msa(oracle, cost, constraints, &MsaConfig::default()),
    }
}
