//! Entailment oracles: "does fixing these words guarantee the prediction?"
//!
//! The solvers only talk to an [`EntailmentOracle`]. [`NetworkOracle`]
//! answers with the verifier and can propose extra counterexample supports
//! from sparse attacks; [`MinimalSetsOracle`] is a purely combinatorial
//! oracle useful for exercising the solvers on arbitrary monotone instances.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::attacks::{self, AttackConfig};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::text::PerturbationSpace;
use crate::verifier::{Verdict, Verifier, VerifierConfig, DIFF_TOLERANCE};
use crate::WordSet;

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Robust,
    /// `support` holds the free words a counterexample moved; every robust
    /// set of fixed words must intersect it.
    Violated {
        support: WordSet,
        point: Option<Vec<f64>>,
    },
}

impl Query {
    pub fn is_robust(&self) -> bool {
        matches!(self, Query::Robust)
    }
}

pub trait EntailmentOracle: Sync {
    fn num_words(&self) -> usize;

    /// Decides whether fixing `fixed` (and freeing the rest) is robust.
    fn query(&self, fixed: &WordSet) -> Result<Query>;

    /// Additional counterexample supports disjoint from `fixed`, if the
    /// oracle can produce them cheaply.
    fn sparse_supports(&self, _fixed: &WordSet, _count: usize) -> Result<Vec<WordSet>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OracleStats {
    pub queries: usize,
    pub counterexamples: usize,
    pub splits: usize,
    pub lp_solves: usize,
    pub attack_calls: usize,
    pub attack_supports: usize,
}

#[derive(Debug, Default)]
struct Counters {
    queries: AtomicUsize,
    counterexamples: AtomicUsize,
    splits: AtomicUsize,
    lp_solves: AtomicUsize,
    attack_calls: AtomicUsize,
    attack_supports: AtomicUsize,
}

impl Counters {
    fn add(c: &AtomicUsize, n: usize) {
        c.fetch_add(n, Ordering::Relaxed);
    }

    fn snapshot(&self) -> OracleStats {
        OracleStats {
            queries: self.queries.load(Ordering::Relaxed),
            counterexamples: self.counterexamples.load(Ordering::Relaxed),
            splits: self.splits.load(Ordering::Relaxed),
            lp_solves: self.lp_solves.load(Ordering::Relaxed),
            attack_calls: self.attack_calls.load(Ordering::Relaxed),
            attack_supports: self.attack_supports.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub verifier: VerifierConfig,
    pub attack: AttackConfig,
    /// Offer sparse-attack supports to the hitting-set solver.
    pub sparse_attacks: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            verifier: VerifierConfig::default(),
            attack: AttackConfig::default(),
            sparse_attacks: true,
        }
    }
}

/// Entailment oracle for a network, a text and its perturbation space.
#[derive(Debug)]
pub struct NetworkOracle {
    verifier: Verifier,
    space: PerturbationSpace,
    target: usize,
    config: OracleConfig,
    counters: Counters,
}

impl NetworkOracle {
    /// The target is the network's prediction on the unperturbed text.
    pub fn new(net: &Network, space: PerturbationSpace, config: OracleConfig) -> Result<Self> {
        let target = net.forward(space.point())?.label;
        Ok(Self {
            verifier: Verifier::new(net, config.verifier)?,
            space,
            target,
            config,
            counters: Counters::default(),
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn space(&self) -> &PerturbationSpace {
        &self.space
    }

    pub fn network(&self) -> &Network {
        self.verifier.network()
    }

    pub fn stats(&self) -> OracleStats {
        self.counters.snapshot()
    }
}

fn mix_seed(seed: u64, fixed: &WordSet) -> u64 {
    fixed.iter().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, &w| {
        (h ^ (w as u64 + 1)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl EntailmentOracle for NetworkOracle {
    fn num_words(&self) -> usize {
        self.space.num_words()
    }

    fn query(&self, fixed: &WordSet) -> Result<Query> {
        let bx = self.space.fixing(fixed)?;
        let r = self.verifier.check(&bx, self.target, self.space.point())?;
        Counters::add(&self.counters.queries, 1);
        Counters::add(&self.counters.splits, r.splits);
        Counters::add(&self.counters.lp_solves, r.lp_solves);
        match r.verdict {
            Verdict::Robust => Ok(Query::Robust),
            Verdict::CounterExample { point, .. } => {
                Counters::add(&self.counters.counterexamples, 1);
                let mut support = self.space.differing_words(&point, DIFF_TOLERANCE);
                if support.is_empty() {
                    support = (0..self.num_words())
                        .filter(|w| !fixed.contains(w))
                        .collect();
                }
                Ok(Query::Violated {
                    support,
                    point: Some(point),
                })
            }
            Verdict::ResourceExhausted { splits_used } => {
                Err(Error::ResourceExhausted { splits_used })
            }
        }
    }

    fn sparse_supports(&self, fixed: &WordSet, count: usize) -> Result<Vec<WordSet>> {
        if !self.config.sparse_attacks || count == 0 {
            return Ok(Vec::new());
        }
        let config = AttackConfig {
            seed: mix_seed(self.config.attack.seed, fixed),
            ..self.config.attack
        };
        let found = attacks::sparse_attack_batch(
            self.network(),
            &self.space,
            fixed,
            self.target,
            &config,
            count,
        )?;
        Counters::add(&self.counters.attack_calls, 1);
        Counters::add(&self.counters.attack_supports, found.len());
        Ok(found.into_iter().map(|a| a.support).collect())
    }
}

/// Monotone oracle: fixing `E` is robust iff `E` contains one of the given
/// sets. Violations report every free word as the support.
#[derive(Debug, Clone)]
pub struct MinimalSetsOracle {
    num_words: usize,
    robust: Vec<WordSet>,
    queries: std::sync::Arc<AtomicUsize>,
}

impl MinimalSetsOracle {
    pub fn new(num_words: usize, robust: Vec<WordSet>) -> Result<Self> {
        for s in &robust {
            if let Some(&index) = s.iter().find(|&&i| i >= num_words) {
                return Err(Error::InvalidIndex {
                    index,
                    len: num_words,
                });
            }
        }
        Ok(Self {
            num_words,
            robust,
            queries: Default::default(),
        })
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

impl EntailmentOracle for MinimalSetsOracle {
    fn num_words(&self) -> usize {
        self.num_words
    }

    fn query(&self, fixed: &WordSet) -> Result<Query> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        if let Some(&index) = fixed.iter().find(|&&i| i >= self.num_words) {
            return Err(Error::InvalidIndex {
                index,
                len: self.num_words,
            });
        }
        if self.robust.iter().any(|s| s.is_subset(fixed)) {
            return Ok(Query::Robust);
        }
        Ok(Query::Violated {
            support: (0..self.num_words).filter(|w| !fixed.contains(w)).collect(),
            point: None,
        })
    }
}
