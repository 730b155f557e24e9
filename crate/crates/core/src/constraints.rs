//! Include/exclude constraints, bias detection and repair of explanations.

use serde::{Deserialize, Serialize};

use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::explanation::{ore, Explanation, SolverKind, Trace};
use crate::oracle::{EntailmentOracle, Query};
use crate::text::TextInput;
use crate::WordSet;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    /// Words every explanation must contain.
    #[serde(default)]
    pub include: WordSet,
    /// Words no explanation may contain.
    #[serde(default)]
    pub exclude: WordSet,
}

impl ConstraintSpec {
    pub fn new(include: WordSet, exclude: WordSet) -> Result<Self> {
        if let Some(w) = include.intersection(&exclude).next() {
            return Err(Error::InvalidInput(format!(
                "word {w} is both included and excluded"
            )));
        }
        Ok(Self { include, exclude })
    }

    pub fn validate(&self, num_words: usize) -> Result<()> {
        Self::new(self.include.clone(), self.exclude.clone())?;
        for &index in self.include.iter().chain(&self.exclude) {
            if index >= num_words {
                return Err(Error::InvalidIndex {
                    index,
                    len: num_words,
                });
            }
        }
        Ok(())
    }
}

/// Costs under which any explanation touching `exclude` is dearer than
/// every explanation avoiding it.
pub fn lift_exclude_cost(cost: &CostFunction, exclude: &WordSet) -> CostFunction {
    let allowed: f64 = (0..cost.len())
        .filter(|w| !exclude.contains(w))
        .map(|w| cost.cost(w))
        .sum();
    let costs = (0..cost.len())
        .map(|w| {
            if exclude.contains(&w) {
                allowed + 1.0
            } else {
                cost.cost(w)
            }
        })
        .collect();
    CostFunction::new(costs).expect("lifted costs stay positive")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVerdict {
    pub biased: bool,
    /// Cheapest robust explanation avoiding the protected words, when unbiased.
    pub witness: Option<Explanation>,
    /// A point keeping every unprotected word fixed that changes the
    /// prediction, when biased and the oracle supplies one.
    pub counterexample: Option<Vec<f64>>,
    /// Protected words the counterexample moved.
    pub moved: WordSet,
}

/// The decision is biased on `protected` iff fixing every other word is
/// not enough to guarantee it.
pub fn detect_bias<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    protected: &WordSet,
    cost: &CostFunction,
    solver: SolverKind,
) -> Result<BiasVerdict> {
    let n = oracle.num_words();
    cost.check_len(n)?;
    cost.check_set(protected)?;
    let rest: WordSet = (0..n).filter(|w| !protected.contains(w)).collect();
    match oracle.query(&rest)? {
        Query::Violated { support, point } => Ok(BiasVerdict {
            biased: true,
            witness: None,
            counterexample: point,
            moved: support,
        }),
        Query::Robust => {
            let spec = ConstraintSpec::new(WordSet::new(), protected.clone())?;
            let witness = ore(oracle, cost, &spec, solver)?;
            Ok(BiasVerdict {
                biased: false,
                witness: Some(witness),
                counterexample: None,
                moved: WordSet::new(),
            })
        }
    }
}

/// Cheapest robust extension of `seed`; `seed` itself when already robust.
pub fn repair_explanation<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    seed: &WordSet,
    cost: &CostFunction,
    solver: SolverKind,
) -> Result<Explanation> {
    cost.check_len(oracle.num_words())?;
    cost.check_set(seed)?;
    if oracle.query(seed)?.is_robust() {
        let mut trace = Trace::new(solver);
        trace.queries = 1;
        return Ok(Explanation {
            words: seed.clone(),
            cost: cost.total(seed),
            trace,
        });
    }
    let spec = ConstraintSpec::new(seed.clone(), WordSet::new())?;
    ore(oracle, cost, &spec, solver)
}

/// Positions of the given words in `text`. Every occurrence of a word is
/// selected; a word absent from the text is an error.
pub fn positions_of_words<S: AsRef<str>>(text: &TextInput, words: &[S]) -> Result<WordSet> {
    let mut out = WordSet::new();
    for w in words {
        let found = text.positions_of(w.as_ref());
        if found.is_empty() {
            return Err(Error::UnknownWord(w.as_ref().to_string()));
        }
        out.extend(found);
    }
    Ok(out)
}
