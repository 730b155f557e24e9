//! Optimal explanations through maximum universal subsets.
//!
//! A universal subset is a set of words that may all be perturbed at once
//! without changing the prediction. Its complement is a robust explanation,
//! so a maximum-cost universal subset yields a minimum-cost explanation. The
//! search is a branch and bound over candidate words with a lower bound `L`
//! on the cost still worth finding.

use crate::constraints::ConstraintSpec;
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::explanation::{Explanation, SolverKind, Trace};
use crate::oracle::EntailmentOracle;
use crate::WordSet;

const COST_EPS: f64 = 1e-9;

/// Largest number of cost-matching subsets [`enumerate_all_minimal`] will test.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsaConfig {
    /// Prune candidates that cannot be freed individually.
    pub shrink: bool,
}

impl Default for MsaConfig {
    fn default() -> Self {
        Self { shrink: true }
    }
}

/// Search state: `bounded` words are currently freed, `candidates` may still
/// join them.
#[derive(Debug, Clone, PartialEq)]
pub struct MusState {
    pub bounded: WordSet,
    pub candidates: Vec<usize>,
    pub lower: f64,
}

struct Search<'a, O: ?Sized> {
    oracle: &'a O,
    cost: &'a CostFunction,
    config: MsaConfig,
    trace: Trace,
}

impl<O: EntailmentOracle + ?Sized> Search<'_, O> {
    fn free_is_robust(&mut self, free: &WordSet) -> Result<bool> {
        let fixed: WordSet = (0..self.oracle.num_words())
            .filter(|w| !free.contains(w))
            .collect();
        self.trace.queries += 1;
        let robust = self.oracle.query(&fixed)?.is_robust();
        if !robust {
            self.trace.counterexamples += 1;
        }
        Ok(robust)
    }

    fn shrink(&mut self, bounded: &WordSet, candidates: &[usize]) -> Result<Vec<usize>> {
        if !self.config.shrink {
            return Ok(candidates.to_vec());
        }
        let mut kept = Vec::with_capacity(candidates.len());
        for &w in candidates {
            let mut free = bounded.clone();
            free.insert(w);
            if self.free_is_robust(&free)? {
                kept.push(w);
            }
        }
        Ok(kept)
    }

    fn mus(
        &mut self,
        bounded: &mut WordSet,
        candidates: &[usize],
        mut lower: f64,
    ) -> Result<WordSet> {
        self.trace.iterations += 1;
        let Some((&w, rest)) = candidates.split_first() else {
            return Ok(WordSet::new());
        };
        if self.cost.total(candidates) <= lower + COST_EPS {
            return Ok(WordSet::new());
        }
        let mut best = WordSet::new();
        bounded.insert(w);
        if self.free_is_robust(bounded)? {
            let narrowed = self.shrink(bounded, rest)?;
            let mut y = self.mus(bounded, &narrowed, lower - self.cost.cost(w))?;
            let with_w = self.cost.total(&y) + self.cost.cost(w);
            if with_w > lower + COST_EPS {
                y.insert(w);
                best = y;
                lower = with_w;
            }
        }
        bounded.remove(&w);
        let y = self.mus(bounded, rest, lower)?;
        if self.cost.total(&y) > lower + COST_EPS {
            best = y;
        }
        Ok(best)
    }
}

/// Candidate order: cost descending, ties by index descending.
fn ordered(words: impl IntoIterator<Item = usize>, cost: &CostFunction) -> Vec<usize> {
    let mut v: Vec<usize> = words.into_iter().collect();
    v.sort_by(|&a, &b| cost.cost(b).total_cmp(&cost.cost(a)).then(b.cmp(&a)));
    v
}

/// Maximum-cost subset of `state.candidates` that can be freed together
/// with `state.bounded`, or the empty set if none beats `state.lower`.
pub fn mus<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    state: &MusState,
    config: &MsaConfig,
) -> Result<WordSet> {
    let mut search = Search {
        oracle,
        cost,
        config: *config,
        trace: Trace::new(SolverKind::Msa),
    };
    search.mus(&mut state.bounded.clone(), &state.candidates, state.lower)
}

/// Candidates that can each be freed on their own alongside `state.bounded`.
pub fn shrink<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    state: &MusState,
) -> Result<Vec<usize>> {
    let mut search = Search {
        oracle,
        cost,
        config: MsaConfig { shrink: true },
        trace: Trace::new(SolverKind::Msa),
    };
    search.shrink(&state.bounded, &state.candidates)
}

/// Optimal explanation as the complement of a maximum universal subset.
pub fn ore_msa<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    constraints: &ConstraintSpec,
    config: &MsaConfig,
) -> Result<Explanation> {
    let n = oracle.num_words();
    cost.check_len(n)?;
    constraints.validate(n)?;
    let mut search = Search {
        oracle,
        cost,
        config: *config,
        trace: Trace::new(SolverKind::Msa),
    };
    let mut bounded = constraints.exclude.clone();
    if !search.free_is_robust(&bounded)? {
        return Err(Error::Infeasible(
            "fixing every word outside the excluded set is not robust".into(),
        ));
    }
    let candidates = ordered(
        (0..n).filter(|w| !constraints.include.contains(w) && !constraints.exclude.contains(w)),
        cost,
    );
    let candidates = search.shrink(&bounded, &candidates)?;
    let universal = search.mus(&mut bounded, &candidates, 0.0)?;
    let words: WordSet = (0..n)
        .filter(|w| !universal.contains(w) && !constraints.exclude.contains(w))
        .collect();
    search.trace.queries += 1;
    if !oracle.query(&words)?.is_robust() {
        return Err(Error::InvalidInput("oracle is not monotone".into()));
    }
    Ok(Explanation {
        cost: cost.total(&words),
        words,
        trace: search.trace,
    })
}

fn cost_matching(cost: &CostFunction, target: f64, limit: usize) -> Result<Vec<WordSet>> {
    fn go(
        i: usize,
        acc: f64,
        cost: &CostFunction,
        target: f64,
        chosen: &mut Vec<usize>,
        out: &mut Vec<WordSet>,
        limit: usize,
    ) -> Result<()> {
        if acc > target + COST_EPS {
            return Ok(());
        }
        if (acc - target).abs() <= COST_EPS {
            if out.len() == limit {
                return Err(Error::InvalidInput(format!(
                    "more than {limit} subsets match the optimal cost"
                )));
            }
            out.push(chosen.iter().copied().collect());
            return Ok(());
        }
        if i == cost.len() {
            return Ok(());
        }
        chosen.push(i);
        go(i + 1, acc + cost.cost(i), cost, target, chosen, out, limit)?;
        chosen.pop();
        go(i + 1, acc, cost, target, chosen, out, limit)
    }
    let mut out = Vec::new();
    go(0, 0.0, cost, target, &mut Vec::new(), &mut out, limit)?;
    Ok(out)
}

/// Every robust explanation whose cost equals `optimum`, sorted
/// lexicographically by index sequence.
pub fn enumerate_all_minimal<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    optimum: f64,
) -> Result<Vec<Explanation>> {
    cost.check_len(oracle.num_words())?;
    let mut out = Vec::new();
    for words in cost_matching(cost, optimum, ENUMERATION_LIMIT)? {
        let mut trace = Trace::new(SolverKind::Enumerate);
        trace.queries = 1;
        if oracle.query(&words)?.is_robust() {
            out.push(Explanation {
                cost: cost.total(&words),
                words,
                trace,
            });
        }
    }
    out.sort_by(|a, b| a.words.cmp(&b.words));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hitting_set::{ore_hs, HsConfig};
    use crate::model::fixtures::{first_word_net, sum_net};
    use crate::model::Network;
    use crate::oracle::{MinimalSetsOracle, NetworkOracle, OracleConfig};
    use crate::text::fixtures::toy_embeddings;
    use crate::text::{encode, PerturbationSpace, PerturbationSpec};
    use proptest::prelude::*;

    fn set(items: &[usize]) -> WordSet {
        items.iter().copied().collect()
    }

    fn oracle(net: &Network, words: &[&str], eps: f64) -> NetworkOracle {
        let emb = toy_embeddings();
        let t = encode(words, 2, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(eps), &emb).unwrap();
        NetworkOracle::new(net, space, OracleConfig::default()).unwrap()
    }

    fn start(n: usize) -> MusState {
        MusState {
            bounded: WordSet::new(),
            candidates: ordered(0..n, &CostFunction::uniform(n)),
            lower: 0.0,
        }
    }

    #[test]
    fn mus_examples() {
        let c = CostFunction::uniform(2);
        let run = |eps| {
            mus(
                &oracle(&sum_net(), &["good", "good"], eps),
                &c,
                &start(2),
                &MsaConfig::default(),
            )
            .unwrap()
        };
        assert_eq!(run(1.5), set(&[1]));
        assert_eq!(run(3.0), set(&[]));
        assert_eq!(run(0.5), set(&[0, 1]));
    }

    #[test]
    fn shrink_examples() {
        let c = CostFunction::uniform(2);
        let sum = |eps| shrink(&oracle(&sum_net(), &["good", "good"], eps), &c, &start(2)).unwrap();
        assert_eq!(sum(3.0), Vec::<usize>::new());
        assert_eq!(sum(0.5), vec![1, 0]);
        let fw = oracle(&first_word_net(), &["good", "bad"], 1.5);
        assert_eq!(shrink(&fw, &c, &start(2)).unwrap(), vec![1]);
    }

    #[test]
    fn ore_msa_examples() {
        let c = CostFunction::uniform(2);
        let none = ConstraintSpec::default();
        let e = ore_msa(
            &oracle(&sum_net(), &["good", "good"], 1.5),
            &c,
            &none,
            &MsaConfig::default(),
        )
        .unwrap();
        assert_eq!((e.words, e.cost), (set(&[0]), 1.0));
        let e = ore_msa(
            &oracle(&sum_net(), &["good", "good"], 3.0),
            &c,
            &none,
            &MsaConfig::default(),
        )
        .unwrap();
        assert_eq!(e.words, set(&[0, 1]));
        let excl = ConstraintSpec::new(set(&[]), set(&[0])).unwrap();
        assert!(matches!(
            ore_msa(
                &oracle(&first_word_net(), &["good", "bad"], 1.5),
                &c,
                &excl,
                &MsaConfig::default()
            ),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn msa_constraints() {
        let c = CostFunction::uniform(2);
        let o = oracle(&sum_net(), &["good", "good"], 1.5);
        let incl = ConstraintSpec::new(set(&[1]), set(&[])).unwrap();
        assert_eq!(
            ore_msa(&o, &c, &incl, &MsaConfig::default()).unwrap().words,
            set(&[1])
        );
        let excl = ConstraintSpec::new(set(&[]), set(&[1])).unwrap();
        assert_eq!(
            ore_msa(&o, &c, &excl, &MsaConfig::default()).unwrap().words,
            set(&[0])
        );
    }

    #[test]
    fn enumeration_examples() {
        let c = CostFunction::uniform(2);
        let words = |v: Vec<Explanation>| v.into_iter().map(|e| e.words).collect::<Vec<_>>();
        let o = oracle(&sum_net(), &["good", "good"], 1.5);
        assert_eq!(
            words(enumerate_all_minimal(&o, &c, 1.0).unwrap()),
            vec![set(&[0]), set(&[1])]
        );
        let o = oracle(&sum_net(), &["good", "good"], 0.5);
        assert_eq!(
            words(enumerate_all_minimal(&o, &c, 0.0).unwrap()),
            vec![set(&[])]
        );
    }

    #[test]
    fn enumeration_guard() {
        let c = CostFunction::uniform(3);
        assert!(cost_matching(&c, 1.0, 2).is_err());
        assert_eq!(cost_matching(&c, 1.0, 3).unwrap().len(), 3);
    }

    #[test]
    fn shrink_off_gives_same_answer() {
        let c = CostFunction::uniform(2);
        for eps in [0.5, 1.5, 3.0] {
            let o = oracle(&sum_net(), &["good", "great"], eps);
            let a = ore_msa(
                &o,
                &c,
                &ConstraintSpec::default(),
                &MsaConfig { shrink: false },
            )
            .unwrap();
            let b = ore_msa(&o, &c, &ConstraintSpec::default(), &MsaConfig::default()).unwrap();
            assert_eq!(a.words, b.words);
        }
    }

    proptest! {
        #[test]
        fn msa_agrees_with_hs(
            n in 1usize..7,
            robust in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..4), 1..4),
            costs in prop::collection::vec(1u8..4, 6),
            shrink in any::<bool>(),
        ) {
            let robust: Vec<WordSet> = robust
                .into_iter()
                .map(|s| s.into_iter().filter(|&i| i < n).collect())
                .collect();
            let o = MinimalSetsOracle::new(n, robust).unwrap();
            let cost = CostFunction::new(costs[..n].iter().map(|&c| c as f64).collect()).unwrap();
            let none = ConstraintSpec::default();
            let m = ore_msa(&o, &cost, &none, &MsaConfig { shrink }).unwrap();
            let h = ore_hs(&o, &cost, &none, &HsConfig::default()).unwrap();
            prop_assert!((m.cost - h.cost).abs() < 1e-9);
            prop_assert!(o.query(&m.words).unwrap().is_robust());
            let all = enumerate_all_minimal(&o, &cost, h.cost).unwrap();
            prop_assert!(all.iter().any(|e| e.words == m.words));
            prop_assert!(all.iter().any(|e| e.words == h.words));
        }
    }
}
