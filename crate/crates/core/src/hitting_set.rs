//! Implicit hitting-set search for optimal explanations.
//!
//! Every counterexample moves some set of free words, and any robust
//! explanation must fix at least one of them. The solver keeps the family
//! of such sets, repeatedly proposes a minimum-cost hitting set and asks
//! the oracle about it. The first robust proposal is optimal.

use crate::constraints::{lift_exclude_cost, ConstraintSpec};
use crate::cost::CostFunction;
use crate::error::{Error, Result};
use crate::explanation::{Explanation, SolverKind, Trace};
use crate::oracle::{EntailmentOracle, Query};
use crate::WordSet;

const COST_EPS: f64 = 1e-9;

/// Counterexample supports collected so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HittingSetFamily {
    universe: usize,
    sets: Vec<WordSet>,
}

impl HittingSetFamily {
    pub fn new(universe: usize) -> Self {
        Self {
            universe,
            sets: Vec::new(),
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn sets(&self) -> &[WordSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Adds `set` unless an equal set is present. Returns whether it was added.
    pub fn insert(&mut self, set: WordSet) -> Result<bool> {
        if set.is_empty() {
            return Err(Error::InvalidInput(
                "empty set in hitting-set family".into(),
            ));
        }
        if let Some(&index) = set.iter().find(|&&i| i >= self.universe) {
            return Err(Error::InvalidIndex {
                index,
                len: self.universe,
            });
        }
        if self.sets.contains(&set) {
            return Ok(false);
        }
        self.sets.push(set);
        Ok(true)
    }

    pub fn is_hit_by(&self, candidate: &WordSet) -> bool {
        self.sets.iter().all(|s| !s.is_disjoint(candidate))
    }
}

/// `(cost, cardinality)` ordering with a cost tolerance.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 - COST_EPS || (a.0 <= b.0 + COST_EPS && a.1 < b.1)
}

struct Instance<'a> {
    sets: Vec<Vec<usize>>,
    cost: &'a [f64],
    n: usize,
}

impl Instance<'_> {
    /// Cost and size lower bounds from greedily packed disjoint sets; `None`
    /// if some set has no allowed element left.
    fn packing_bound(&self, unhit: &[usize], banned: &[bool]) -> Option<(f64, usize)> {
        let mut order: Vec<(usize, usize)> = Vec::with_capacity(unhit.len());
        for &s in unhit {
            let live = self.sets[s].iter().filter(|&&e| !banned[e]).count();
            if live == 0 {
                return None;
            }
            order.push((live, s));
        }
        order.sort_unstable();
        let mut used = vec![false; self.n];
        let (mut cost, mut card) = (0.0, 0);
        for (_, s) in order {
            let live = self.sets[s].iter().filter(|&&e| !banned[e]);
            if live.clone().any(|&e| used[e]) {
                continue;
            }
            let mut cheapest = f64::INFINITY;
            for &e in live {
                used[e] = true;
                cheapest = cheapest.min(self.cost[e]);
            }
            cost += cheapest;
            card += 1;
        }
        Some((cost, card))
    }

    fn greedy(&self) -> (f64, usize) {
        let mut unhit: Vec<usize> = (0..self.sets.len()).collect();
        let (mut cost, mut card) = (0.0, 0);
        while !unhit.is_empty() {
            let mut degree = vec![0usize; self.n];
            for &s in &unhit {
                for &e in &self.sets[s] {
                    degree[e] += 1;
                }
            }
            let e = (0..self.n)
                .filter(|&e| degree[e] > 0)
                .max_by(|&a, &b| {
                    (degree[a] as f64 / self.cost[a])
                        .total_cmp(&(degree[b] as f64 / self.cost[b]))
                        .then(b.cmp(&a))
                })
                .expect("unhit sets are non-empty");
            cost += self.cost[e];
            card += 1;
            unhit.retain(|&s| !self.sets[s].contains(&e));
        }
        (cost, card)
    }

    fn branch_and_bound(
        &self,
        unhit: &[usize],
        banned: &mut [bool],
        at: (f64, usize),
        best: &mut (f64, usize),
    ) {
        if unhit.is_empty() {
            if better(at, *best) {
                *best = at;
            }
            return;
        }
        let Some((lc, lk)) = self.packing_bound(unhit, banned) else {
            return;
        };
        let bound = (at.0 + lc, at.1 + lk);
        if bound.0 > best.0 + COST_EPS || (bound.0 >= best.0 - COST_EPS && bound.1 >= best.1) {
            return;
        }
        let mut degree = vec![0usize; self.n];
        for &s in unhit {
            for &e in &self.sets[s] {
                if !banned[e] {
                    degree[e] += 1;
                }
            }
        }
        let e = (0..self.n)
            .max_by(|&a, &b| degree[a].cmp(&degree[b]).then(b.cmp(&a)))
            .expect("non-empty universe");
        let rest: Vec<usize> = unhit
            .iter()
            .copied()
            .filter(|&s| !self.sets[s].contains(&e))
            .collect();
        self.branch_and_bound(&rest, banned, (at.0 + self.cost[e], at.1 + 1), best);
        banned[e] = true;
        self.branch_and_bound(unhit, banned, at, best);
        banned[e] = false;
    }

    /// First set in index order (include before exclude) that hits
    /// everything with cost `opt.0` and size `opt.1`.
    fn first_optimal(
        &self,
        i: usize,
        unhit: &[usize],
        chosen: &mut Vec<usize>,
        at: (f64, usize),
        opt: (f64, usize),
    ) -> bool {
        if unhit.is_empty() {
            return at.0 <= opt.0 + COST_EPS && at.1 <= opt.1;
        }
        if i == self.n
            || unhit
                .iter()
                .any(|&s| *self.sets[s].last().expect("non-empty") < i)
        {
            return false;
        }
        let banned: Vec<bool> = (0..self.n).map(|e| e < i).collect();
        match self.packing_bound(unhit, &banned) {
            Some((lc, lk)) if at.0 + lc <= opt.0 + COST_EPS && at.1 + lk <= opt.1 => {}
            _ => return false,
        }
        let rest: Vec<usize> = unhit
            .iter()
            .copied()
            .filter(|&s| !self.sets[s].contains(&i))
            .collect();
        if rest.len() < unhit.len() {
            chosen.push(i);
            if self.first_optimal(i + 1, &rest, chosen, (at.0 + self.cost[i], at.1 + 1), opt) {
                return true;
            }
            chosen.pop();
        }
        self.first_optimal(i + 1, unhit, chosen, at, opt)
    }
}

/// Minimum-cost set hitting every member of `family`. Ties go to the
/// smaller set, then to the lexicographically smallest index sequence.
///
/// Panics if `cost` covers fewer words than the family's universe.
pub fn minimum_hitting_set(family: &HittingSetFamily, cost: &CostFunction) -> WordSet {
    minimum_hitting_set_with(family, cost, &WordSet::new())
}

/// As [`minimum_hitting_set`], with `forced` included in the result.
pub fn minimum_hitting_set_with(
    family: &HittingSetFamily,
    cost: &CostFunction,
    forced: &WordSet,
) -> WordSet {
    assert!(cost.len() >= family.universe, "cost function too short");
    let inst = Instance {
        sets: family
            .sets
            .iter()
            .filter(|s| s.is_disjoint(forced))
            .map(|s| s.iter().copied().collect())
            .collect(),
        cost: cost.costs(),
        n: family.universe,
    };
    let mut result = forced.clone();
    if inst.sets.is_empty() {
        return result;
    }
    let all: Vec<usize> = (0..inst.sets.len()).collect();
    let mut best = inst.greedy();
    inst.branch_and_bound(&all, &mut vec![false; inst.n], (0.0, 0), &mut best);
    let mut chosen = Vec::new();
    let found = inst.first_optimal(0, &all, &mut chosen, (0.0, 0), best);
    assert!(found, "an optimal hitting set exists");
    result.extend(chosen);
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HsConfig {
    /// Sparse-attack supports requested per iteration.
    pub batch: usize,
    pub max_iterations: usize,
}

impl Default for HsConfig {
    fn default() -> Self {
        Self {
            batch: 8,
            max_iterations: 100_000,
        }
    }
}

/// Optimal explanation by implicit hitting sets.
pub fn ore_hs<O: EntailmentOracle + ?Sized>(
    oracle: &O,
    cost: &CostFunction,
    constraints: &ConstraintSpec,
    config: &HsConfig,
) -> Result<Explanation> {
    let n = oracle.num_words();
    cost.check_len(n)?;
    constraints.validate(n)?;
    let lifted;
    let search_cost = if constraints.exclude.is_empty() {
        cost
    } else {
        lifted = lift_exclude_cost(cost, &constraints.exclude);
        &lifted
    };
    let mut family = HittingSetFamily::new(n);
    let mut trace = Trace::new(SolverKind::Hs);
    while trace.iterations < config.max_iterations {
        trace.iterations += 1;
        let candidate = minimum_hitting_set_with(&family, search_cost, &constraints.include);
        trace.queries += 1;
        match oracle.query(&candidate)? {
            Query::Robust => {
                if !candidate.is_disjoint(&constraints.exclude) {
                    return Err(Error::Infeasible(
                        "every robust explanation contains an excluded word".into(),
                    ));
                }
                return Ok(Explanation {
                    cost: cost.total(&candidate),
                    words: candidate,
                    trace,
                });
            }
            Query::Violated { support, .. } => {
                trace.counterexamples += 1;
                if !support.is_disjoint(&candidate) || !family.insert(support)? {
                    return Err(Error::InvalidInput(
                        "oracle reported a counterexample support that moves fixed words".into(),
                    ));
                }
                for s in oracle.sparse_supports(&candidate, config.batch)? {
                    if !s.is_empty() && s.is_disjoint(&candidate) {
                        family.insert(s)?;
                    }
                }
            }
        }
    }
    Err(Error::IterationLimit {
        iterations: trace.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::sum_net;
    use crate::oracle::{MinimalSetsOracle, NetworkOracle, OracleConfig};
    use crate::text::fixtures::toy_embeddings;
    use crate::text::{encode, PerturbationSpace, PerturbationSpec};
    use proptest::prelude::*;

    fn set(items: &[usize]) -> WordSet {
        items.iter().copied().collect()
    }

    fn family(universe: usize, sets: &[&[usize]]) -> HittingSetFamily {
        let mut f = HittingSetFamily::new(universe);
        for s in sets {
            f.insert(set(s)).unwrap();
        }
        f
    }

    fn sum_oracle(words: &[&str], eps: f64) -> NetworkOracle {
        let emb = toy_embeddings();
        let t = encode(words, 2, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(eps), &emb).unwrap();
        NetworkOracle::new(&sum_net(), space, OracleConfig::default()).unwrap()
    }

    #[test]
    fn mhs_examples() {
        let uniform = CostFunction::uniform(3);
        assert_eq!(minimum_hitting_set(&family(3, &[]), &uniform), set(&[]));
        assert_eq!(
            minimum_hitting_set(&family(3, &[&[0, 1], &[1, 2]]), &uniform),
            set(&[1])
        );
        let skewed = CostFunction::new(vec![5.0, 1.0]).unwrap();
        assert_eq!(
            minimum_hitting_set(&family(2, &[&[0, 1]]), &skewed),
            set(&[1])
        );
    }

    #[test]
    fn mhs_ties_are_lexicographic() {
        let f = family(4, &[&[0, 3], &[1, 2], &[0, 1]]);
        assert_eq!(
            minimum_hitting_set(&f, &CostFunction::uniform(4)),
            set(&[0, 1])
        );
        let f = family(4, &[&[1, 3], &[2, 3]]);
        assert_eq!(
            minimum_hitting_set(&f, &CostFunction::uniform(4)),
            set(&[3])
        );
    }

    #[test]
    fn mhs_prefers_fewer_words_at_equal_cost() {
        let c = CostFunction::new(vec![1.0, 1.0, 2.0]).unwrap();
        let f = family(3, &[&[0, 2], &[1, 2]]);
        assert_eq!(minimum_hitting_set(&f, &c), set(&[2]));
    }

    #[test]
    fn forced_words_are_kept() {
        let f = family(3, &[&[0, 1], &[1, 2]]);
        let r = minimum_hitting_set_with(&f, &CostFunction::uniform(3), &set(&[0]));
        assert_eq!(r, set(&[0, 1]));
        let r = minimum_hitting_set_with(&f, &CostFunction::uniform(3), &set(&[0, 2]));
        assert_eq!(r, set(&[0, 2]));
    }

    #[test]
    fn family_rejects_bad_sets() {
        let mut f = HittingSetFamily::new(2);
        assert!(f.insert(set(&[])).is_err());
        assert!(f.insert(set(&[2])).is_err());
        assert!(f.insert(set(&[1])).unwrap());
        assert!(!f.insert(set(&[1])).unwrap());
        assert!(f.is_hit_by(&set(&[1])));
        assert!(!f.is_hit_by(&set(&[0])));
    }

    #[test]
    fn sum_examples() {
        let none = ConstraintSpec::default();
        let c = CostFunction::uniform(2);
        let hs = |words: &[&str], eps| {
            ore_hs(&sum_oracle(words, eps), &c, &none, &HsConfig::default()).unwrap()
        };
        let e = hs(&["good", "good"], 0.5);
        assert_eq!((e.words, e.cost), (set(&[]), 0.0));
        let e = hs(&["good", "good"], 1.5);
        assert_eq!((e.words, e.cost), (set(&[0]), 1.0));
        let e = hs(&["good", "great"], 1.5);
        assert_eq!((e.words, e.cost), (set(&[0]), 1.0));
        let e = hs(&["good", "good"], 3.0);
        assert_eq!(e.words, set(&[0, 1]));
    }

    #[test]
    fn include_and_exclude() {
        let o = sum_oracle(&["good", "good"], 1.5);
        let c = CostFunction::uniform(2);
        let spec = ConstraintSpec::new(set(&[1]), set(&[])).unwrap();
        assert_eq!(
            ore_hs(&o, &c, &spec, &HsConfig::default()).unwrap().words,
            set(&[1])
        );
        let spec = ConstraintSpec::new(set(&[]), set(&[0])).unwrap();
        assert_eq!(
            ore_hs(&o, &c, &spec, &HsConfig::default()).unwrap().words,
            set(&[1])
        );
        let o = sum_oracle(&["good", "good"], 3.0);
        assert!(matches!(
            ore_hs(&o, &c, &spec, &HsConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn iteration_limit() {
        let o = MinimalSetsOracle::new(3, vec![set(&[0, 1, 2])]).unwrap();
        let config = HsConfig {
            batch: 0,
            max_iterations: 1,
        };
        assert!(matches!(
            ore_hs(
                &o,
                &CostFunction::uniform(3),
                &ConstraintSpec::default(),
                &config
            ),
            Err(Error::IterationLimit { iterations: 1 })
        ));
    }

    fn brute_force(f: &HittingSetFamily, cost: &CostFunction) -> WordSet {
        let n = f.universe();
        let mut best: Option<(f64, usize, WordSet)> = None;
        for mask in 0u32..(1 << n) {
            let s: WordSet = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if !f.is_hit_by(&s) {
                continue;
            }
            let key = (cost.total(&s), s.len(), s);
            let replace = match &best {
                None => true,
                Some(b) => (key.0, key.1, &key.2) < (b.0, b.1, &b.2),
            };
            if replace {
                best = Some(key);
            }
        }
        best.unwrap().2
    }

    proptest! {
        #[test]
        fn mhs_matches_brute_force(
            n in 1usize..9,
            raw in prop::collection::vec(prop::collection::btree_set(0usize..8, 1..4), 0..8),
            costs in prop::collection::vec(1u8..4, 8),
        ) {
            let mut f = HittingSetFamily::new(n);
            for s in raw {
                let s: WordSet = s.into_iter().filter(|&i| i < n).collect();
                if !s.is_empty() {
                    f.insert(s).unwrap();
                }
            }
            let cost = CostFunction::new(costs[..n].iter().map(|&c| c as f64).collect()).unwrap();
            prop_assert_eq!(minimum_hitting_set(&f, &cost), brute_force(&f, &cost));
        }

        #[test]
        fn hs_finds_cheapest_robust_superset(
            n in 1usize..7,
            robust in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..4), 1..4),
            costs in prop::collection::vec(1u8..4, 6),
        ) {
            let robust: Vec<WordSet> = robust
                .into_iter()
                .map(|s| s.into_iter().filter(|&i| i < n).collect())
                .collect();
            let o = MinimalSetsOracle::new(n, robust.clone()).unwrap();
            let cost = CostFunction::new(costs[..n].iter().map(|&c| c as f64).collect()).unwrap();
            let e = ore_hs(&o, &cost, &ConstraintSpec::default(), &HsConfig::default()).unwrap();
            let opt = robust.iter().map(|s| cost.total(s)).fold(f64::INFINITY, f64::min);
            prop_assert!((e.cost - opt).abs() < 1e-9);
            prop_assert!(robust.iter().any(|s| s.is_subset(&e.words)));
        }
    }
}
