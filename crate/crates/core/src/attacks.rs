//! Gradient-sign attacks and the sparse attack generator.
//!
//! [`sparse_attack`] looks for label-flipping perturbations that move as few
//! words as possible. Starting from all free words, each round draws a
//! population of `k`-word subsets and pushes only those blocks with clipped
//! sign-of-gradient steps. Whenever a round succeeds, `k` shrinks below the
//! best support found so far; a fruitless round only spends budget.
//! Subsets are drawn with a bias toward words whose gradient block is large.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::Network;
use crate::text::{differing_blocks, Hyperbox, PerturbationSpace};
use crate::verifier::{self, Interval, DIFF_TOLERANCE};
use crate::WordSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    /// Perturbations generated per round.
    pub population: usize,
    /// Rounds allowed before giving up.
    pub budget: usize,
    /// Step size as a fraction of each coordinate's box half-width.
    pub step: f64,
    /// Sign-gradient iterations per perturbation.
    pub iterations: usize,
    pub seed: u64,
    /// Evaluate a population on several threads. Results do not depend on it.
    pub parallel: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            population: 8,
            budget: 16,
            step: 1.0,
            iterations: 10,
            seed: 0,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAttack {
    pub point: Vec<f64>,
    /// Words actually moved by the attack.
    pub support: WordSet,
    /// `logit_target - max rival logit` at `point`; never positive.
    pub gap: f64,
}

/// Rival label with the highest logit upper bound; ties go to the smaller index.
pub fn strongest_rival(logits: &[Interval], target: usize) -> usize {
    let mut best: Option<usize> = None;
    for (r, iv) in logits.iter().enumerate() {
        if r == target {
            continue;
        }
        if best.is_none_or(|b| iv.hi > logits[b].hi) {
            best = Some(r);
        }
    }
    best.expect("at least two labels")
}

fn margin(logits: &[f64], target: usize) -> f64 {
    let rival = logits
        .iter()
        .enumerate()
        .filter(|(r, _)| *r != target)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[target] - rival
}

/// Iterated sign-of-gradient ascent on `logit_rival - logit_target`, clipped
/// to `bx`. Only coordinates enabled in `mask` move. Returns the first
/// iterate whose label differs from `target`.
pub(crate) fn fgsm_toward(
    net: &Network,
    start: &[f64],
    bx: &Hyperbox,
    target: usize,
    rival: usize,
    mask: Option<&[bool]>,
    config: &AttackConfig,
) -> Option<Vec<f64>> {
    let mut p = start.to_vec();
    bx.clamp(&mut p);
    for _ in 0..config.iterations {
        let g = net.gradient(&p, (rival, target)).ok()?;
        let mut moved = false;
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 || mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let half = 0.5 * bx.width(i);
            let next = (p[i] + config.step * half * gi.signum()).clamp(bx.lo()[i], bx.hi()[i]);
            moved |= next != p[i];
            p[i] = next;
        }
        if net.forward(&p).ok()?.label != target {
            return Some(p);
        }
        if !moved {
            break;
        }
    }
    None
}

/// Gradient-sign attack from `start` inside `bx`. Returns a point only if
/// it verifiably changes the label.
pub fn fgsm(
    net: &Network,
    start: &[f64],
    bx: &Hyperbox,
    target: usize,
    config: &AttackConfig,
) -> Result<Option<Vec<f64>>> {
    let net = net.lowered()?;
    let rival = strongest_rival(&verifier::bounds(&net, bx)?, target);
    Ok(fgsm_toward(&net, start, bx, target, rival, None, config).filter(|p| bx.contains(p)))
}

/// Draws `k` distinct words from `ranked`, preferring early ranks with
/// geometrically decaying weight.
fn draw_subset(rng: &mut ChaCha8Rng, ranked: &[usize], k: usize) -> Vec<usize> {
    let mut pool: Vec<(usize, f64)> = ranked
        .iter()
        .enumerate()
        .map(|(rank, &w)| (w, 0.5f64.powi(rank as i32)))
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut pick = rng.gen_range(0.0..total);
        let mut idx = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if pick < *w {
                idx = i;
                break;
            }
            pick -= w;
        }
        out.push(pool.remove(idx).0);
    }
    out.sort_unstable();
    out
}

fn evaluate_all<F>(subsets: &[Vec<usize>], parallel: bool, f: F) -> Vec<Option<SparseAttack>>
where
    F: Fn(&[usize]) -> Option<SparseAttack> + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return subsets.par_iter().map(|s| f(s)).collect();
    }
    let _ = parallel;
    subsets.iter().map(|s| f(s)).collect()
}

fn sort_key(a: &SparseAttack) -> (usize, f64) {
    (a.support.len(), a.gap)
}

fn search(
    net: &Network,
    space: &PerturbationSpace,
    fixed: &WordSet,
    target: usize,
    config: &AttackConfig,
) -> Result<Vec<SparseAttack>> {
    let free: Vec<usize> = (0..space.num_words())
        .filter(|i| !fixed.contains(i))
        .collect();
    let bx = space.fixing(fixed)?;
    if free.is_empty() || config.population == 0 {
        return Ok(Vec::new());
    }
    let lowered;
    let net = if net.has_conv() {
        lowered = net.lowered()?;
        &lowered
    } else {
        net
    };
    let x = space.point();
    let dim = space.dim();
    let rival = strongest_rival(&verifier::bounds(net, &bx)?, target);
    let grad = net.gradient(x, (rival, target))?;
    let block_norm = |w: usize| {
        grad[w * dim..(w + 1) * dim]
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()))
    };
    let mut ranked = free.clone();
    ranked.sort_by(|a, b| block_norm(*b).total_cmp(&block_norm(*a)).then(a.cmp(b)));

    let attempt = |subset: &[usize]| -> Option<SparseAttack> {
        let mut mask = vec![false; x.len()];
        for &w in subset {
            mask[w * dim..(w + 1) * dim]
                .iter_mut()
                .for_each(|m| *m = true);
        }
        let point = fgsm_toward(net, x, &bx, target, rival, Some(&mask), config)?;
        let support = differing_blocks(x, &point, dim, DIFF_TOLERANCE);
        if support.is_empty() {
            return None;
        }
        let gap = margin(&net.logits(&point).ok()?, target);
        Some(SparseAttack {
            point,
            support,
            gap,
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut k = free.len();
    let mut budget = config.budget;
    let mut fresh_k = true;
    let mut found: Vec<SparseAttack> = Vec::new();
    while k > 0 && budget > 0 {
        let mut subsets: Vec<Vec<usize>> = Vec::with_capacity(config.population);
        if fresh_k {
            let mut top = ranked[..k].to_vec();
            top.sort_unstable();
            subsets.push(top);
        }
        while subsets.len() < config.population {
            subsets.push(draw_subset(&mut rng, &ranked, k));
        }
        subsets.dedup();
        let successes: Vec<SparseAttack> = evaluate_all(&subsets, config.parallel, attempt)
            .into_iter()
            .flatten()
            .collect();
        budget -= 1;
        fresh_k = false;
        let Some(best) = successes
            .iter()
            .min_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).expect("finite gaps"))
        else {
            continue;
        };
        k = (k - 1).min(best.support.len() - 1);
        fresh_k = true;
        found.extend(successes);
    }

    found.sort_by(|a, b| {
        sort_key(a)
            .partial_cmp(&sort_key(b))
            .expect("finite gaps")
            .then_with(|| a.support.cmp(&b.support))
    });
    let mut seen = std::collections::HashSet::new();
    found.retain(|a| seen.insert(a.support.clone()));
    Ok(found)
}

/// The sparsest label-flipping perturbation found within the budget, moving
/// only words outside `fixed`.
pub fn sparse_attack(
    net: &Network,
    space: &PerturbationSpace,
    fixed: &WordSet,
    target: usize,
    config: &AttackConfig,
) -> Result<Option<SparseAttack>> {
    Ok(search(net, space, fixed, target, config)?
        .into_iter()
        .next())
}

/// Up to `count` attacks with pairwise distinct supports, sparsest first.
pub fn sparse_attack_batch(
    net: &Network,
    space: &PerturbationSpace,
    fixed: &WordSet,
    target: usize,
    config: &AttackConfig,
    count: usize,
) -> Result<Vec<SparseAttack>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut all = search(net, space, fixed, target, config)?;
    all.truncate(count);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{first_word_net, sum_net};
    use crate::text::fixtures::toy_embeddings;
    use crate::text::{encode, PerturbationSpec};

    fn set(items: &[usize]) -> WordSet {
        items.iter().copied().collect()
    }

    fn space(words: &[&str], eps: f64) -> PerturbationSpace {
        let emb = toy_embeddings();
        let t = encode(words, 2, &emb).unwrap();
        PerturbationSpace::new(&t, &PerturbationSpec::eps(eps), &emb).unwrap()
    }

    #[test]
    fn fgsm_reaches_the_corner() {
        let s = space(&["good", "good"], 1.5);
        let bx = s.fixing(&set(&[])).unwrap();
        let p = fgsm(&sum_net(), s.point(), &bx, 0, &AttackConfig::default())
            .unwrap()
            .expect("flip");
        assert_eq!(p, vec![-0.5, -0.5]);
    }

    #[test]
    fn fgsm_fails_on_robust_regions() {
        let s = space(&["good", "good"], 0.5);
        let bx = s.fixing(&set(&[])).unwrap();
        assert!(
            fgsm(&sum_net(), s.point(), &bx, 0, &AttackConfig::default())
                .unwrap()
                .is_none()
        );
        let point = Hyperbox::point(s.point());
        assert!(
            fgsm(&sum_net(), s.point(), &point, 0, &AttackConfig::default())
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn sum_needs_both_words() {
        let s = space(&["good", "good"], 1.5);
        let a = sparse_attack(&sum_net(), &s, &set(&[]), 0, &AttackConfig::default())
            .unwrap()
            .expect("attack");
        assert_eq!(a.support, set(&[0, 1]));
        assert!(a.gap < 0.0);
        let batch =
            sparse_attack_batch(&sum_net(), &s, &set(&[]), 0, &AttackConfig::default(), 2).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].support, set(&[0, 1]));
    }

    #[test]
    fn first_word_attack_is_single_word() {
        let s = space(&["good", "bad"], 1.5);
        let a = sparse_attack(
            &first_word_net(),
            &s,
            &set(&[]),
            0,
            &AttackConfig::default(),
        )
        .unwrap()
        .expect("attack");
        assert_eq!(a.support, set(&[0]));
        assert_eq!(a.point[0], -0.5);
        let batch = sparse_attack_batch(
            &first_word_net(),
            &s,
            &set(&[]),
            0,
            &AttackConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].support, set(&[0]));
    }

    #[test]
    fn nothing_free_nothing_found() {
        let s = space(&["good", "bad"], 1.5);
        let c = AttackConfig::default();
        assert!(sparse_attack(&first_word_net(), &s, &set(&[0, 1]), 0, &c)
            .unwrap()
            .is_none());
        assert!(
            sparse_attack_batch(&first_word_net(), &s, &set(&[]), 0, &c, 0)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn deterministic_under_seed_and_parallelism() {
        let s = space(&["good", "great"], 3.0);
        let c = AttackConfig {
            seed: 42,
            ..Default::default()
        };
        let a = sparse_attack_batch(&sum_net(), &s, &set(&[]), 0, &c, 8).unwrap();
        let b = sparse_attack_batch(&sum_net(), &s, &set(&[]), 0, &c, 8).unwrap();
        let p = sparse_attack_batch(
            &sum_net(),
            &s,
            &set(&[]),
            0,
            &AttackConfig {
                parallel: true,
                ..c
            },
            8,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, p);
    }

    #[test]
    fn supports_avoid_fixed_words() {
        let s = space(&["good", "great"], 3.0);
        let c = AttackConfig::default();
        for fixed in [set(&[0]), set(&[1])] {
            for a in sparse_attack_batch(&sum_net(), &s, &fixed, 0, &c, 8).unwrap() {
                assert!(a.support.is_disjoint(&fixed));
                assert!(s.fixing(&fixed).unwrap().contains(&a.point));
                assert_ne!(sum_net().forward(&a.point).unwrap().label, 0);
            }
        }
    }
}
