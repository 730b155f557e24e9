//! Precision and coverage of anchor-style explanations.
//!
//! An explanation `E` is read as the rule "the E-blocks equal the input's".
//! Precision is the probability that the prediction is unchanged when a
//! sample is drawn conditioned on the rule; coverage is the probability
//! that a sample satisfies the rule at all.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::text::Hyperbox;
use crate::WordSet;

#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Finite distribution over explicit points.
    Discrete {
        support: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    /// Uniform distribution over a box.
    UniformBox(Hyperbox),
}

impl Sampler {
    pub fn discrete(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidInput(
                "a discrete sampler needs one probability per support point".into(),
            ));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput(
                "probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        let dim = support[0].len();
        if support.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidShape(
                "support points differ in dimension".into(),
            ));
        }
        Ok(Sampler::Discrete { support, probs })
    }

    /// Uniform over a finite set of points.
    pub fn uniform_over(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        Self::discrete(support, vec![1.0 / n as f64; n])
    }

    pub fn uniform_box(bx: Hyperbox) -> Self {
        Sampler::UniformBox(bx)
    }

    /// `n` independent samples.
    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        match self {
            Sampler::Discrete { support, probs } => {
                let dist = WeightedIndex::new(probs).expect("validated weights");
                (0..n).map(|_| support[dist.sample(rng)].clone()).collect()
            }
            Sampler::UniformBox(bx) => (0..n).map(|_| uniform_point(bx, rng)).collect(),
        }
    }
}

fn uniform_point(bx: &Hyperbox, rng: &mut impl Rng) -> Vec<f64> {
    bx.lo()
        .iter()
        .zip(bx.hi())
        .map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l })
        .collect()
}

fn agrees(sample: &[f64], x: &[f64], dim: usize, e: &WordSet) -> bool {
    e.iter()
        .all(|&w| sample[w * dim..(w + 1) * dim] == x[w * dim..(w + 1) * dim])
}

fn check_point(x: &[f64], dim: usize, e: &WordSet) -> Result<()> {
    if dim == 0 || !x.len().is_multiple_of(dim) {
        return Err(Error::InvalidShape(
            "point is not a whole number of word blocks".into(),
        ));
    }
    let len = x.len() / dim;
    match e.iter().find(|&&w| w >= len) {
        Some(&index) => Err(Error::InvalidIndex { index, len }),
        None => Ok(()),
    }
}

/// Fraction of `n` samples drawn conditioned on `e` for which `net` still
/// predicts the label of `x`.
pub fn precision(
    e: &WordSet,
    net: &Network,
    x: &[f64],
    dim: usize,
    sampler: &Sampler,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_point(x, dim, e)?;
    if n == 0 {
        return Err(Error::InvalidInput(
            "precision needs at least one sample".into(),
        ));
    }
    let target = net.forward(x)?.label;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = match sampler {
        Sampler::Discrete { support, probs } => {
            let (points, weights): (Vec<&Vec<f64>>, Vec<f64>) = support
                .iter()
                .zip(probs)
                .filter(|(p, w)| **w > 0.0 && agrees(p, x, dim, e))
                .map(|(p, w)| (p, *w))
                .unzip();
            if points.is_empty() {
                return Err(Error::Undefined(
                    "the sampler gives no mass to points agreeing with the explanation".into(),
                ));
            }
            let dist = WeightedIndex::new(&weights).expect("positive weights");
            (0..n)
                .map(|_| points[dist.sample(&mut rng)].clone())
                .collect::<Vec<_>>()
        }
        Sampler::UniformBox(bx) => {
            let mut lo = bx.lo().to_vec();
            let mut hi = bx.hi().to_vec();
            for &w in e {
                lo[w * dim..(w + 1) * dim].copy_from_slice(&x[w * dim..(w + 1) * dim]);
                hi[w * dim..(w + 1) * dim].copy_from_slice(&x[w * dim..(w + 1) * dim]);
            }
            let pinned = Hyperbox::new(lo, hi)?;
            (0..n).map(|_| uniform_point(&pinned, &mut rng)).collect()
        }
    };
    let mut kept = 0usize;
    for s in &samples {
        if net.forward(s)?.label == target {
            kept += 1;
        }
    }
    Ok(kept as f64 / n as f64)
}

/// Fraction of `samples` whose `e`-blocks equal those of `x`.
pub fn coverage_of_batch(e: &WordSet, x: &[f64], dim: usize, samples: &[Vec<f64>]) -> Result<f64> {
    check_point(x, dim, e)?;
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "coverage needs at least one sample".into(),
        ));
    }
    let hits = samples.iter().filter(|s| agrees(s, x, dim, e)).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Coverage of `e` estimated from `n` samples. A box sampler covers a
/// non-empty rule with probability zero.
pub fn coverage(
    e: &WordSet,
    x: &[f64],
    dim: usize,
    sampler: &Sampler,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_point(x, dim, e)?;
    if n == 0 {
        return Err(Error::InvalidInput(
            "coverage needs at least one sample".into(),
        ));
    }
    if e.is_empty() {
        return Ok(1.0);
    }
    match sampler {
        Sampler::UniformBox(_) => Ok(0.0),
        Sampler::Discrete { .. } => {
            let samples = sampler.draw(n, &mut ChaCha8Rng::seed_from_u64(seed));
            coverage_of_batch(e, x, dim, &samples)
        }
    }
}
