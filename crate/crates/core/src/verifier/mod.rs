//! Complete robustness verification for piecewise-linear networks.
//!
//! A query asks whether the network's label stays `target` everywhere in an
//! input box. The search combines three ingredients:
//!
//! * symbolic interval propagation, which certifies a subproblem when the
//!   lower bound of every `logit_target - logit_rival` is large enough;
//! * a gradient-sign attack on the root box, which usually finds a
//!   counterexample quickly when one exists;
//! * branching on the phase of unstable ReLUs. Once no ReLU is relaxed the
//!   network is affine on the phase region, and a linear program decides the
//!   subproblem exactly, yielding either a certificate or a concrete point.
//!
//! Every counterexample is re-evaluated with an ordinary forward pass before
//! it is reported.

mod leaf;
mod symbolic;

pub use symbolic::{Interval, NeuronBound, Phase, SymbolicBounds};

use crate::attacks::{self, AttackConfig};
use crate::error::{Error, Result};
use crate::model::{Affine, Layer, Network};
use crate::text::{differing_blocks, Hyperbox, PerturbationSpace, TextInput};
use crate::WordSet;
use symbolic::Stage;

/// Comparison tolerance for LP optima.
pub const TOLERANCE: f64 = 1e-9;

/// Coordinates moving by more than this count as perturbed.
pub const DIFF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierConfig {
    /// Maximum number of ReLU splits per query.
    pub split_budget: usize,
    /// Run a gradient attack on the root box before branching.
    pub attack: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            split_budget: 100_000,
            attack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Robust,
    CounterExample { point: Vec<f64>, predicted: usize },
    ResourceExhausted { splits_used: usize },
}

impl Verdict {
    pub fn is_robust(&self) -> bool {
        matches!(self, Verdict::Robust)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentResult {
    pub verdict: Verdict,
    pub splits: usize,
    pub lp_solves: usize,
    pub attack_hit: bool,
}

/// Whether a lower bound on `logit_target - logit_rival` keeps `target`
/// the argmax under the smallest-index tie rule.
fn gap_ok(lower: f64, target: usize, rival: usize) -> bool {
    if rival < target {
        lower > 0.0
    } else {
        lower >= 0.0
    }
}

/// A network prepared for repeated verification queries.
#[derive(Debug, Clone)]
pub struct Verifier {
    net: Network,
    stages: Vec<Stage>,
    config: VerifierConfig,
}

impl Verifier {
    pub fn new(net: &Network, config: VerifierConfig) -> Result<Self> {
        let net = net.lowered()?;
        let mut stages: Vec<Stage> = Vec::new();
        for layer in net.layers() {
            match layer {
                Layer::Affine(a) => stages.push(Stage {
                    affine: a.clone(),
                    relu: false,
                }),
                Layer::Relu => match stages.last_mut() {
                    Some(s) => s.relu = true,
                    None => stages.push(Stage {
                        affine: Affine::identity(net.input_dim()),
                        relu: true,
                    }),
                },
                Layer::Conv1d(_) => unreachable!("network was lowered"),
            }
        }
        Ok(Self {
            net,
            stages,
            config,
        })
    }

    /// The lowered network this verifier reasons about.
    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    fn check_box(&self, bx: &Hyperbox) -> Result<()> {
        if bx.dim() != self.net.input_dim() {
            return Err(Error::InvalidInput(format!(
                "box has dimension {}, network expects {}",
                bx.dim(),
                self.net.input_dim()
            )));
        }
        Ok(())
    }

    fn free_phases(&self) -> Vec<Vec<Phase>> {
        self.stages[..self.stages.len() - 1]
            .iter()
            .map(|s| {
                if s.relu {
                    vec![Phase::Free; s.affine.rows()]
                } else {
                    Vec::new()
                }
            })
            .collect()
    }

    /// Symbolic bounds over `bx` with every ReLU free.
    pub fn symbolic_bounds(&self, bx: &Hyperbox) -> Result<SymbolicBounds> {
        self.check_box(bx)?;
        Ok(symbolic::propagate(&self.stages, bx, &self.free_phases()))
    }

    /// Sound enclosures of every logit over `bx`.
    pub fn bounds(&self, bx: &Hyperbox) -> Result<Vec<Interval>> {
        Ok(self.symbolic_bounds(bx)?.logits)
    }

    fn last(&self) -> &Affine {
        &self.stages.last().expect("non-empty").affine
    }

    /// Lower bounds of `logit_target - logit_r` for every rival `r`
    /// (`+inf` at the target itself).
    fn gap_bounds(&self, sb: &SymbolicBounds, bx: &Hyperbox, target: usize) -> Vec<f64> {
        (0..self.net.num_labels())
            .map(|r| {
                if r == target {
                    f64::INFINITY
                } else {
                    symbolic::row_min(&sb.gap_lower(self.last(), target, r), bx)
                }
            })
            .collect()
    }

    fn certified(&self, gaps: &[f64], target: usize) -> bool {
        gaps.iter()
            .enumerate()
            .all(|(r, g)| r == target || gap_ok(*g, target, r))
    }

    fn counterexample(&self, point: Vec<f64>, bx: &Hyperbox, target: usize) -> Option<Verdict> {
        if !bx.contains(&point) {
            return None;
        }
        let p = self.net.forward(&point).ok()?;
        (p.label != target).then_some(Verdict::CounterExample {
            point,
            predicted: p.label,
        })
    }

    /// Unstable ReLU with the largest relaxation area weighted by its
    /// influence on the weakest logit gap.
    fn split_choice(&self, sb: &SymbolicBounds, gaps: &[f64], target: usize) -> (usize, usize) {
        let rival = gaps
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != target)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(r, _)| r)
            .expect("at least two labels");
        let last = self.last();
        let mut coef: Vec<f64> = (0..last.cols())
            .map(|j| last.weight(target, j) - last.weight(rival, j))
            .collect();
        let mut best: Option<((usize, usize), f64)> = None;
        for s in (0..self.stages.len() - 1).rev() {
            let stage = &self.stages[s];
            if stage.relu {
                for nb in sb.neurons.iter().filter(|n| n.stage == s) {
                    let (lo, hi) = (nb.pre.lo, nb.pre.hi);
                    let slope = match nb.phase {
                        Phase::Active => 1.0,
                        Phase::Inactive => 0.0,
                        Phase::Free if hi <= 0.0 => 0.0,
                        Phase::Free if lo >= 0.0 => 1.0,
                        Phase::Free => {
                            let score = coef[nb.index].abs() * (-lo * hi / (hi - lo));
                            let better = match best {
                                None => true,
                                Some((_, b)) => score > b,
                            };
                            if better {
                                best = Some(((s, nb.index), score));
                            }
                            hi / (hi - lo)
                        }
                    };
                    coef[nb.index] *= slope;
                }
            }
            coef = stage.affine.transpose_apply(&coef);
        }
        if let Some((choice, _)) = best {
            return choice;
        }
        let n = sb
            .unstable()
            .next()
            .expect("caller checked for unstable neurons");
        (n.stage, n.index)
    }

    /// Decides whether every point of `bx` is classified as `target`.
    /// `anchor` seeds the gradient attack and must lie in the box.
    pub fn check(&self, bx: &Hyperbox, target: usize, anchor: &[f64]) -> Result<EntailmentResult> {
        self.check_box(bx)?;
        if target >= self.net.num_labels() {
            return Err(Error::InvalidInput(format!(
                "target label {target} out of range"
            )));
        }
        let mut result = EntailmentResult {
            verdict: Verdict::Robust,
            splits: 0,
            lp_solves: 0,
            attack_hit: false,
        };
        if bx.is_point() {
            if let Some(v) = self.counterexample(bx.lo().to_vec(), bx, target) {
                result.verdict = v;
            }
            return Ok(result);
        }

        let root = self.free_phases();
        let sb = symbolic::propagate(&self.stages, bx, &root);
        let gaps = self.gap_bounds(&sb, bx, target);
        if self.certified(&gaps, target) {
            return Ok(result);
        }

        if self.config.attack {
            let config = AttackConfig::default();
            let rival = attacks::strongest_rival(&sb.logits, target);
            let mut starts = vec![anchor.to_vec()];
            let center = bx.center();
            if center != anchor {
                starts.push(center);
            }
            for start in starts {
                if let Some(p) =
                    attacks::fgsm_toward(&self.net, &start, bx, target, rival, None, &config)
                {
                    if let Some(v) = self.counterexample(p, bx, target) {
                        result.verdict = v;
                        result.attack_hit = true;
                        return Ok(result);
                    }
                }
            }
        }

        let mut inconclusive = false;
        let mut stack = vec![(root, sb, gaps)];
        while let Some((phases, sb, gaps)) = stack.pop() {
            if sb.is_exact() {
                result.lp_solves += 1;
                match leaf::decide(&self.net, self.last(), bx, &sb, &gaps, target) {
                    leaf::Outcome::Robust => {}
                    leaf::Outcome::CounterExample(point) => {
                        if let Some(v) = self.counterexample(point, bx, target) {
                            result.verdict = v;
                            return Ok(result);
                        }
                        inconclusive = true;
                    }
                    leaf::Outcome::Inconclusive => inconclusive = true,
                }
                continue;
            }
            if result.splits >= self.config.split_budget {
                result.verdict = Verdict::ResourceExhausted {
                    splits_used: result.splits,
                };
                return Ok(result);
            }
            let (s, j) = self.split_choice(&sb, &gaps, target);
            result.splits += 1;
            for phase in [Phase::Inactive, Phase::Active] {
                let mut child = phases.clone();
                child[s][j] = phase;
                let csb = symbolic::propagate(&self.stages, bx, &child);
                if csb.empty {
                    continue;
                }
                let cgaps = self.gap_bounds(&csb, bx, target);
                if !self.certified(&cgaps, target) {
                    stack.push((child, csb, cgaps));
                }
            }
        }
        if inconclusive {
            result.verdict = Verdict::ResourceExhausted {
                splits_used: result.splits,
            };
        }
        Ok(result)
    }
}

/// Word positions whose block in `perturbed` differs from the input.
pub fn entails_counterexample_diff(text: &TextInput, perturbed: &[f64]) -> Result<WordSet> {
    if perturbed.len() != text.point().len() {
        return Err(Error::InvalidInput(format!(
            "point has {} values, text embeds to {}",
            perturbed.len(),
            text.point().len()
        )));
    }
    Ok(differing_blocks(
        text.point(),
        perturbed,
        text.dim(),
        DIFF_TOLERANCE,
    ))
}

/// Logit enclosures of `net` over `bx`.
pub fn bounds(net: &Network, bx: &Hyperbox) -> Result<Vec<Interval>> {
    Verifier::new(net, VerifierConfig::default())?.bounds(bx)
}

/// Checks whether fixing the words in `fixed` and perturbing the rest
/// within `space` keeps the prediction at `target`.
pub fn entails(
    net: &Network,
    space: &PerturbationSpace,
    fixed: &WordSet,
    target: usize,
    config: VerifierConfig,
) -> Result<EntailmentResult> {
    let verifier = Verifier::new(net, config)?;
    let bx = space.fixing(fixed)?;
    verifier.check(&bx, target, space.point())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{first_word_net, sum_net, toy_relu_net};
    use crate::text::fixtures::toy_embeddings;
    use crate::text::{encode, PerturbationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(items: &[usize]) -> WordSet {
        items.iter().copied().collect()
    }

    fn sum_space(words: &[&str], eps: f64) -> (TextInput, PerturbationSpace) {
        let emb = toy_embeddings();
        let t = encode(words, 2, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(eps), &emb).unwrap();
        (t, space)
    }

    #[test]
    fn affine_bounds_are_exact() {
        let bx = Hyperbox::new(vec![-0.5, -0.5], vec![2.5, 2.5]).unwrap();
        let b = bounds(&sum_net(), &bx).unwrap();
        assert_eq!(b[0], Interval { lo: -1.0, hi: 5.0 });
        assert_eq!(b[1], Interval { lo: -5.0, hi: 1.0 });
    }

    #[test]
    fn point_box_bounds_equal_forward() {
        let x = [0.3, -1.7];
        let b = bounds(&toy_relu_net(), &Hyperbox::point(&x)).unwrap();
        let logits = toy_relu_net().logits(&x).unwrap();
        for (i, l) in logits.iter().enumerate() {
            assert_eq!(b[i].lo, *l);
            assert_eq!(b[i].hi, *l);
        }
    }

    #[test]
    fn relu_clamps() {
        let bx = Hyperbox::new(vec![-1.0, 0.0], vec![1.0, 0.0]).unwrap();
        let v = Verifier::new(&toy_relu_net(), VerifierConfig::default()).unwrap();
        let sb = v.symbolic_bounds(&bx).unwrap();
        assert_eq!(sb.logits()[0], Interval { lo: 0.0, hi: 1.0 });
    }

    #[test]
    fn fully_fixed_text_is_robust() {
        let (_, space) = sum_space(&["good", "good"], 9.9);
        let r = entails(
            &sum_net(),
            &space,
            &set(&[0, 1]),
            0,
            VerifierConfig::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Robust);
    }

    #[test]
    fn sum_small_eps_is_robust() {
        let (_, space) = sum_space(&["good", "good"], 0.5);
        let r = entails(&sum_net(), &space, &set(&[]), 0, VerifierConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Robust);
    }

    #[test]
    fn sum_large_eps_has_counterexample() {
        let (t, space) = sum_space(&["good", "good"], 1.5);
        for attack in [true, false] {
            let config = VerifierConfig {
                attack,
                ..Default::default()
            };
            let r = entails(&sum_net(), &space, &set(&[]), 0, config).unwrap();
            let Verdict::CounterExample { point, predicted } = r.verdict else {
                panic!("expected a counterexample");
            };
            assert_eq!(predicted, 1);
            assert!(space.fixing(&set(&[])).unwrap().contains(&point));
            assert!(point[0] + point[1] < 0.0);
            assert!(!entails_counterexample_diff(&t, &point).unwrap().is_empty());
        }
    }

    #[test]
    fn ties_favour_the_smaller_label() {
        let v = Verifier::new(&toy_relu_net(), VerifierConfig::default()).unwrap();
        let bx = Hyperbox::new(vec![-1.0, 0.0], vec![-0.5, 0.0]).unwrap();
        // relu(x0) = 0 on this box: tie, label 0, so target 1 is never predicted.
        let r = v.check(&bx, 0, &[-0.75, 0.0]).unwrap();
        assert_eq!(r.verdict, Verdict::Robust);
    }

    #[test]
    fn counterexample_diff_examples() {
        let (t, _) = sum_space(&["good", "good"], 1.5);
        assert!(entails_counterexample_diff(&t, &[1.0, 1.0])
            .unwrap()
            .is_empty());
        assert_eq!(
            entails_counterexample_diff(&t, &[-0.5, 1.0]).unwrap(),
            set(&[0])
        );
        assert_eq!(
            entails_counterexample_diff(&t, &[-0.5, 0.5]).unwrap(),
            set(&[0, 1])
        );
        assert!(entails_counterexample_diff(&t, &[1.0]).is_err());
    }

    #[test]
    fn first_word_fixture() {
        let emb = toy_embeddings();
        let t = encode(&["good", "bad"], 2, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(1.5), &emb).unwrap();
        let net = first_word_net();
        let c = VerifierConfig::default();
        assert!(entails(&net, &space, &set(&[0]), 0, c)
            .unwrap()
            .verdict
            .is_robust());
        assert!(!entails(&net, &space, &set(&[1]), 0, c)
            .unwrap()
            .verdict
            .is_robust());
    }

    fn random_relu_net(
        rng: &mut ChaCha8Rng,
        inputs: usize,
        hidden: &[usize],
        labels: usize,
    ) -> Network {
        let mut layers = Vec::new();
        let mut dim = inputs;
        for &h in hidden {
            let w = (0..h * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..h).map(|_| rng.gen_range(-0.5..0.5)).collect();
            layers.push(Layer::Affine(Affine::from_flat(h, dim, w, b).unwrap()));
            layers.push(Layer::Relu);
            dim = h;
        }
        let w = (0..labels * dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let b = (0..labels).map(|_| rng.gen_range(-0.5..0.5)).collect();
        layers.push(Layer::Affine(Affine::from_flat(labels, dim, w, b).unwrap()));
        Network::new(
            inputs,
            1,
            (0..labels).map(|i| format!("l{i}")).collect(),
            layers,
        )
        .unwrap()
    }

    #[test]
    fn verdicts_agree_with_sampling_and_without_attack() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut robust = 0;
        let mut violated = 0;
        for _ in 0..150 {
            let net = random_relu_net(&mut rng, 4, &[6, 5], 3);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = rng.gen_range(0.05..0.8);
            let bx = Hyperbox::new(
                x.iter().map(|v| v - r).collect(),
                x.iter().map(|v| v + r).collect(),
            )
            .unwrap();
            let target = net.forward(&x).unwrap().label;
            let with = Verifier::new(&net, VerifierConfig::default())
                .unwrap()
                .check(&bx, target, &x)
                .unwrap();
            let without = Verifier::new(
                &net,
                VerifierConfig {
                    attack: false,
                    ..Default::default()
                },
            )
            .unwrap()
            .check(&bx, target, &x)
            .unwrap();
            assert_eq!(with.verdict.is_robust(), without.verdict.is_robust());
            match with.verdict {
                Verdict::Robust => {
                    robust += 1;
                    for _ in 0..2000 {
                        let p: Vec<f64> = (0..4)
                            .map(|i| rng.gen_range(bx.lo()[i]..=bx.hi()[i]))
                            .collect();
                        assert_eq!(net.forward(&p).unwrap().label, target);
                    }
                }
                Verdict::CounterExample { point, predicted } => {
                    violated += 1;
                    assert!(bx.contains(&point));
                    assert_eq!(net.forward(&point).unwrap().label, predicted);
                    assert_ne!(predicted, target);
                }
                Verdict::ResourceExhausted { .. } => panic!("budget exhausted"),
            }
        }
        assert!(
            robust > 10 && violated > 10,
            "robust {robust}, violated {violated}"
        );
    }

    #[test]
    fn split_budget_surfaces_exhaustion() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut saw = false;
        for _ in 0..200 {
            let net = random_relu_net(&mut rng, 4, &[8, 8], 2);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bx = Hyperbox::new(
                x.iter().map(|v| v - 0.5).collect(),
                x.iter().map(|v| v + 0.5).collect(),
            )
            .unwrap();
            let target = net.forward(&x).unwrap().label;
            let v = Verifier::new(
                &net,
                VerifierConfig {
                    split_budget: 0,
                    attack: false,
                },
            )
            .unwrap();
            let r = v.check(&bx, target, &x).unwrap();
            if let Verdict::ResourceExhausted { splits_used } = r.verdict {
                assert_eq!(splits_used, 0);
                saw = true;
                break;
            }
        }
        assert!(saw);
    }
}
