//! Symbolic interval propagation.
//!
//! Every neuron carries a lower and an upper linear function of the input
//! variables that enclose its true value over the input box. Affine layers
//! are propagated exactly; unstable ReLUs are relaxed with parallel linear
//! bounds. ReLUs may also have their phase forced by the branch-and-bound
//! search, in which case they are treated as identity or zero and the phase
//! is recorded as a linear constraint on the input.

use crate::model::Affine;
use crate::text::Hyperbox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Free,
    Active,
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Affine stage of a lowered network, optionally followed by a ReLU.
#[derive(Debug, Clone)]
pub(crate) struct Stage {
    pub affine: Affine,
    pub relu: bool,
}

/// Rows of linear functions `a . x + c` over `n` inputs, stored as `[a, c]`.
#[derive(Debug, Clone)]
pub(crate) struct Eqs {
    width: usize,
    data: Vec<f64>,
}

impl Eqs {
    fn identity(n: usize) -> Self {
        let width = n + 1;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            data[i * width + i] = 1.0;
        }
        Self { width, data }
    }

    fn zeros(rows: usize, n: usize) -> Self {
        Self {
            width: n + 1,
            data: vec![0.0; rows * (n + 1)],
        }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn min_over(&self, i: usize, bx: &Hyperbox) -> f64 {
        row_min(self.row(i), bx)
    }

    pub fn max_over(&self, i: usize, bx: &Hyperbox) -> f64 {
        row_max(self.row(i), bx)
    }
}

pub(crate) fn row_min(row: &[f64], bx: &Hyperbox) -> f64 {
    let (coeffs, c) = row.split_at(row.len() - 1);
    coeffs.iter().enumerate().fold(c[0], |acc, (k, a)| {
        acc + a * if *a > 0.0 { bx.lo()[k] } else { bx.hi()[k] }
    })
}

pub(crate) fn row_max(row: &[f64], bx: &Hyperbox) -> f64 {
    let (coeffs, c) = row.split_at(row.len() - 1);
    coeffs.iter().enumerate().fold(c[0], |acc, (k, a)| {
        acc + a * if *a > 0.0 { bx.hi()[k] } else { bx.lo()[k] }
    })
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Pushes symbolic bounds through `y = W h + b` using the sign of each weight.
fn affine_eqs(affine: &Affine, lower: &Eqs, upper: &Eqs) -> (Eqs, Eqs) {
    let n = lower.width - 1;
    let mut new_lo = Eqs::zeros(affine.rows(), n);
    let mut new_hi = Eqs::zeros(affine.rows(), n);
    for i in 0..affine.rows() {
        new_lo.row_mut(i)[n] = affine.bias()[i];
        new_hi.row_mut(i)[n] = affine.bias()[i];
        for (j, &w) in affine.row(i).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (src_lo, src_hi) = if w > 0.0 {
                (lower.row(j), upper.row(j))
            } else {
                (upper.row(j), lower.row(j))
            };
            axpy(new_lo.row_mut(i), w, src_lo);
            axpy(new_hi.row_mut(i), w, src_hi);
        }
    }
    (new_lo, new_hi)
}

/// Bound information for one hidden ReLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronBound {
    pub stage: usize,
    pub index: usize,
    /// Concrete pre-activation enclosure.
    pub pre: Interval,
    pub phase: Phase,
}

impl NeuronBound {
    pub fn is_unstable(&self) -> bool {
        self.phase == Phase::Free && self.pre.lo < 0.0 && self.pre.hi > 0.0
    }
}

/// Per-neuron symbolic bounds of a network over a box, with the logits'
/// concrete enclosures.
#[derive(Debug, Clone)]
pub struct SymbolicBounds {
    pub(crate) neurons: Vec<NeuronBound>,
    /// Pre-activation lower functions of forced neurons with their phase.
    pub(crate) forced: Vec<(Vec<f64>, Phase)>,
    /// Post-activation bounds feeding the final affine stage.
    pub(crate) penultimate: (Eqs, Eqs),
    pub(crate) logits: Vec<Interval>,
    /// A forced phase is impossible anywhere in the box.
    pub(crate) empty: bool,
}

impl SymbolicBounds {
    pub fn logits(&self) -> &[Interval] {
        &self.logits
    }

    pub fn neurons(&self) -> &[NeuronBound] {
        &self.neurons
    }

    pub fn unstable(&self) -> impl Iterator<Item = &NeuronBound> {
        self.neurons.iter().filter(|n| n.is_unstable())
    }

    /// True when no ReLU is relaxed, i.e. the bounds describe the network
    /// exactly on the (phase-restricted) box.
    pub fn is_exact(&self) -> bool {
        self.unstable().next().is_none()
    }

    /// Lower linear function of `logit_target - logit_rival`.
    pub(crate) fn gap_lower(&self, last: &Affine, target: usize, rival: usize) -> Vec<f64> {
        let (lower, upper) = &self.penultimate;
        let n1 = lower.width;
        let mut out = vec![0.0; n1];
        out[n1 - 1] = last.bias()[target] - last.bias()[rival];
        for j in 0..last.cols() {
            let g = last.weight(target, j) - last.weight(rival, j);
            if g == 0.0 {
                continue;
            }
            let src = if g > 0.0 { lower.row(j) } else { upper.row(j) };
            axpy(&mut out, g, src);
        }
        out
    }
}

/// Propagates `bx` through `stages`; `phases[s][j]` forces the phase of ReLU
/// `j` of stage `s` (empty for stages without a ReLU).
pub(crate) fn propagate(stages: &[Stage], bx: &Hyperbox, phases: &[Vec<Phase>]) -> SymbolicBounds {
    let n = bx.dim();
    let mut lower = Eqs::identity(n);
    let mut upper = Eqs::identity(n);
    let mut neurons = Vec::new();
    let mut forced = Vec::new();
    let mut empty = false;
    let (last, hidden) = stages.split_last().expect("network has at least one stage");
    for (s, stage) in hidden.iter().enumerate() {
        let (mut lo, mut hi) = affine_eqs(&stage.affine, &lower, &upper);
        if stage.relu {
            for (j, &phase) in phases[s].iter().enumerate().take(lo.rows()) {
                let l_lo = lo.min_over(j, bx);
                let l_hi = lo.max_over(j, bx);
                let u_lo = hi.min_over(j, bx);
                let u_hi = hi.max_over(j, bx);
                neurons.push(NeuronBound {
                    stage: s,
                    index: j,
                    pre: Interval { lo: l_lo, hi: u_hi },
                    phase,
                });
                let active = match phase {
                    Phase::Active => {
                        empty |= u_hi < 0.0;
                        forced.push((lo.row(j).to_vec(), Phase::Active));
                        true
                    }
                    Phase::Inactive => {
                        empty |= l_lo > 0.0;
                        forced.push((lo.row(j).to_vec(), Phase::Inactive));
                        false
                    }
                    Phase::Free if u_hi <= 0.0 => false,
                    Phase::Free if l_lo >= 0.0 => true,
                    Phase::Free => {
                        if u_lo < 0.0 {
                            let slope = u_hi / (u_hi - u_lo);
                            let row = hi.row_mut(j);
                            let c = row.len() - 1;
                            row[c] -= u_lo;
                            row.iter_mut().for_each(|v| *v *= slope);
                        }
                        if l_hi <= -l_lo {
                            lo.row_mut(j).iter_mut().for_each(|v| *v = 0.0);
                        }
                        continue;
                    }
                };
                if !active {
                    lo.row_mut(j).iter_mut().for_each(|v| *v = 0.0);
                    hi.row_mut(j).iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        lower = lo;
        upper = hi;
    }
    let (out_lo, out_hi) = affine_eqs(&last.affine, &lower, &upper);
    let logits = (0..out_lo.rows())
        .map(|i| Interval {
            lo: out_lo.min_over(i, bx),
            hi: out_hi.max_over(i, bx),
        })
        .collect();
    SymbolicBounds {
        neurons,
        forced,
        penultimate: (lower, upper),
        logits,
        empty,
    }
}
