//! Exact decision of a subproblem on which the network is affine.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::symbolic::{Phase, SymbolicBounds};
use super::{gap_ok, TOLERANCE};
use crate::model::{Affine, Network};
use crate::text::Hyperbox;

pub(super) enum Outcome {
    Robust,
    CounterExample(Vec<f64>),
    Inconclusive,
}

/// `sb` must be exact (no relaxed ReLU). Minimizes every uncertified logit
/// gap over the box intersected with the forced phase constraints.
pub(super) fn decide(
    net: &Network,
    last: &Affine,
    bx: &Hyperbox,
    sb: &SymbolicBounds,
    gaps: &[f64],
    target: usize,
) -> Outcome {
    let n = bx.dim();
    let mut constraints = Vec::with_capacity(sb.forced.len());
    for (row, phase) in &sb.forced {
        let (coeffs, c) = row.split_at(n);
        let terms: Vec<(usize, f64)> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(k, a)| (k, *a))
            .collect();
        if terms.is_empty() {
            let violated = match phase {
                Phase::Active => c[0] < -TOLERANCE,
                Phase::Inactive => c[0] > TOLERANCE,
                Phase::Free => false,
            };
            if violated {
                return Outcome::Robust;
            }
            continue;
        }
        let op = match phase {
            Phase::Active => ComparisonOp::Ge,
            Phase::Inactive => ComparisonOp::Le,
            Phase::Free => continue,
        };
        constraints.push((terms, op, -c[0]));
    }

    let mut inconclusive = false;
    for (rival, gap) in gaps.iter().enumerate() {
        if rival == target || gap_ok(*gap, target, rival) {
            continue;
        }
        let objective = sb.gap_lower(last, target, rival);
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..n)
            .map(|k| lp.add_var(objective[k], (bx.lo()[k], bx.hi()[k])))
            .collect();
        for (terms, op, rhs) in &constraints {
            let expr: Vec<_> = terms.iter().map(|(k, a)| (vars[*k], *a)).collect();
            lp.add_constraint(&expr[..], *op, *rhs);
        }
        let solution = match lp.solve() {
            Ok(outcome) => match outcome.into_solution() {
                Ok(s) => s,
                Err(_) => {
                    inconclusive = true;
                    continue;
                }
            },
            Err(microlp::Error::Infeasible) => return Outcome::Robust,
            Err(_) => {
                inconclusive = true;
                continue;
            }
        };
        let minimum = solution.objective() + objective[n];
        if gap_ok(minimum, target, rival) && minimum > TOLERANCE {
            continue;
        }
        let mut point: Vec<f64> = vars.iter().map(|v| solution.var_value(*v)).collect();
        bx.clamp(&mut point);
        if let Ok(p) = net.forward(&point) {
            if p.label != target {
                return Outcome::CounterExample(point);
            }
        }
        if minimum < -TOLERANCE {
            inconclusive = true;
        }
    }
    if inconclusive {
        Outcome::Inconclusive
    } else {
        Outcome::Robust
    }
}
