//! Local search over group labellings: single-group moves and same-weight
//! swaps between two classes, starting from the group-wise argmax. Fast and
//! uncertified.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{Instance, SolveReport};

const GAIN_EPS: f64 = 1e-12;

/// `(-slack, value)` in hard mode so feasibility is restored first;
/// `(0, value - M * slack)` in soft mode.
fn key(inst: &Instance<'_>, score: f64, counts: &[usize]) -> (f64, f64) {
    let slack = inst.cons.total_slack(counts);
    if inst.is_hard() {
        (-slack, score)
    } else {
        (0.0, score - inst.cfg.penalty * slack)
    }
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Greater) => a.0 > b.0 + GAIN_EPS || a.1 > b.1,
        Some(Ordering::Equal) => a.1 > b.1 + GAIN_EPS,
        _ => false,
    }
}

pub(crate) fn run(inst: &Instance<'_>) -> SolveReport {
    let labels = improve(inst, inst.groups.argmax());
    let counts = inst.groups.counts(&labels);
    let feasible = !inst.is_hard() || inst.cons.total_slack(&counts) == 0.0;
    if feasible {
        inst.report(&labels, false, true, 0)
    } else {
        inst.infeasible_report(0)
    }
}

/// An objective key and the `(group, new class)` moves reaching it.
type Step = ((f64, f64), Vec<(usize, usize)>);

/// Hill-climbs from `labels` until no move or swap improves.
pub(crate) fn improve(inst: &Instance<'_>, mut labels: Vec<usize>) -> Vec<usize> {
    let groups = &inst.groups;
    let nc = inst.probs.cols();
    let mut counts = groups.counts(&labels);
    let mut score: f64 = labels
        .iter()
        .enumerate()
        .map(|(g, &c)| groups.row(g)[c])
        .sum();
    let mut current = key(inst, score, &counts);

    for _ in 0..(16 * groups.len() * nc + 64) {
        let mut best: Option<Step> = None;

        for (g, &a) in labels.iter().enumerate() {
            let w = groups.weight(g);
            for b in (0..nc).filter(|&b| b != a) {
                counts[a] -= w;
                counts[b] += w;
                let s = score - groups.row(g)[a] + groups.row(g)[b];
                let k = key(inst, s, &counts);
                counts[a] += w;
                counts[b] -= w;
                if better(k, best.as_ref().map_or(current, |(bk, _)| *bk)) {
                    best = Some((k, vec![(g, b)]));
                }
            }
        }

        // swaps keep counts fixed, so only the score changes
        let mut top: BTreeMap<(usize, usize, usize), (f64, usize)> = BTreeMap::new();
        for (g, &a) in labels.iter().enumerate() {
            for b in (0..nc).filter(|&b| b != a) {
                let gain = groups.row(g)[b] - groups.row(g)[a];
                let e = top.entry((a, b, groups.weight(g))).or_insert((gain, g));
                if gain > e.0 {
                    *e = (gain, g);
                }
            }
        }
        for (&(a, b, w), &(gain_ab, g)) in &top {
            if a > b {
                continue;
            }
            if let Some(&(gain_ba, h)) = top.get(&(b, a, w)) {
                let k = (current.0, current.1 + gain_ab + gain_ba);
                if better(k, best.as_ref().map_or(current, |(bk, _)| *bk)) {
                    best = Some((k, vec![(g, b), (h, a)]));
                }
            }
        }

        let Some((k, moves)) = best else { break };
        for (g, b) in moves {
            let a = labels[g];
            counts[a] -= groups.weight(g);
            counts[b] += groups.weight(g);
            score += groups.row(g)[b] - groups.row(g)[a];
            labels[g] = b;
        }
        current = k;
    }
    labels
}
