//! Min-cost flow relaxation with convex class costs.
//!
//! Every group of weight `m` is split into `m` unit items carrying `1/m` of
//! the group's summed probability row. Items flow into classes and classes
//! into a sink; the class-to-sink arc carries a separable convex cost
//! (unary slack penalty, Lagrangian linear term, box violation). Because
//! items have unit supply, every residual cycle through item nodes collapses
//! to an arc between two classes whose cost is the cheapest single-item
//! move. Optimality is therefore "no negative cycle" in a graph with only
//! `C + 1` nodes, and cycle cancelling on that graph is exact.
//!
//! Costs are lexicographic: box violation first, then money. A zero-violation
//! optimum is the optimum of the box-constrained problem; a positive
//! violation at optimum proves the box infeasible.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::model::{Constraints, Groups};

pub(crate) struct Items {
    pub group_of: Vec<usize>,
    /// Items of group `g` are `start[g]..start[g + 1]`.
    pub start: Vec<usize>,
    values: Vec<f64>,
    pub num_classes: usize,
}

impl Items {
    pub fn new(groups: &Groups) -> Self {
        let c = groups.num_classes;
        let mut group_of = Vec::new();
        let mut start = Vec::with_capacity(groups.len() + 1);
        let mut values = Vec::new();
        for g in 0..groups.len() {
            start.push(group_of.len());
            let w = groups.weight(g) as f64;
            for _ in 0..groups.weight(g) {
                group_of.push(g);
                values.extend(groups.row(g).iter().map(|v| v / w));
            }
        }
        start.push(group_of.len());
        Self {
            group_of,
            start,
            values,
            num_classes: c,
        }
    }

    pub fn len(&self) -> usize {
        self.group_of.len()
    }

    #[inline]
    fn value(&self, item: usize, class: usize) -> f64 {
        self.values[item * self.num_classes + class]
    }
}

/// Convex cost of putting `n` units into class `c`.
pub(crate) struct ClassCosts<'a> {
    pub lo: &'a [i64],
    pub hi: &'a [i64],
    /// Cost per unit, from Lagrange multipliers.
    pub linear: &'a [f64],
    /// Weight of the unary slack; zero in hard mode.
    pub penalty: f64,
    pub cons: &'a Constraints,
}

impl ClassCosts<'_> {
    fn cost(&self, c: usize, n: i64) -> f64 {
        let mut cost = self.linear[c] * n as f64;
        if self.penalty > 0.0 {
            cost += self.penalty * self.cons.unary_slack(c, n);
        }
        cost
    }

    fn violation(&self, c: usize, n: i64) -> i64 {
        (self.lo[c] - n).max(0) + (n - self.hi[c]).max(0)
    }

    fn step(&self, c: usize, from: i64, to: i64) -> Lex {
        Lex {
            viol: self.violation(c, to) - self.violation(c, from),
            cost: self.cost(c, to) - self.cost(c, from),
        }
    }

    fn tolerance(&self) -> f64 {
        let slope = self.linear.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        1e-12 * (1.0 + self.penalty + slope)
    }
}

#[derive(Debug, Clone, Copy)]
struct Lex {
    viol: i64,
    cost: f64,
}

impl Lex {
    const ZERO: Lex = Lex { viol: 0, cost: 0.0 };

    fn add(self, o: Lex) -> Lex {
        Lex {
            viol: self.viol + o.viol,
            cost: self.cost + o.cost,
        }
    }

    fn less_than(self, o: Lex, eps: f64) -> bool {
        self.viol < o.viol || (self.viol == o.viol && self.cost < o.cost - eps)
    }
}

/// Value lost by moving an item, ordered by value then item index.
#[derive(Debug, Clone, Copy)]
struct MoveKey(f64, usize);

impl PartialEq for MoveKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MoveKey {}

impl PartialOrd for MoveKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MoveKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FlowSolution {
    pub class_of: Vec<usize>,
    pub counts: Vec<i64>,
    pub violation: i64,
    /// `-Σ values + Σ class costs`; the relaxation maximises its negation.
    pub cost: f64,
}

impl FlowSolution {
    /// Groups whose items ended up in more than one class.
    pub fn split_groups(&self, items: &Items) -> Vec<usize> {
        (0..items.start.len() - 1)
            .filter(|&g| {
                let s = items.start[g];
                let e = items.start[g + 1];
                self.class_of[s + 1..e]
                    .iter()
                    .any(|&c| c != self.class_of[s])
            })
            .collect()
    }

    pub fn group_labels(&self, items: &Items) -> Vec<usize> {
        items.start[..items.start.len() - 1]
            .iter()
            .map(|&s| self.class_of[s])
            .collect()
    }

    /// Classes holding items of group `g`, ascending.
    pub fn classes_of_group(&self, items: &Items, g: usize) -> Vec<usize> {
        let mut cs: Vec<usize> = self.class_of[items.start[g]..items.start[g + 1]].to_vec();
        cs.sort_unstable();
        cs.dedup();
        cs
    }
}

#[derive(Clone, Copy)]
enum ArcKind {
    Move,
    Sink,
}

#[derive(Clone, Copy)]
struct Arc {
    from: usize,
    to: usize,
    w: Lex,
    kind: ArcKind,
}

/// Solves the relaxation. `allowed[g * C + c]` says whether group `g` may use
/// class `c`; every group must allow at least one class.
pub(crate) fn relax(
    items: &Items,
    allowed: &[bool],
    costs: &ClassCosts<'_>,
    warm: Option<&[usize]>,
) -> FlowSolution {
    let nc = items.num_classes;
    let sink = nc;
    let eps = costs.tolerance();
    let ok = |i: usize, c: usize| allowed[items.group_of[i] * nc + c];

    let mut class_of: Vec<usize> = (0..items.len())
        .map(|i| match warm {
            Some(w) if ok(i, w[i]) => w[i],
            _ => (0..nc)
                .filter(|&c| ok(i, c))
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if items.value(i, b) >= items.value(i, c) => Some(b),
                    _ => Some(c),
                })
                .expect("every group allows some class"),
        })
        .collect();
    let mut counts = vec![0i64; nc];
    for &c in &class_of {
        counts[c] += 1;
    }

    // One min-heap per ordered class pair (a, b) over items currently in `a`
    // that may move to `b`, keyed by the value lost in the move. Entries of
    // items that have since moved are stale and skipped lazily.
    let mut heaps: Vec<BinaryHeap<Reverse<MoveKey>>> =
        (0..nc * nc).map(|_| BinaryHeap::new()).collect();
    let push_moves = |heaps: &mut [BinaryHeap<Reverse<MoveKey>>], i: usize, a: usize| {
        let va = items.value(i, a);
        for b in (0..nc).filter(|&b| b != a && ok(i, b)) {
            heaps[a * nc + b].push(Reverse(MoveKey(va - items.value(i, b), i)));
        }
    };
    {
        let mut seed: Vec<Vec<Reverse<MoveKey>>> = vec![Vec::new(); nc * nc];
        for (i, &a) in class_of.iter().enumerate() {
            let va = items.value(i, a);
            for b in (0..nc).filter(|&b| b != a && ok(i, b)) {
                seed[a * nc + b].push(Reverse(MoveKey(va - items.value(i, b), i)));
            }
        }
        for (h, v) in heaps.iter_mut().zip(seed) {
            *h = BinaryHeap::from(v);
        }
    }
    let mut best_item = vec![usize::MAX; nc * nc];
    let mut arcs: Vec<Arc> = Vec::with_capacity(nc * nc + 2 * nc);
    let mut dist = vec![Lex::ZERO; nc + 1];
    let mut pred = vec![usize::MAX; nc + 1];
    let max_rounds = 64 * items.len() * nc + 1024;

    for _ in 0..max_rounds {
        arcs.clear();
        for a in 0..nc {
            for b in 0..nc {
                let heap = &mut heaps[a * nc + b];
                while heap.peek().is_some_and(|Reverse(m)| class_of[m.1] != a) {
                    heap.pop();
                }
                best_item[a * nc + b] = usize::MAX;
                if let Some(Reverse(MoveKey(d, i))) = heap.peek() {
                    best_item[a * nc + b] = *i;
                    arcs.push(Arc {
                        from: a,
                        to: b,
                        w: Lex { viol: 0, cost: *d },
                        kind: ArcKind::Move,
                    });
                }
            }
            arcs.push(Arc {
                from: a,
                to: sink,
                w: costs.step(a, counts[a], counts[a] + 1),
                kind: ArcKind::Sink,
            });
            if counts[a] > 0 {
                arcs.push(Arc {
                    from: sink,
                    to: a,
                    w: costs.step(a, counts[a], counts[a] - 1),
                    kind: ArcKind::Sink,
                });
            }
        }

        let Some(cycle) = negative_cycle(&arcs, nc + 1, eps, &mut dist, &mut pred) else {
            break;
        };
        for &ai in &cycle {
            let arc = arcs[ai];
            if let ArcKind::Move = arc.kind {
                let item = best_item[arc.from * nc + arc.to];
                class_of[item] = arc.to;
                counts[arc.from] -= 1;
                counts[arc.to] += 1;
                push_moves(&mut heaps, item, arc.to);
            }
        }
    }

    let violation = (0..nc).map(|c| costs.violation(c, counts[c])).sum();
    let cost = class_of
        .iter()
        .enumerate()
        .map(|(i, &c)| -items.value(i, c))
        .sum::<f64>()
        + (0..nc).map(|c| costs.cost(c, counts[c])).sum::<f64>();
    FlowSolution {
        class_of,
        counts,
        violation,
        cost,
    }
}

/// Bellman-Ford from a virtual source; returns the arc indices of a cycle
/// whose lexicographic weight is below zero by more than `eps`.
fn negative_cycle(
    arcs: &[Arc],
    nodes: usize,
    eps: f64,
    dist: &mut [Lex],
    pred: &mut [usize],
) -> Option<Vec<usize>> {
    dist.fill(Lex::ZERO);
    pred.fill(usize::MAX);
    let mut last = None;
    for _ in 0..nodes {
        last = None;
        for (ai, arc) in arcs.iter().enumerate() {
            let cand = dist[arc.from].add(arc.w);
            if cand.less_than(dist[arc.to], eps) {
                dist[arc.to] = cand;
                pred[arc.to] = ai;
                last = Some(arc.to);
            }
        }
        last?;
    }
    let mut x = last?;
    for _ in 0..nodes {
        x = arcs.get(pred[x])?.from;
    }
    let mut cycle = Vec::new();
    let mut y = x;
    loop {
        let ai = pred[y];
        arcs.get(ai)?;
        cycle.push(ai);
        y = arcs[ai].from;
        if y == x || cycle.len() > nodes {
            break;
        }
    }
    if y != x {
        return None;
    }
    cycle.reverse();
    let weight = cycle.iter().fold(Lex::ZERO, |acc, &ai| acc.add(arcs[ai].w));
    weight.less_than(Lex::ZERO, eps).then_some(cycle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ProbMatrix;
    use crate::prior::PriorKnowledge;
    use crate::solver::SmoothRegularization;

    fn setup(rows: &[Vec<f64>], pairs: Vec<(usize, usize)>) -> (Groups, Items) {
        let p = ProbMatrix::from_rows(rows).unwrap();
        let g = Groups::build(&p, &SmoothRegularization::new(pairs)).unwrap();
        let items = Items::new(&g);
        (g, items)
    }

    #[test]
    fn fixed_counts_transport() {
        let (g, items) = setup(&[vec![0.9, 0.1], vec![0.8, 0.2]], vec![]);
        let cons = Constraints::none(2, 2);
        let allowed = vec![true; g.len() * 2];
        let costs = ClassCosts {
            lo: &[1, 1],
            hi: &[1, 1],
            linear: &[0.0, 0.0],
            penalty: 0.0,
            cons: &cons,
        };
        let sol = relax(&items, &allowed, &costs, None);
        assert_eq!(sol.violation, 0);
        assert_eq!(sol.class_of, vec![0, 1]);
        assert!((-sol.cost - 1.1).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box_reports_violation() {
        let (g, items) = setup(&[vec![0.5, 0.5], vec![0.5, 0.5]], vec![]);
        let cons = Constraints::none(2, 2);
        let allowed = vec![true; g.len() * 2];
        let costs = ClassCosts {
            lo: &[2, 2],
            hi: &[2, 2],
            linear: &[0.0, 0.0],
            penalty: 0.0,
            cons: &cons,
        };
        assert_eq!(relax(&items, &allowed, &costs, None).violation, 2);
    }

    #[test]
    fn soft_unary_penalty_moves_cheapest_sample() {
        let (g, items) = setup(&[vec![0.9, 0.1], vec![0.8, 0.2], vec![0.6, 0.4]], vec![]);
        let k = crate::prior::PriorKnowledge::new(
            2,
            vec![crate::prior::UnaryBound {
                class_index: 1,
                lower: 1.0 / 3.0,
                upper: 1.0,
            }],
            vec![],
        )
        .unwrap();
        let cons = Constraints::new(&k, 3);
        let allowed = vec![true; g.len() * 2];
        let costs = ClassCosts {
            lo: &[0, 0],
            hi: &[3, 3],
            linear: &[0.0, 0.0],
            penalty: 30.0,
            cons: &cons,
        };
        let sol = relax(&items, &allowed, &costs, None);
        assert_eq!(sol.class_of, vec![0, 0, 1]);
    }

    #[test]
    fn groups_may_split_in_the_relaxation() {
        let (g, items) = setup(
            &[vec![0.6, 0.4], vec![0.6, 0.4], vec![0.7, 0.3]],
            vec![(1, 0)],
        );
        let cons = Constraints::new(&PriorKnowledge::empty(2), 3);
        let allowed = vec![true; g.len() * 2];
        let costs = ClassCosts {
            lo: &[2, 1],
            hi: &[2, 1],
            linear: &[0.0, 0.0],
            penalty: 0.0,
            cons: &cons,
        };
        let sol = relax(&items, &allowed, &costs, None);
        assert_eq!(sol.violation, 0);
        assert_eq!(sol.split_groups(&items), vec![0]);
    }
}
