//! Best-first branch-and-bound over class-count boxes.
//!
//! A node fixes a box `lo <= n <= hi` on the class counts and, per group,
//! the set of classes it may take. Its bound comes from [`flow::relax`]:
//! exact for unary bounds, and a Lagrangian bound when binary relationships
//! are present (multipliers tuned by Polyak subgradient steps, warm-started
//! from the parent). A relaxed solution that keeps every group in one class
//! is a genuine labelling and feeds the incumbent. Nodes branch on a split
//! group first, then on the count of a single class.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::flow::{relax, ClassCosts, FlowSolution, Items};
use super::{local, Instance, SolveReport};

const NODE_LIMIT: usize = 200_000;
const ROOT_ITERATIONS: usize = 40;
const NODE_ITERATIONS: usize = 25;
const STALL_LIMIT: usize = 3;

struct Node {
    lo: Vec<i64>,
    hi: Vec<i64>,
    restrict: Vec<(usize, Vec<bool>)>,
    lambda: Vec<f64>,
    /// Parent solutions at zero and at the inherited multipliers.
    warm0: Option<Vec<usize>>,
    warm: Option<Vec<usize>>,
    bound: f64,
    depth: usize,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a, 'p> {
    inst: &'a Instance<'p>,
    items: Items,
    tol: f64,
    incumbent: Option<(Vec<usize>, f64)>,
    seq: usize,
    /// Starting box; heuristic labellings outside it are not offered.
    root: (Vec<i64>, Vec<i64>),
}

/// Runs the exact search. `fixed_box` overrides the starting count box.
pub(crate) fn run(inst: &Instance<'_>, fixed_box: Option<(Vec<i64>, Vec<i64>)>) -> SolveReport {
    let total = inst.probs.rows();
    let nc = inst.probs.cols();
    let (lo, hi) = match fixed_box {
        Some(b) => b,
        None if inst.is_hard() => inst.cons.hard_box(),
        None => (vec![0; nc], vec![total as i64; nc]),
    };
    let mut search = Search {
        inst,
        items: Items::new(&inst.groups),
        tol: 1e-10 + 1e-14 * (1.0 + inst.cfg.soft_penalty()) * total as f64,
        incumbent: None,
        seq: 0,
        root: (lo.clone(), hi.clone()),
    };
    let argmax = inst.groups.argmax();
    if in_box(&inst.groups.counts(&argmax), &lo, &hi) {
        search.offer(&argmax);
    }
    search.offer_heuristic(&local::improve(inst, argmax));

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        lambda: vec![0.0; inst.cons.binary.len()],
        lo,
        hi,
        restrict: Vec::new(),
        warm0: None,
        warm: None,
        bound: f64::INFINITY,
        depth: 0,
        seq: 0,
    });
    let mut nodes = 0;
    let mut complete = true;
    while let Some(node) = heap.pop() {
        if search.prunable(node.bound) {
            continue;
        }
        if nodes >= NODE_LIMIT {
            complete = false;
            break;
        }
        nodes += 1;
        heap.extend(search.process(node));
    }

    match search.incumbent {
        Some((labels, _)) => inst.report(&labels, complete, true, nodes),
        None => inst.infeasible_report(nodes),
    }
}

fn in_box(counts: &[usize], lo: &[i64], hi: &[i64]) -> bool {
    counts
        .iter()
        .zip(lo.iter().zip(hi))
        .all(|(&n, (&l, &h))| l <= n as i64 && n as i64 <= h)
}

impl Search<'_, '_> {
    fn best(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|(_, v)| *v)
    }

    fn prunable(&self, bound: f64) -> bool {
        self.best().is_some_and(|b| bound <= b + self.tol)
    }

    /// Records a labelling if admissible and better; returns its value.
    fn offer(&mut self, group_labels: &[usize]) -> Option<f64> {
        let value = self.inst.evaluate(group_labels)?;
        if self.best().is_none_or(|b| value > b) {
            self.incumbent = Some((group_labels.to_vec(), value));
        }
        Some(value)
    }

    fn offer_heuristic(&mut self, group_labels: &[usize]) {
        if in_box(
            &self.inst.groups.counts(group_labels),
            &self.root.0,
            &self.root.1,
        ) {
            self.offer(group_labels);
        }
    }

    /// Box tightening from the total count and, in hard mode, from the
    /// binary relationships. Returns false when the box is empty.
    fn tighten(&self, lo: &mut [i64], hi: &mut [i64]) -> bool {
        let total = self.inst.probs.rows() as i64;
        let cons = &self.inst.cons;
        for _ in 0..64 {
            let mut changed = false;
            let sum_lo: i64 = lo.iter().sum();
            let sum_hi: i64 = hi.iter().sum();
            if sum_lo > total || sum_hi < total {
                return false;
            }
            for c in 0..lo.len() {
                let l = lo[c].max(total - (sum_hi - hi[c])).max(0);
                let h = hi[c].min(total - (sum_lo - lo[c])).min(total);
                changed |= l != lo[c] || h != hi[c];
                lo[c] = l;
                hi[c] = h;
            }
            if self.inst.is_hard() {
                for b in 0..cons.binary.len() {
                    let r = cons.binary[b];
                    let rhs = cons.hard_binary_rhs(b);
                    if lo[r.lesser] + rhs > lo[r.greater] {
                        lo[r.greater] = lo[r.lesser] + rhs;
                        changed = true;
                    }
                    if hi[r.greater] - rhs < hi[r.lesser] {
                        hi[r.lesser] = hi[r.greater] - rhs;
                        changed = true;
                    }
                }
            }
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return false;
            }
            if !changed {
                break;
            }
        }
        true
    }

    fn binary_rhs(&self, b: usize) -> f64 {
        if self.inst.is_hard() {
            self.inst.cons.hard_binary_rhs(b) as f64
        } else {
            self.inst.cons.binary[b].rhs
        }
    }

    fn process(&mut self, node: Node) -> Vec<Node> {
        let inst = self.inst;
        let nc = inst.probs.cols();
        let cons = &inst.cons;
        let nb = cons.binary.len();
        let penalty = inst.cfg.soft_penalty();

        let mut lo = node.lo.clone();
        let mut hi = node.hi.clone();
        if !self.tighten(&mut lo, &mut hi) {
            return Vec::new();
        }
        let mut allowed = vec![true; inst.groups.len() * nc];
        for (g, mask) in &node.restrict {
            for (a, &m) in allowed[g * nc..(g + 1) * nc].iter_mut().zip(mask) {
                *a &= m;
            }
        }

        let rhs: Vec<f64> = (0..nb).map(|b| self.binary_rhs(b)).collect();
        let cap = if inst.is_hard() {
            f64::INFINITY
        } else {
            penalty
        };
        let mut lambda = node.lambda.clone();
        let mut warm = node.warm.clone();
        let mut best_bound = node.bound;
        let mut avg = vec![0.0; nc];
        let mut avg_weight = 0.0;
        let zero = vec![0.0; nc];

        // With the multipliers at zero the relaxation ignores the binary
        // relationships; their cheapest violation over the box restores a
        // valid bound, which is exact once the box is a point.
        let sol0 = {
            let costs = ClassCosts {
                lo: &lo,
                hi: &hi,
                linear: &zero,
                penalty,
                cons,
            };
            relax(&self.items, &allowed, &costs, node.warm0.as_deref())
        };
        if sol0.violation > 0 {
            return Vec::new();
        }
        let min_violation: f64 = cons
            .binary
            .iter()
            .zip(&rhs)
            .map(|(r, &rhs)| (rhs - (hi[r.greater] - lo[r.lesser]) as f64).max(0.0))
            .sum();
        if inst.is_hard() && min_violation > 0.0 {
            return Vec::new();
        }
        let bound0 = -sol0.cost - penalty * min_violation;
        best_bound = best_bound.min(bound0);
        if let Some(done) = self.settle(&sol0, bound0, best_bound) {
            return done;
        }
        if warm.is_none() {
            warm = Some(sol0.class_of.clone());
        }
        let warm0 = sol0.class_of.clone();
        let mut last = sol0;

        let iterations = match nb {
            0 => 0,
            _ if node.depth == 0 => ROOT_ITERATIONS,
            _ => NODE_ITERATIONS,
        };
        // Polyak steps scaled by `theta`, halved whenever the bound stalls;
        // children inherit the multipliers of the best bound seen.
        let mut theta = 1.0;
        let mut stall = 0;
        let mut best_lambda = (f64::INFINITY, lambda.clone());
        for _ in 0..iterations {
            let mut linear = vec![0.0; nc];
            for (r, &l) in cons.binary.iter().zip(&lambda) {
                linear[r.greater] -= l;
                linear[r.lesser] += l;
            }
            let sol = {
                let costs = ClassCosts {
                    lo: &lo,
                    hi: &hi,
                    linear: &linear,
                    penalty,
                    cons,
                };
                relax(&self.items, &allowed, &costs, warm.as_deref())
            };
            let bound = -sol.cost - lambda.iter().zip(&rhs).map(|(l, r)| l * r).sum::<f64>();
            best_bound = best_bound.min(bound);
            if bound < best_lambda.0 - self.tol {
                best_lambda = (bound, lambda.clone());
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    theta *= 0.5;
                    stall = 0;
                }
            }
            for (a, &n) in avg.iter_mut().zip(&sol.counts) {
                *a += n as f64;
            }
            avg_weight += 1.0;
            if let Some(done) = self.settle(&sol, bound, best_bound) {
                return done;
            }

            let grad: Vec<f64> = cons
                .binary
                .iter()
                .zip(&rhs)
                .map(|(r, &rhs)| (sol.counts[r.greater] - sol.counts[r.lesser]) as f64 - rhs)
                .collect();
            warm = Some(sol.class_of.clone());
            last = sol;
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2 == 0.0 {
                break;
            }
            let target = self.best().unwrap_or(bound - 0.1 * (1.0 + bound.abs()));
            let step = theta * (bound - target).max(self.tol) / norm2;
            for (l, g) in lambda.iter_mut().zip(&grad) {
                *l = (*l - step * g).clamp(0.0, cap);
            }
        }

        if node.depth == 0 {
            let rounded = self.round(&last);
            self.offer_heuristic(&local::improve(inst, rounded));
        }
        let center: Vec<f64> = if avg_weight > 0.0 {
            avg.iter().map(|a| a / avg_weight).collect()
        } else {
            last.counts.iter().map(|&n| n as f64).collect()
        };
        self.branch(
            &node,
            lo,
            hi,
            &allowed,
            &last,
            &center,
            best_lambda.1,
            warm0,
            best_bound,
        )
    }

    /// Handles a relaxed solution: updates the incumbent and reports whether
    /// the node is finished (pruned or solved).
    fn settle(&mut self, sol: &FlowSolution, bound: f64, best_bound: f64) -> Option<Vec<Node>> {
        if sol.split_groups(&self.items).is_empty() {
            let labels = sol.group_labels(&self.items);
            if let Some(value) = self.offer(&labels) {
                if bound - value <= self.tol {
                    return Some(Vec::new());
                }
            }
        } else {
            let labels = self.round(sol);
            self.offer_heuristic(&labels);
        }
        self.prunable(best_bound).then(Vec::new)
    }

    /// Sends each split group to the class holding most of its items.
    fn round(&self, sol: &FlowSolution) -> Vec<usize> {
        (0..self.inst.groups.len())
            .map(|g| {
                let used = &sol.class_of[self.items.start[g]..self.items.start[g + 1]];
                let mut tally = vec![0usize; self.inst.probs.cols()];
                for &c in used {
                    tally[c] += 1;
                }
                (0..tally.len())
                    .max_by_key(|&c| (tally[c], std::cmp::Reverse(c)))
                    .unwrap_or(0)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &mut self,
        node: &Node,
        lo: Vec<i64>,
        hi: Vec<i64>,
        allowed: &[bool],
        sol: &FlowSolution,
        center: &[f64],
        lambda: Vec<f64>,
        warm0: Vec<usize>,
        bound: f64,
    ) -> Vec<Node> {
        let nc = self.inst.probs.cols();
        let mut children = Vec::new();
        let mut child = |this: &mut Self,
                         lo: Vec<i64>,
                         hi: Vec<i64>,
                         restrict: Vec<(usize, Vec<bool>)>,
                         warm: Vec<usize>| {
            this.seq += 1;
            children.push(Node {
                lo,
                hi,
                restrict,
                lambda: lambda.clone(),
                warm0: Some(warm0.clone()),
                warm: Some(warm),
                bound,
                depth: node.depth + 1,
                seq: this.seq,
            });
        };

        let split = sol.split_groups(&self.items);
        if let Some(&g) = split.iter().max_by(|&&a, &&b| {
            self.inst
                .groups
                .weight(a)
                .cmp(&self.inst.groups.weight(b))
                .then(b.cmp(&a))
        }) {
            let current = &allowed[g * nc..(g + 1) * nc];
            let used = sol.classes_of_group(&self.items, g);
            let items = self.items.start[g]..self.items.start[g + 1];
            for &c in &used {
                let mut mask = vec![false; nc];
                mask[c] = true;
                let mut restrict = node.restrict.clone();
                restrict.push((g, mask));
                let mut warm = sol.class_of.clone();
                warm[items.clone()].fill(c);
                child(self, lo.clone(), hi.clone(), restrict, warm);
            }
            let mut rest = current.to_vec();
            for &c in &used {
                rest[c] = false;
            }
            if rest.iter().any(|&m| m) {
                let mut restrict = node.restrict.clone();
                restrict.push((g, rest));
                child(self, lo, hi, restrict, sol.class_of.clone());
            }
            return children;
        }

        let score = |c: usize| {
            let f = center[c] - center[c].floor();
            f.min(1.0 - f)
        };
        let open: Vec<usize> = (0..nc).filter(|&c| lo[c] < hi[c]).collect();
        let involved = |c: usize| {
            self.inst
                .cons
                .binary
                .iter()
                .any(|r| r.greater == c || r.lesser == c)
        };
        let pick = open
            .iter()
            .copied()
            .filter(|&c| score(c) >= 0.05)
            .max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)))
            .or_else(|| {
                open.iter()
                    .copied()
                    .filter(|&c| involved(c))
                    .max_by(|&a, &b| (hi[a] - lo[a]).cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            })
            .or_else(|| open.first().copied());
        let Some(c) = pick else {
            return children;
        };
        let split_at = (center[c].floor() as i64).clamp(lo[c], hi[c] - 1);
        let mut left_hi = hi.clone();
        left_hi[c] = split_at;
        let mut right_lo = lo.clone();
        right_lo[c] = split_at + 1;
        child(
            self,
            lo,
            left_hi,
            node.restrict.clone(),
            sol.class_of.clone(),
        );
        child(
            self,
            right_lo,
            hi,
            node.restrict.clone(),
            sol.class_of.clone(),
        );
        children
    }
}
