//! Problem data shared by the exact search, the local search and the oracle:
//! merged sample groups and count-level constraints.

use crate::error::{Error, Result};
use crate::matrix::ProbMatrix;
use crate::prior::PriorKnowledge;

use super::{Slacks, SmoothRegularization, UnarySlack};

/// Tolerance for snapping right-hand sides onto integers.
pub(crate) const RHS_EPS: f64 = 1e-9;

/// Rounds `x` to the nearest integer when it lies within [`RHS_EPS`] of it.
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= RHS_EPS {
        r
    } else {
        x
    }
}

/// Samples tied together by smooth regularization, ordered by their
/// smallest member so that group-level lexicographic order matches
/// sample-level lexicographic order.
#[derive(Debug, Clone)]
pub(crate) struct Groups {
    pub members: Vec<Vec<usize>>,
    pub of_sample: Vec<usize>,
    /// Summed probability rows, `len() * num_classes` values.
    pub rows: Vec<f64>,
    pub num_classes: usize,
}

impl Groups {
    pub fn build(p: &ProbMatrix, r: &SmoothRegularization) -> Result<Self> {
        let n = p.rows();
        let classes = p.cols();
        let mut root: Vec<usize> = (0..n).collect();
        let mut is_member = vec![false; n];
        for &(member, anchor) in r.pairs() {
            if member >= n || anchor >= n {
                return Err(Error::InvalidRegularization(format!(
                    "pair ({member}, {anchor}) references a sample outside 0..{n}"
                )));
            }
            if std::mem::replace(&mut is_member[member], true) {
                return Err(Error::InvalidRegularization(format!(
                    "sample {member} appears as a member twice"
                )));
            }
            root[member] = anchor;
        }
        if let Some(&(_, anchor)) = r.pairs().iter().find(|(_, a)| is_member[*a]) {
            return Err(Error::InvalidRegularization(format!(
                "anchor {anchor} is itself a member"
            )));
        }

        let mut slot = vec![usize::MAX; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut of_sample = vec![0; n];
        for i in 0..n {
            let g = root[i];
            if slot[g] == usize::MAX {
                slot[g] = members.len();
                members.push(Vec::new());
            }
            members[slot[g]].push(i);
            of_sample[i] = slot[g];
        }

        let mut rows = vec![0.0; members.len() * classes];
        for (g, ms) in members.iter().enumerate() {
            let row = &mut rows[g * classes..(g + 1) * classes];
            for &i in ms {
                for (acc, v) in row.iter_mut().zip(p.row(i)) {
                    *acc += v;
                }
            }
        }
        Ok(Self {
            members,
            of_sample,
            rows,
            num_classes: classes,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn weight(&self, g: usize) -> usize {
        self.members[g].len()
    }

    pub fn row(&self, g: usize) -> &[f64] {
        &self.rows[g * self.num_classes..(g + 1) * self.num_classes]
    }

    pub fn counts(&self, group_labels: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for (g, &c) in group_labels.iter().enumerate() {
            counts[c] += self.weight(g);
        }
        counts
    }

    pub fn sample_labels(&self, group_labels: &[usize]) -> Vec<usize> {
        self.of_sample.iter().map(|&g| group_labels[g]).collect()
    }

    /// Per-group argmax of the summed rows, ties to the lowest class.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.len())
            .map(|g| crate::matrix::argmax(self.row(g)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct UnaryRow {
    pub class: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BinaryRow {
    pub greater: usize,
    pub lesser: usize,
    pub rhs: f64,
}

/// Constraints expressed on class counts: right-hand sides are the prior
/// knowledge scaled by the sample count and snapped onto integers.
#[derive(Debug, Clone)]
pub(crate) struct Constraints {
    pub total: usize,
    pub num_classes: usize,
    pub unary: Vec<UnaryRow>,
    pub binary: Vec<BinaryRow>,
    unary_of_class: Vec<Option<usize>>,
}

impl Constraints {
    pub fn new(k: &PriorKnowledge, total: usize) -> Self {
        let n = total as f64;
        let unary: Vec<UnaryRow> = k
            .unary()
            .iter()
            .map(|b| UnaryRow {
                class: b.class_index,
                lower: snap(n * b.lower),
                upper: snap(n * b.upper),
            })
            .collect();
        let mut unary_of_class = vec![None; k.num_classes()];
        for (j, u) in unary.iter().enumerate() {
            unary_of_class[u.class] = Some(j);
        }
        let binary = k
            .binary()
            .iter()
            .map(|r| BinaryRow {
                greater: r.greater,
                lesser: r.lesser,
                rhs: snap(n * r.delta),
            })
            .collect();
        Self {
            total,
            num_classes: k.num_classes(),
            unary,
            binary,
            unary_of_class,
        }
    }

    #[cfg(test)]
    pub fn none(num_classes: usize, total: usize) -> Self {
        Self::new(&PriorKnowledge::empty(num_classes), total)
    }

    /// Summed lower and upper slack of the unary bound on `class`.
    pub fn unary_slack(&self, class: usize, count: i64) -> f64 {
        match self.unary_of_class[class] {
            Some(j) => {
                let u = self.unary[j];
                let n = count as f64;
                (u.lower - n).max(0.0) + (n - u.upper).max(0.0)
            }
            None => 0.0,
        }
    }

    pub fn binary_slack(&self, b: usize, counts: &[i64]) -> f64 {
        let r = self.binary[b];
        (r.rhs - (counts[r.greater] - counts[r.lesser]) as f64).max(0.0)
    }

    pub fn slacks(&self, counts: &[usize]) -> Slacks {
        let icounts: Vec<i64> = counts.iter().map(|&c| c as i64).collect();
        Slacks {
            unary: self
                .unary
                .iter()
                .map(|u| {
                    let n = counts[u.class] as f64;
                    UnarySlack {
                        class: u.class,
                        lower: (u.lower - n).max(0.0),
                        upper: (n - u.upper).max(0.0),
                    }
                })
                .collect(),
            binary: (0..self.binary.len())
                .map(|b| self.binary_slack(b, &icounts))
                .collect(),
        }
    }

    pub fn total_slack(&self, counts: &[usize]) -> f64 {
        self.slacks(counts).total()
    }

    /// Integer count box implied by the unary bounds in hard mode.
    pub fn hard_box(&self) -> (Vec<i64>, Vec<i64>) {
        let total = self.total as i64;
        let mut lo = vec![0; self.num_classes];
        let mut hi = vec![total; self.num_classes];
        for u in &self.unary {
            lo[u.class] = (u.lower.ceil() as i64).max(0);
            hi[u.class] = (u.upper.floor() as i64).min(total);
        }
        (lo, hi)
    }

    /// Smallest integer difference `n_greater - n_lesser` accepted in hard mode.
    pub fn hard_binary_rhs(&self, b: usize) -> i64 {
        self.binary[b].rhs.ceil() as i64
    }
}
