//! Zero-one programs for pseudo-label rectification.
//!
//! The decision variable is a label per sample. The objective is the summed
//! probability of the chosen labels, `⟨L, P⟩`, and every piece of prior
//! knowledge constrains only the class counts `n_c` of the labelling:
//!
//! * unary bound on class `c`: `n_t ν_c <= n_c <= n_t μ_c`
//! * binary relationship `(a, b, δ)`: `n_a - n_b >= n_t δ`
//!
//! In [`ConstraintMode::Soft`] each violation is measured by a slack and the
//! objective becomes `⟨L, P⟩ - M Σ ξ`; in [`ConstraintMode::Hard`] violations
//! are forbidden. Smooth-regularization pairs force two samples to share a
//! label and are always hard.
//!
//! [`solve`] is exact: a branch-and-bound over class-count boxes whose
//! relaxation is a min-cost flow with convex class costs (binary
//! relationships enter through Lagrange multipliers). [`brute_force`] is the
//! exhaustive oracle used to certify it on small instances.

mod brute;
mod flow;
mod local;
pub(crate) mod model;
mod search;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::matrix::{LabelAssignment, ProbMatrix};
use crate::prior::PriorKnowledge;

pub use brute::{brute_force, BRUTE_FORCE_LIMIT};

use model::{Constraints, Groups};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    Hard,
    #[default]
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimality {
    /// Certified optimum by branch-and-bound.
    #[default]
    Exact,
    /// Local search; never certified.
    Heuristic,
    /// Enumeration of every labelling; small instances only.
    Exhaustive,
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            _ => Err(invalid_param("mode", format!("`{s}` is not hard or soft"))),
        }
    }
}

impl FromStr for Optimality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "heuristic" => Ok(Self::Heuristic),
            "exhaustive" | "brute" => Ok(Self::Exhaustive),
            _ => Err(invalid_param(
                "optimality",
                format!("`{s}` is not exact, heuristic or exhaustive"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Slack penalty; ignored in hard mode.
    pub penalty: f64,
    pub mode: ConstraintMode,
    pub optimality: Optimality,
}

impl SolverConfig {
    pub fn soft(penalty: f64) -> Self {
        Self {
            penalty,
            mode: ConstraintMode::Soft,
            optimality: Optimality::Exact,
        }
    }

    pub fn hard() -> Self {
        Self {
            penalty: 0.0,
            mode: ConstraintMode::Hard,
            optimality: Optimality::Exact,
        }
    }

    /// Soft mode with the customary `M = 10 n_t`.
    pub fn default_for(num_samples: usize) -> Self {
        Self::soft(10.0 * num_samples as f64)
    }

    pub fn with_optimality(mut self, optimality: Optimality) -> Self {
        self.optimality = optimality;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.penalty.is_finite() || self.penalty < 0.0 {
            return Err(invalid_param("M", format!("{} must be >= 0", self.penalty)));
        }
        Ok(())
    }

    pub(crate) fn soft_penalty(&self) -> f64 {
        match self.mode {
            ConstraintMode::Soft => self.penalty,
            ConstraintMode::Hard => 0.0,
        }
    }
}

/// Pairs `(member, anchor)` whose labels must agree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SmoothRegularization {
    pairs: Vec<(usize, usize)>,
}

impl SmoothRegularization {
    /// Structural checks happen when the pairs meet a concrete problem.
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_satisfied_by(&self, labels: &[usize]) -> bool {
        self.pairs.iter().all(|&(i, k)| labels[i] == labels[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnarySlack {
    pub class: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Slack of every constraint, in knowledge order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Slacks {
    pub unary: Vec<UnarySlack>,
    pub binary: Vec<f64>,
}

impl Slacks {
    pub fn total(&self) -> f64 {
        self.unary.iter().map(|u| u.lower + u.upper).sum::<f64>() + self.binary.iter().sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.total() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub assignment: LabelAssignment,
    /// `⟨L, P⟩`.
    pub objective: f64,
    /// `M Σ ξ`; zero in hard mode.
    pub penalty: f64,
    pub class_counts: Vec<usize>,
    pub slacks: Slacks,
    pub certified_optimal: bool,
    /// False only when hard constraints cannot be met.
    pub feasible: bool,
    /// Branch-and-bound nodes processed (zero for non-search strategies).
    pub nodes: usize,
}

impl SolveReport {
    /// The maximised quantity, `⟨L, P⟩ - M Σ ξ`.
    pub fn total(&self) -> f64 {
        self.objective - self.penalty
    }

    pub fn labels(&self) -> &[usize] {
        self.assignment.labels()
    }
}

/// Everything a strategy needs, validated once.
pub(crate) struct Instance<'a> {
    pub probs: &'a ProbMatrix,
    pub groups: Groups,
    pub cons: Constraints,
    pub cfg: SolverConfig,
}

impl<'a> Instance<'a> {
    pub fn new(
        probs: &'a ProbMatrix,
        k: &PriorKnowledge,
        r: &SmoothRegularization,
        cfg: SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if k.num_classes() != probs.cols() {
            return Err(Error::DimensionMismatch(format!(
                "knowledge covers {} classes, probabilities have {}",
                k.num_classes(),
                probs.cols()
            )));
        }
        if probs.rows() == 0 {
            return Err(Error::Empty("no samples to label".into()));
        }
        Ok(Self {
            probs,
            groups: Groups::build(probs, r)?,
            cons: Constraints::new(k, probs.rows()),
            cfg,
        })
    }

    pub fn is_hard(&self) -> bool {
        self.cfg.mode == ConstraintMode::Hard
    }

    /// Value of a group labelling: `Some(total)` when admissible.
    pub fn evaluate(&self, group_labels: &[usize]) -> Option<f64> {
        let counts = self.groups.counts(group_labels);
        let score: f64 = group_labels
            .iter()
            .enumerate()
            .map(|(g, &c)| self.groups.row(g)[c])
            .sum();
        let slack = self.cons.total_slack(&counts);
        if self.is_hard() {
            (slack == 0.0).then_some(score)
        } else {
            Some(score - self.cfg.penalty * slack)
        }
    }

    pub fn report(
        &self,
        group_labels: &[usize],
        certified_optimal: bool,
        feasible: bool,
        nodes: usize,
    ) -> SolveReport {
        let labels = self.groups.sample_labels(group_labels);
        let assignment = LabelAssignment::from_vec(labels);
        let class_counts = assignment.class_counts(self.probs.cols());
        let slacks = self.cons.slacks(&class_counts);
        let penalty = self.cfg.soft_penalty() * slacks.total();
        SolveReport {
            objective: assignment.score(self.probs),
            assignment,
            penalty,
            class_counts,
            slacks,
            certified_optimal,
            feasible,
            nodes,
        }
    }

    pub fn infeasible_report(&self, nodes: usize) -> SolveReport {
        self.report(&self.groups.argmax(), false, false, nodes)
    }
}

/// Optimal rectified labelling of `p` under knowledge `k` and pairs `r`.
///
/// In hard mode an unsatisfiable instance yields `feasible == false` and the
/// group-wise argmax labelling, not an error.
pub fn solve(
    p: &ProbMatrix,
    k: &PriorKnowledge,
    r: &SmoothRegularization,
    cfg: SolverConfig,
) -> Result<SolveReport> {
    let inst = Instance::new(p, k, r, cfg)?;
    Ok(match cfg.optimality {
        Optimality::Exact => search::run(&inst, None),
        Optimality::Heuristic => local::run(&inst),
        Optimality::Exhaustive => brute::run(&inst)?,
    })
}

/// Best labelling with exactly `counts[c]` samples in class `c`, honouring
/// the sample groups of `r`.
///
/// Returns the assignment and its score `⟨L, P⟩`.
pub fn solve_fixed_counts(
    p: &ProbMatrix,
    counts: &[usize],
    r: &SmoothRegularization,
) -> Result<(LabelAssignment, f64)> {
    if counts.len() != p.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} counts for {} classes",
            counts.len(),
            p.cols()
        )));
    }
    if counts.iter().sum::<usize>() != p.rows() {
        return Err(Error::InfeasibleCounts(counts.to_vec()));
    }
    let inst = Instance::new(p, &PriorKnowledge::empty(p.cols()), r, SolverConfig::hard())?;
    let fixed: Vec<i64> = counts.iter().map(|&c| c as i64).collect();
    let report = search::run(&inst, Some((fixed.clone(), fixed)));
    if !report.feasible {
        return Err(Error::InfeasibleCounts(counts.to_vec()));
    }
    Ok((report.assignment, report.objective))
}

#[cfg(test)]
mod tests;
