//! Rectification of model-generated pseudo labels under prior knowledge about
//! the target class distribution.
//!
//! Prior knowledge comes as unary bounds on class proportions and binary
//! ordering relationships between classes ([`prior`]). Rectification is posed
//! as a zero-one program over one-hot label matrices with soft (slack-penalised)
//! or hard constraints, plus equality constraints tying uncertain samples to
//! their nearest confident neighbour. [`solver`] solves it exactly by
//! branch-and-bound on class counts with min-cost-flow relaxations, and ships
//! an exhaustive oracle for small instances. [`rectify`] runs the two-stage
//! pipeline, and [`harness`] is a small synthetic self-training loop used to
//! measure the downstream effect.

pub mod error;
pub mod harness;
pub mod matrix;
pub mod prior;
pub mod rectify;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::{DistanceMatrix, FeatureMatrix, LabelAssignment, ProbMatrix};
pub use prior::{BinaryRelationship, ClassPrior, PriorKnowledge, UnaryBound};
pub use rectify::{rectify, NeighborMetric, RectifyConfig, RectifyOutcome};
pub use solver::{
    brute_force, solve, solve_fixed_counts, ConstraintMode, Optimality, SmoothRegularization,
    SolveReport, SolverConfig, BRUTE_FORCE_LIMIT,
};
