//! Two-stage rectification: solve under the prior knowledge alone, collect
//! the samples whose label moved away from the model's argmax, tie each of
//! them to its nearest unmoved neighbour in feature space, and solve again
//! with those equality constraints.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::matrix::{DistanceMatrix, FeatureMatrix, LabelAssignment, ProbMatrix};
use crate::prior::PriorKnowledge;
use crate::solver::{
    solve, ConstraintMode, Optimality, SmoothRegularization, SolveReport, SolverConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMetric {
    /// `1 - cos`, i.e. squared chord length of L2-normalised vectors halved.
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for NeighborMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(invalid_param(
                "metric",
                format!("unknown metric {other:?}, expected cosine|euclidean"),
            )),
        }
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

impl NeighborMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Cosine => {
                let (a, b) = (normalized(a), normalized(b));
                (1.0 - a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()).max(0.0)
            }
            Self::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectifyConfig {
    /// Slack penalty; `None` means `10 n_t`.
    pub penalty: Option<f64>,
    pub use_smooth: bool,
    pub metric: NeighborMetric,
    pub mode: ConstraintMode,
    pub optimality: Optimality,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            penalty: None,
            use_smooth: true,
            metric: NeighborMetric::Cosine,
            mode: ConstraintMode::Soft,
            optimality: Optimality::Exact,
        }
    }
}

impl RectifyConfig {
    pub fn solver_config(&self, num_samples: usize) -> SolverConfig {
        SolverConfig {
            penalty: self.penalty.unwrap_or(10.0 * num_samples as f64),
            mode: self.mode,
            optimality: self.optimality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifyOutcome {
    pub labels: LabelAssignment,
    /// Solve under the knowledge alone.
    pub first: SolveReport,
    /// Solve with smooth regularization; a copy of `first` when skipped.
    pub second: SolveReport,
    /// Samples whose first-stage label differs from the argmax.
    pub uncertain: Vec<usize>,
    pub pairs: SmoothRegularization,
    /// Every sample moved, so no anchor was available and the second stage
    /// was skipped.
    pub no_anchor: bool,
}

/// Row-wise `softmax(-D)`.
pub fn probs_from_distances(d: &DistanceMatrix) -> ProbMatrix {
    let mut values = Vec::with_capacity(d.rows() * d.cols());
    for i in 0..d.rows() {
        let row = d.row(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let exps: Vec<f64> = row.iter().map(|x| (min - x).exp()).collect();
        let s: f64 = exps.iter().sum();
        values.extend(exps.iter().map(|e| e / s));
    }
    ProbMatrix::new(d.rows(), d.cols(), values).expect("softmax rows are normalised")
}

/// Distances from every sample to every centroid.
pub fn centroid_distances(
    features: &FeatureMatrix,
    centroids: &[Vec<f64>],
    metric: NeighborMetric,
) -> DistanceMatrix {
    let values = (0..features.rows())
        .flat_map(|i| {
            centroids
                .iter()
                .map(move |c| metric.distance(features.row(i), c))
        })
        .collect();
    DistanceMatrix::new(features.rows(), centroids.len(), values)
        .expect("metric distances are finite and nonnegative")
}

/// Pairs each member with its closest non-member, ties to the lowest index.
pub fn nearest_anchor(
    features: &FeatureMatrix,
    members: &[usize],
    metric: NeighborMetric,
) -> Result<Vec<(usize, usize)>> {
    let n = features.rows();
    let mut is_member = vec![false; n];
    for &m in members {
        if m >= n {
            return Err(invalid_param(
                "members",
                format!("index {m} outside 0..{n}"),
            ));
        }
        is_member[m] = true;
    }
    let anchors: Vec<usize> = (0..n).filter(|&i| !is_member[i]).collect();
    if anchors.is_empty() {
        return Err(invalid_param(
            "members",
            "every sample is a member, no anchor left",
        ));
    }
    let prepared: Vec<Vec<f64>> = match metric {
        NeighborMetric::Cosine => (0..n).map(|i| normalized(features.row(i))).collect(),
        NeighborMetric::Euclidean => (0..n).map(|i| features.row(i).to_vec()).collect(),
    };
    let dist = |a: &[f64], b: &[f64]| match metric {
        NeighborMetric::Cosine => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        NeighborMetric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    };
    Ok(members
        .iter()
        .map(|&m| {
            let mut best = (f64::INFINITY, usize::MAX);
            for &a in &anchors {
                let d = dist(&prepared[m], &prepared[a]);
                if d < best.0 {
                    best = (d, a);
                }
            }
            (m, best.1)
        })
        .collect())
}

pub fn rectify(
    p: &ProbMatrix,
    k: &PriorKnowledge,
    features: Option<&FeatureMatrix>,
    cfg: &RectifyConfig,
) -> Result<RectifyOutcome> {
    if p.rows() == 0 {
        return Err(Error::Empty("empty target set".into()));
    }
    if cfg.use_smooth {
        match features {
            None => {
                return Err(invalid_param(
                    "features",
                    "smooth regularization needs features",
                ))
            }
            Some(f) if f.rows() != p.rows() => {
                return Err(Error::DimensionMismatch(format!(
                    "{} feature rows for {} samples",
                    f.rows(),
                    p.rows()
                )))
            }
            _ => {}
        }
    }
    let solver_cfg = cfg.solver_config(p.rows());
    let first = solve(p, k, &SmoothRegularization::empty(), solver_cfg)?;
    let argmax = p.argmax();
    let uncertain: Vec<usize> = argmax
        .labels()
        .iter()
        .zip(first.labels())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();

    let finish = |second: SolveReport, pairs, no_anchor| RectifyOutcome {
        labels: second.assignment.clone(),
        first: first.clone(),
        second,
        uncertain: uncertain.clone(),
        pairs,
        no_anchor,
    };
    let features = match features {
        Some(f) if cfg.use_smooth && !uncertain.is_empty() => f,
        _ => return Ok(finish(first.clone(), SmoothRegularization::empty(), false)),
    };
    if uncertain.len() == p.rows() {
        return Ok(finish(first.clone(), SmoothRegularization::empty(), true));
    }
    let pairs = SmoothRegularization::new(nearest_anchor(features, &uncertain, cfg.metric)?);
    let second = solve(p, k, &pairs, solver_cfg)?;
    Ok(finish(second, pairs, false))
}
