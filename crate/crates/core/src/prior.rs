//! Prior knowledge about the target class distribution.
//!
//! Two kinds of knowledge are modelled: a [`UnaryBound`] restricts the
//! proportion of one class to an interval, a [`BinaryRelationship`] requires
//! one class proportion to exceed another by a margin. Helpers build both
//! from an (estimated) class prior, inject noise, and keep subsets.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct ClassPrior {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPrior {
    probs: Vec<f64>,
}

impl TryFrom<RawPrior> for ClassPrior {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        ClassPrior::new(raw.probs)
    }
}

impl From<ClassPrior> for RawPrior {
    fn from(prior: ClassPrior) -> Self {
        RawPrior { probs: prior.probs }
    }
}

impl ClassPrior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPrior("no classes".into()));
        }
        if let Some((c, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidPrior(format!(
                "entry {c} is {p}, expected a finite value >= 0"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPrior(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalises nonnegative weights into a prior.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPrior(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidPrior("weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Class indices sorted by probability, largest first; ties go to the
    /// lower index.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

/// `lower <= p(class) <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnaryBound {
    #[serde(rename = "class")]
    pub class_index: usize,
    pub lower: f64,
    pub upper: f64,
}

/// `p(greater) - p(lesser) >= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRelationship {
    pub greater: usize,
    pub lesser: usize,
    pub delta: f64,
}

/// A validated collection of unary bounds and binary relationships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnowledge", into = "RawKnowledge")]
pub struct PriorKnowledge {
    num_classes: usize,
    unary: Vec<UnaryBound>,
    binary: Vec<BinaryRelationship>,
}

#[derive(Serialize, Deserialize)]
struct RawKnowledge {
    num_classes: usize,
    #[serde(default)]
    unary_bounds: Vec<UnaryBound>,
    #[serde(default)]
    binary_relationships: Vec<BinaryRelationship>,
}

impl TryFrom<RawKnowledge> for PriorKnowledge {
    type Error = Error;

    fn try_from(raw: RawKnowledge) -> Result<Self> {
        PriorKnowledge::new(raw.num_classes, raw.unary_bounds, raw.binary_relationships)
    }
}

impl From<PriorKnowledge> for RawKnowledge {
    fn from(k: PriorKnowledge) -> Self {
        RawKnowledge {
            num_classes: k.num_classes,
            unary_bounds: k.unary,
            binary_relationships: k.binary,
        }
    }
}

impl PriorKnowledge {
    pub fn new(
        num_classes: usize,
        unary: Vec<UnaryBound>,
        binary: Vec<BinaryRelationship>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidKnowledge(
                "num_classes must be positive".into(),
            ));
        }
        let mut seen = vec![false; num_classes];
        for b in &unary {
            if b.class_index >= num_classes {
                return Err(Error::InvalidKnowledge(format!(
                    "unary bound on class {} but only {num_classes} classes",
                    b.class_index
                )));
            }
            if seen[b.class_index] {
                return Err(Error::InvalidKnowledge(format!(
                    "more than one unary bound on class {}",
                    b.class_index
                )));
            }
            seen[b.class_index] = true;
            let ordered = 0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0;
            if !ordered {
                return Err(Error::InvalidKnowledge(format!(
                    "unary bound on class {} needs 0 <= lower <= upper <= 1, got [{}, {}]",
                    b.class_index, b.lower, b.upper
                )));
            }
        }
        for r in &binary {
            if r.greater >= num_classes || r.lesser >= num_classes {
                return Err(Error::InvalidKnowledge(format!(
                    "relationship {} >= {} references a class outside 0..{num_classes}",
                    r.greater, r.lesser
                )));
            }
            if r.greater == r.lesser {
                return Err(Error::InvalidKnowledge(format!(
                    "relationship relates class {} to itself",
                    r.greater
                )));
            }
            if !(-1.0..=1.0).contains(&r.delta) {
                return Err(Error::InvalidKnowledge(format!(
                    "relationship margin {} outside [-1, 1]",
                    r.delta
                )));
            }
        }
        Ok(Self {
            num_classes,
            unary,
            binary,
        })
    }

    pub fn empty(num_classes: usize) -> Self {
        Self {
            num_classes,
            unary: Vec::new(),
            binary: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn unary(&self) -> &[UnaryBound] {
        &self.unary
    }

    pub fn binary(&self) -> &[BinaryRelationship] {
        &self.binary
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty() && self.binary.is_empty()
    }

    pub fn len(&self) -> usize {
        self.unary.len() + self.binary.len()
    }

    /// Union of two knowledge sets over the same classes.
    pub fn combine(&self, other: &PriorKnowledge) -> Result<Self> {
        if self.num_classes != other.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "combining knowledge over {} and {} classes",
                self.num_classes, other.num_classes
            )));
        }
        let unary = self.unary.iter().chain(&other.unary).copied().collect();
        let binary = self.binary.iter().chain(&other.binary).copied().collect();
        Self::new(self.num_classes, unary, binary)
    }
}

/// Bounds `[q_c (1 - sigma), q_c (1 + sigma)]` for every class, clipped to `[0, 1]`.
pub fn make_unary_bounds(q: &ClassPrior, sigma: f64) -> Result<PriorKnowledge> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(invalid_param("sigma", format!("{sigma} must be >= 0")));
    }
    let unary = q
        .probs()
        .iter()
        .enumerate()
        .map(|(c, &p)| UnaryBound {
            class_index: c,
            lower: (p * (1.0 - sigma)).max(0.0),
            upper: (p * (1.0 + sigma)).min(1.0),
        })
        .collect();
    PriorKnowledge::new(q.num_classes(), unary, Vec::new())
}

/// Chain `p(c_0) >= p(c_1) >= ...` along the descending order of `q`.
pub fn make_binary_relationships(q: &ClassPrior) -> PriorKnowledge {
    binary_chain(&q.descending_order(), q.num_classes())
        .expect("descending order is a permutation of the classes")
}

/// Chain of zero-margin relationships following `order`, most frequent first.
pub fn binary_chain(order: &[usize], num_classes: usize) -> Result<PriorKnowledge> {
    let mut seen = vec![false; num_classes];
    for &c in order {
        if c >= num_classes || std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidKnowledge(format!(
                "ordering {order:?} is not a permutation of 0..{num_classes}"
            )));
        }
    }
    let binary = order
        .windows(2)
        .map(|w| BinaryRelationship {
            greater: w[0],
            lesser: w[1],
            delta: 0.0,
        })
        .collect();
    PriorKnowledge::new(num_classes, Vec::new(), binary)
}

fn check_draws(draws: &[f64], num_classes: usize) -> Result<()> {
    if draws.len() != num_classes {
        return Err(Error::DimensionMismatch(format!(
            "{} noise draws for {num_classes} classes",
            draws.len()
        )));
    }
    if draws.iter().any(|d| !d.is_finite() || d.abs() > 1.0) {
        return Err(invalid_param(
            "noise_draws",
            "every draw must lie in [-1, 1]",
        ));
    }
    Ok(())
}

/// Multiplicative uniform noise on class proportions.
///
/// Each class is shifted by `q_c * phi * draw_c`; the shifts are centred so
/// they sum to zero, negatives are clipped and the result renormalised.
pub fn perturb_unary(q: &ClassPrior, phi: f64, noise_draws: &[f64]) -> Result<ClassPrior> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(invalid_param("phi", format!("{phi} outside [0, 1]")));
    }
    check_draws(noise_draws, q.num_classes())?;
    let offsets: Vec<f64> = q
        .probs()
        .iter()
        .zip(noise_draws)
        .map(|(p, d)| p * phi * d)
        .collect();
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let noisy: Vec<f64> = q
        .probs()
        .iter()
        .zip(&offsets)
        .map(|(p, o)| (p + o - mean).max(0.0))
        .collect();
    ClassPrior::from_weights(&noisy)
}

/// Noisy re-sort of the class ranking: class `c` at rank `I_c` moves to
/// `I_c + varphi * draw_c` and classes are re-sorted by that position.
pub fn perturb_ranking(q: &ClassPrior, varphi: u32, noise_draws: &[f64]) -> Result<Vec<usize>> {
    check_draws(noise_draws, q.num_classes())?;
    let order = q.descending_order();
    let mut keyed: Vec<(f64, usize, usize)> = order
        .iter()
        .enumerate()
        .map(|(rank, &c)| (rank as f64 + f64::from(varphi) * noise_draws[c], rank, c))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    Ok(keyed.into_iter().map(|(_, _, c)| c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartialMode {
    Major,
    Minor,
    Random,
}

impl FromStr for PartialMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "major" | "maj" => Ok(Self::Major),
            "minor" | "min" => Ok(Self::Minor),
            "random" | "rnd" => Ok(Self::Random),
            other => Err(invalid_param(
                "mode",
                format!("unknown partial mode {other:?}, expected major|minor|random"),
            )),
        }
    }
}

impl fmt::Display for PartialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Major => "major",
            Self::Minor => "minor",
            Self::Random => "random",
        })
    }
}

/// Keeps the constraints attached to `count` selected classes.
///
/// A unary bound is attached to its class, a relationship to its `greater`
/// class. `Random` picks the `count` classes with the smallest `rng_draws`.
pub fn select_partial(
    k: &PriorKnowledge,
    q: &ClassPrior,
    mode: PartialMode,
    count: usize,
    rng_draws: &[f64],
) -> Result<PriorKnowledge> {
    let num_classes = k.num_classes();
    if q.num_classes() != num_classes {
        return Err(Error::DimensionMismatch(format!(
            "prior over {} classes, knowledge over {num_classes}",
            q.num_classes()
        )));
    }
    if count > num_classes {
        return Err(invalid_param(
            "count",
            format!("{count} exceeds the {num_classes} classes"),
        ));
    }
    let chosen: Vec<usize> = match mode {
        PartialMode::Major => q.descending_order().into_iter().take(count).collect(),
        PartialMode::Minor => q.descending_order().into_iter().rev().take(count).collect(),
        PartialMode::Random => {
            if rng_draws.len() != num_classes {
                return Err(Error::DimensionMismatch(format!(
                    "{} random draws for {num_classes} classes",
                    rng_draws.len()
                )));
            }
            let mut idx: Vec<usize> = (0..num_classes).collect();
            idx.sort_by(|&a, &b| {
                rng_draws[a]
                    .partial_cmp(&rng_draws[b])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            idx.truncate(count);
            idx
        }
    };
    let mut keep = vec![false; num_classes];
    for c in chosen {
        keep[c] = true;
    }
    let unary = k
        .unary()
        .iter()
        .filter(|b| keep[b.class_index])
        .copied()
        .collect();
    let binary = k
        .binary()
        .iter()
        .filter(|r| keep[r.greater])
        .copied()
        .collect();
    PriorKnowledge::new(num_classes, unary, binary)
}

/// Empirical class frequencies of `labels`.
pub fn estimate_prior(labels: &[usize], num_classes: usize) -> Result<ClassPrior> {
    if labels.is_empty() {
        return Err(Error::Empty("no labels to estimate a prior from".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::InvalidPrior(format!(
                "label {l} outside 0..{num_classes}"
            )));
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    ClassPrior::new(counts.iter().map(|&c| c as f64 / n).collect())
}
