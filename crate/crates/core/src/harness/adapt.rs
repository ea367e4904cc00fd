use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{generate_shifted_domains, Domain, SyntheticDomainSpec};
use super::metrics::{
    accuracy, kl_to_truth, label_distribution, present_class_avg_accuracy, teacher_blend,
};
use crate::error::{invalid_param, Error, Result};
use crate::matrix::{FeatureMatrix, ProbMatrix};
use crate::prior::{
    estimate_prior, make_binary_relationships, make_unary_bounds, perturb_unary, ClassPrior,
    PriorKnowledge,
};
use crate::rectify::{
    centroid_distances, probs_from_distances, rectify, NeighborMetric, RectifyConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub iterations: usize,
    /// Distance from samples to class centroids.
    pub distance: NeighborMetric,
    pub rectify: RectifyConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            distance: NeighborMetric::Cosine,
            rectify: RectifyConfig::default(),
        }
    }
}

/// Metrics of one self-training iteration against the target ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Argmax of the iteration's probabilities.
    pub accuracy_before: f64,
    /// Pseudo labels actually used (rectified when knowledge is given).
    pub accuracy_after: f64,
    pub per_class_accuracy_before: f64,
    pub per_class_accuracy_after: f64,
    /// Label histogram K-L to the true target distribution; `None` when the
    /// labels put mass on a class absent from the target.
    pub kl_before: Option<f64>,
    pub kl_after: Option<f64>,
    pub histogram_before: Vec<usize>,
    pub histogram_after: Vec<usize>,
    pub uncertain: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptTrace {
    pub records: Vec<IterationRecord>,
}

impl AdaptTrace {
    pub fn first(&self) -> &IterationRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("trace has at least one iteration")
    }
}

/// Centroid self-training on `target`, starting from the `source` class means.
///
/// Each iteration computes soft predictions from centroid distances, moves
/// the centroids to prediction-weighted means, recomputes probabilities and
/// picks pseudo labels (rectified under `k` when given, argmax otherwise),
/// then moves each centroid to the mean of its pseudo-labelled samples. A
/// class left without samples keeps its previous centroid.
pub fn shot_like_adapt(
    source: &Domain,
    target: &Domain,
    k: Option<&PriorKnowledge>,
    cfg: &AdaptConfig,
) -> Result<AdaptTrace> {
    if cfg.iterations == 0 {
        return Err(invalid_param("iterations", "need at least one iteration"));
    }
    let c = check_domains(source, target, k)?;
    let truth_prior = label_distribution(&target.labels, c);
    let mut centroids = labelled_means(&source.features, &source.labels, c, None);
    let mut records = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let soft = probs_from_distances(&centroid_distances(
            &target.features,
            &centroids,
            cfg.distance,
        ));
        centroids = weighted_means(&target.features, &soft, &centroids);
        let p = probs_from_distances(&centroid_distances(
            &target.features,
            &centroids,
            cfg.distance,
        ));
        let before = p.argmax();
        let (after, uncertain, slack) = match k {
            Some(k) => {
                let out = rectify(&p, k, Some(&target.features), &cfg.rectify)?;
                (out.labels, out.uncertain.len(), out.second.slacks.total())
            }
            None => (before.clone(), 0, 0.0),
        };
        centroids = labelled_means(&target.features, after.labels(), c, Some(&centroids));
        records.push(IterationRecord {
            iteration,
            accuracy_before: accuracy(before.labels(), &target.labels)?,
            accuracy_after: accuracy(after.labels(), &target.labels)?,
            per_class_accuracy_before: present_class_avg_accuracy(
                before.labels(),
                &target.labels,
                c,
            )?,
            per_class_accuracy_after: present_class_avg_accuracy(
                after.labels(),
                &target.labels,
                c,
            )?,
            kl_before: kl_to_truth(&label_distribution(before.labels(), c), &truth_prior).ok(),
            kl_after: kl_to_truth(&label_distribution(after.labels(), c), &truth_prior).ok(),
            histogram_before: before.class_counts(c),
            histogram_after: after.class_counts(c),
            uncertain,
            slack,
        });
    }
    Ok(AdaptTrace { records })
}

/// Mean-teacher K-L diagnostics for a teacher built from source centroids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherComparison {
    /// Mean raw teacher probability vs the true target distribution.
    pub raw_kl: f64,
    /// Teacher blended with its own argmax labels.
    pub argmax_blend_kl: f64,
    /// Teacher blended with rectified labels.
    pub rectified_blend_kl: f64,
}

/// Blends source-centroid teacher probabilities with argmax and with
/// rectified labels and compares mean teacher distributions to the truth.
pub fn dine_like_teacher(
    source: &Domain,
    target: &Domain,
    k: &PriorKnowledge,
    cfg: &AdaptConfig,
    smoothing: f64,
) -> Result<TeacherComparison> {
    let c = check_domains(source, target, Some(k))?;
    let truth = label_distribution(&target.labels, c);
    let centroids = labelled_means(&source.features, &source.labels, c, None);
    let teacher = probs_from_distances(&centroid_distances(
        &target.features,
        &centroids,
        cfg.distance,
    ));
    let rectified = rectify(&teacher, k, Some(&target.features), &cfg.rectify)?.labels;
    let mean_kl = |m: &ProbMatrix| kl_to_truth(&m.mean_row(), &truth);
    Ok(TeacherComparison {
        raw_kl: mean_kl(&teacher)?,
        argmax_blend_kl: mean_kl(&teacher_blend(&teacher, &teacher.argmax(), smoothing)?)?,
        rectified_blend_kl: mean_kl(&teacher_blend(&teacher, &rectified, smoothing)?)?,
    })
}

fn check_domains(source: &Domain, target: &Domain, k: Option<&PriorKnowledge>) -> Result<usize> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Empty("source and target need samples".into()));
    }
    if source.features.dim() != target.features.dim() {
        return Err(Error::DimensionMismatch(format!(
            "source features have {} dims, target {}",
            source.features.dim(),
            target.features.dim()
        )));
    }
    if source.features.rows() != source.len() || target.features.rows() != target.len() {
        return Err(Error::DimensionMismatch(
            "feature rows and labels differ".into(),
        ));
    }
    let seen = source
        .labels
        .iter()
        .chain(&target.labels)
        .max()
        .map_or(0, |m| m + 1);
    let c = k.map_or(seen, |k| k.num_classes());
    if seen > c {
        return Err(Error::DimensionMismatch(format!(
            "label {} outside the {c} classes of the knowledge",
            seen - 1
        )));
    }
    Ok(c)
}

/// Per-class means; a class with no samples keeps `fallback` (or the zero
/// vector when there is none).
fn labelled_means(
    features: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    fallback: Option<&[Vec<f64>]>,
) -> Vec<Vec<f64>> {
    let d = features.dim();
    let mut sums = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(features.row(i)) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (sum, n))| match (n, fallback) {
            (0, Some(prev)) => prev[c].clone(),
            (0, None) => sum,
            _ => sum.into_iter().map(|s| s / n as f64).collect(),
        })
        .collect()
}

fn weighted_means(
    features: &FeatureMatrix,
    p: &ProbMatrix,
    fallback: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let d = features.dim();
    (0..p.cols())
        .map(|c| {
            let mut sum = vec![0.0; d];
            let mut mass = 0.0;
            for i in 0..p.rows() {
                let w = p.get(i, c);
                mass += w;
                for (s, x) in sum.iter_mut().zip(features.row(i)) {
                    *s += w * x;
                }
            }
            if mass > 0.0 {
                sum.iter().map(|s| s / mass).collect()
            } else {
                fallback[c].clone()
            }
        })
        .collect()
}

/// Which prior knowledge a harness run receives. Knowledge is built from
/// the realised target class distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    /// Unary bounds with this tightness.
    pub unary: Option<f64>,
    /// Binary relationships from the true class ranking.
    pub binary: bool,
    /// Multiplicative noise on the prior the unary bounds are built from.
    pub phi: f64,
}

impl Arm {
    pub const BASELINE: Arm = Arm {
        unary: None,
        binary: false,
        phi: 0.0,
    };

    pub fn unary(sigma: f64) -> Self {
        Arm {
            unary: Some(sigma),
            ..Self::BASELINE
        }
    }

    pub fn binary() -> Self {
        Arm {
            binary: true,
            ..Self::BASELINE
        }
    }

    pub fn with_noise(self, phi: f64) -> Self {
        Arm { phi, ..self }
    }

    pub fn is_baseline(&self) -> bool {
        self.unary.is_none() && !self.binary
    }

    /// Knowledge for a target with prior `truth`; `noise` supplies the
    /// per-class draws in [-1, 1] used when `phi > 0`.
    pub fn knowledge(&self, truth: &ClassPrior, noise: &[f64]) -> Result<Option<PriorKnowledge>> {
        if self.is_baseline() {
            return Ok(None);
        }
        let c = truth.num_classes();
        let mut k = PriorKnowledge::empty(c);
        if let Some(sigma) = self.unary {
            let q = if self.phi > 0.0 {
                perturb_unary(truth, self.phi, noise)?
            } else {
                truth.clone()
            };
            k = k.combine(&make_unary_bounds(&q, sigma)?)?;
        }
        if self.binary {
            k = k.combine(&make_binary_relationships(truth))?;
        }
        Ok(Some(k))
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_baseline() {
            return write!(f, "baseline");
        }
        let mut parts = Vec::new();
        if let Some(s) = self.unary {
            parts.push(format!("ub{s}"));
        }
        if self.binary {
            parts.push("br".to_string());
        }
        write!(f, "{}", parts.join("+"))?;
        if self.phi > 0.0 {
            write!(f, "~{}", self.phi)?;
        }
        Ok(())
    }
}

/// Parses `baseline`, `ub<sigma>`, `br` and `ub<sigma>+br`, optionally
/// followed by `~<phi>` for a noisy prior.
impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid_param("arm", format!("cannot parse `{s}`"));
        let (body, phi) = match s.split_once('~') {
            Some((b, p)) => (b, p.parse::<f64>().map_err(|_| bad())?),
            None => (s, 0.0),
        };
        if !(0.0..=1.0).contains(&phi) {
            return Err(bad());
        }
        if body == "baseline" {
            return if phi == 0.0 {
                Ok(Self::BASELINE)
            } else {
                Err(bad())
            };
        }
        let mut arm = Self::BASELINE.with_noise(phi);
        for part in body.split('+') {
            if part == "br" && !arm.binary {
                arm.binary = true;
            } else if let (Some(sigma), None) = (part.strip_prefix("ub"), arm.unary) {
                let sigma: f64 = sigma.parse().map_err(|_| bad())?;
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(bad());
                }
                arm.unary = Some(sigma);
            } else {
                return Err(bad());
            }
        }
        Ok(arm)
    }
}

/// Generates the domains for `seed` and runs one arm on them.
pub fn run_arm(
    spec: &SyntheticDomainSpec,
    arm: Arm,
    seed: u64,
    cfg: &AdaptConfig,
) -> Result<AdaptTrace> {
    let (source, target) = generate_shifted_domains(spec, seed)?;
    let truth = estimate_prior(&target.labels, spec.num_classes)?;
    let k = arm.knowledge(&truth, &noise_draws(seed, spec.num_classes))?;
    shot_like_adapt(&source, &target, k.as_ref(), cfg)
}

/// Per-class uniform draws in [-1, 1] for prior noise, from a stream
/// independent of the domain draws.
pub fn noise_draws(seed: u64, num_classes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..num_classes)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect()
}
