use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::matrix::FeatureMatrix;
use crate::prior::ClassPrior;

/// Gaussian class clusters for a labelled source and a label-shifted target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_means: Vec<Vec<f64>>,
    pub class_scales: Vec<f64>,
    pub source_prior: ClassPrior,
    pub target_prior: ClassPrior,
    pub n_source: usize,
    pub n_target: usize,
    /// Per-class translation applied to the target means.
    pub mean_shift: Vec<Vec<f64>>,
}

/// Features with their ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// The reverse-long-tail benchmark: 600 samples per domain, cluster
/// stddev 0.45 and target clusters rotated by 0.25 rad.
impl Default for SyntheticDomainSpec {
    fn default() -> Self {
        Self::reverse_long_tail(600, 0.45, 0.25)
    }
}

impl SyntheticDomainSpec {
    /// Six classes on a circle in the plane. The source is long-tailed
    /// towards class 0 and the target is the reverse; target clusters are
    /// rotated by `rotation` radians and every cluster has stddev `scale`.
    pub fn reverse_long_tail(n_target: usize, scale: f64, rotation: f64) -> Self {
        let source = vec![0.35, 0.25, 0.15, 0.12, 0.08, 0.05];
        let target: Vec<f64> = source.iter().rev().copied().collect();
        let c = source.len();
        let angle = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / c as f64;
        let class_means: Vec<Vec<f64>> = (0..c)
            .map(|k| vec![angle(k).cos(), angle(k).sin()])
            .collect();
        let mean_shift = (0..c)
            .map(|k| {
                let a = angle(k) + rotation;
                vec![a.cos() - class_means[k][0], a.sin() - class_means[k][1]]
            })
            .collect();
        Self {
            num_classes: c,
            feature_dim: 2,
            class_means,
            class_scales: vec![scale; c],
            source_prior: ClassPrior::new(source).expect("valid prior"),
            target_prior: ClassPrior::new(target).expect("valid prior"),
            n_source: n_target,
            n_target,
            mean_shift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if c == 0 || self.feature_dim == 0 {
            return Err(invalid_param(
                "spec",
                "need at least one class and one feature",
            ));
        }
        let matrix_ok = |m: &[Vec<f64>]| {
            m.len() == c
                && m.iter()
                    .all(|r| r.len() == self.feature_dim && r.iter().all(|x| x.is_finite()))
        };
        if !matrix_ok(&self.class_means) {
            return Err(Error::DimensionMismatch(format!(
                "class_means must be {c} x {} finite values",
                self.feature_dim
            )));
        }
        if !matrix_ok(&self.mean_shift) {
            return Err(Error::DimensionMismatch(format!(
                "mean_shift must be {c} x {} finite values",
                self.feature_dim
            )));
        }
        if self.class_scales.len() != c
            || self
                .class_scales
                .iter()
                .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(invalid_param(
                "class_scales",
                format!("need {c} finite values > 0"),
            ));
        }
        for (name, prior) in [
            ("source_prior", &self.source_prior),
            ("target_prior", &self.target_prior),
        ] {
            if prior.num_classes() != c {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} classes, expected {c}",
                    prior.num_classes()
                )));
            }
        }
        if self.n_source < c || self.n_target < c {
            return Err(invalid_param(
                "n_source/n_target",
                format!("sample counts must be >= {c}"),
            ));
        }
        Ok(())
    }
}

/// Class counts `floor(p_c n)` plus one extra sample for the largest
/// remainders, ties to the lower class.
pub fn largest_remainder_counts(prior: &ClassPrior, n: usize) -> Vec<usize> {
    let exact: Vec<f64> = prior.probs().iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Draws a source and a target domain. Class counts are exact
/// largest-remainder roundings of the priors; sample order is shuffled.
pub fn generate_shifted_domains(spec: &SyntheticDomainSpec, seed: u64) -> Result<(Domain, Domain)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = draw(spec, &spec.source_prior, spec.n_source, false, &mut rng);
    let target = draw(spec, &spec.target_prior, spec.n_target, true, &mut rng);
    Ok((source, target))
}

fn draw(
    spec: &SyntheticDomainSpec,
    prior: &ClassPrior,
    n: usize,
    shifted: bool,
    rng: &mut ChaCha8Rng,
) -> Domain {
    let counts = largest_remainder_counts(prior, n);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(rng);
    let d = spec.feature_dim;
    let mut values = Vec::with_capacity(n * d);
    for &l in &labels {
        for j in 0..d {
            let mut mean = spec.class_means[l][j];
            if shifted {
                mean += spec.mean_shift[l][j];
            }
            let z: f64 = rng.sample(StandardNormal);
            values.push(mean + spec.class_scales[l] * z);
        }
    }
    Domain {
        features: FeatureMatrix::new(n, d, values).expect("finite Gaussian draws"),
        labels,
    }
}
