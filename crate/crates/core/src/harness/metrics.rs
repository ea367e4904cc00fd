use crate::error::{invalid_param, Error, Result};
use crate::matrix::{LabelAssignment, ProbMatrix};

/// `(P_tch + l̃) / 2` with `l̃ = (1 - smoothing) onehot(l) + smoothing / C`.
///
/// `smoothing = 0.1` gives the usual `0.9 l + 0.1 / C`; `smoothing = 0`
/// blends with the bare one-hot label.
pub fn teacher_blend(
    teacher: &ProbMatrix,
    labels: &LabelAssignment,
    smoothing: f64,
) -> Result<ProbMatrix> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(invalid_param(
            "smoothing",
            format!("{smoothing} outside [0, 1)"),
        ));
    }
    if labels.len() != teacher.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} teacher rows",
            labels.len(),
            teacher.rows()
        )));
    }
    let c = teacher.cols();
    let floor = smoothing / c as f64;
    let mut values = Vec::with_capacity(teacher.rows() * c);
    for (i, &l) in labels.labels().iter().enumerate() {
        if l >= c {
            return Err(Error::InvalidMatrix(format!("label {l} outside 0..{c}")));
        }
        for (k, &t) in teacher.row(i).iter().enumerate() {
            let smooth = if k == l {
                1.0 - smoothing + floor
            } else {
                floor
            };
            values.push((t + smooth) / 2.0);
        }
    }
    ProbMatrix::new(teacher.rows(), c, values)
}

/// `Σ_c mean_c ln(mean_c / truth_c)`, with `0 ln 0 = 0`.
pub fn kl_to_truth(mean: &[f64], truth: &[f64]) -> Result<f64> {
    if mean.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions over {} and {} classes",
            mean.len(),
            truth.len()
        )));
    }
    let mut kl = 0.0;
    for (c, (&m, &t)) in mean.iter().zip(truth).enumerate() {
        if m < 0.0 || t < 0.0 {
            return Err(invalid_param("distribution", "negative probability"));
        }
        if m == 0.0 {
            continue;
        }
        if t == 0.0 {
            return Err(invalid_param(
                "truth",
                format!("class {c} has mass {m} but zero reference mass"),
            ));
        }
        kl += m * (m / t).ln();
    }
    Ok(kl.max(0.0))
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean over classes of per-class recall; every class in `0..num_classes`
/// must occur in `truth`.
pub fn per_class_avg_accuracy(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (hits, totals) = per_class_hits(pred, truth, num_classes)?;
    if let Some(c) = totals.iter().position(|&t| t == 0) {
        return Err(Error::Empty(format!(
            "class {c} has no ground-truth samples"
        )));
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| h as f64 / t as f64)
        .sum::<f64>()
        / num_classes as f64)
}

/// Like [`per_class_avg_accuracy`] but averages only over classes present in
/// `truth`, for label spaces where some classes are absent.
pub fn present_class_avg_accuracy(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (hits, totals) = per_class_hits(pred, truth, num_classes)?;
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no labels to evaluate".into()));
    }
    Ok(())
}

fn per_class_hits(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut hits = vec![0; num_classes];
    let mut totals = vec![0; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t >= num_classes || p >= num_classes {
            return Err(invalid_param(
                "labels",
                format!("label outside 0..{num_classes}"),
            ));
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    Ok((hits, totals))
}

/// Class histogram normalised to a distribution.
pub fn label_distribution(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; num_classes];
    for &l in labels {
        counts[l] += 1.0;
    }
    let n = labels.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}
