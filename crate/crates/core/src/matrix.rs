//! Dense row-major matrices used across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

fn check_shape(rows: usize, cols: usize, len: usize, what: &str) -> Result<()> {
    if cols == 0 {
        return Err(Error::InvalidMatrix(format!("{what} has no columns")));
    }
    if rows.checked_mul(cols) != Some(len) {
        return Err(Error::InvalidMatrix(format!(
            "{what}: {len} values do not fill a {rows}x{cols} matrix"
        )));
    }
    Ok(())
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<(usize, usize, Vec<f64>)> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::InvalidMatrix(format!(
            "{what}: row {i} has {} entries, expected {cols}",
            rows[i].len()
        )));
    }
    let values: Vec<f64> = rows.iter().flatten().copied().collect();
    check_shape(rows.len(), cols, values.len(), what)?;
    Ok((rows.len(), cols, values))
}

/// Predicted class probabilities, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    from_scores: bool,
}

impl ProbMatrix {
    /// Builds from probabilities; every row must sum to one within 1e-6.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len(), "probability matrix")?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "probability entry ({}, {}) is {}",
                pos / cols,
                pos % cols,
                values[pos]
            )));
        }
        for (i, row) in values.chunks(cols).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidMatrix(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            from_scores: false,
        })
    }

    /// Builds from arbitrary finite scores; no row normalisation is checked.
    pub fn from_scores(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len(), "score matrix")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(
                "score matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            values,
            from_scores: true,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (r, c, v) = from_rows(rows, "probability matrix")?;
        Self::new(r, c, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_classes(&self) -> usize {
        self.cols
    }

    pub fn is_from_scores(&self) -> bool {
        self.from_scores
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.cols + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-row argmax, ties to the lowest class index.
    pub fn argmax(&self) -> LabelAssignment {
        LabelAssignment {
            labels: (0..self.rows).map(|i| argmax(self.row(i))).collect(),
        }
    }

    /// Column means, i.e. the average predicted class distribution.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.rows.max(1) as f64);
        mean
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// One class index per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelAssignment {
    labels: Vec<usize>,
}

impl LabelAssignment {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidMatrix(format!(
                "label {l} outside 0..{num_classes}"
            )));
        }
        Ok(Self { labels })
    }

    pub(crate) fn from_vec(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

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

    /// `⟨L, P⟩` for the one-hot matrix `L` of this assignment.
    pub fn score(&self, p: &ProbMatrix) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| p.get(i, l))
            .sum()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.labels
    }
}

/// Feature vectors, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, dim, values.len(), "feature matrix")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (r, c, v) = from_rows(rows, "feature matrix")?;
        Self::new(r, c, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Nonnegative sample-to-class distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, values.len(), "distance matrix")?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMatrix(
                "distances must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (r, c, v) = from_rows(rows, "distance matrix")?;
        Self::new(r, c, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_matrix_checks_rows() {
        assert!(ProbMatrix::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(ProbMatrix::new(1, 2, vec![0.5, f64::NAN]).is_err());
        assert!(ProbMatrix::new(2, 2, vec![0.5, 0.5]).is_err());
        assert!(ProbMatrix::from_scores(1, 2, vec![3.0, -1.0])
            .unwrap()
            .is_from_scores());
        assert!(ProbMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = ProbMatrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert_eq!(p.argmax().labels(), &[0, 1]);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn counts_and_score() {
        let p = ProbMatrix::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let l = LabelAssignment::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(l.class_counts(2), vec![1, 2]);
        assert!((l.score(&p) - 2.0).abs() < 1e-12);
        assert!(LabelAssignment::new(vec![2], 2).is_err());
    }
}
