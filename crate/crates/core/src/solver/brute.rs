//! Exhaustive oracle over group labellings.

use crate::error::{Error, Result};
use crate::matrix::ProbMatrix;
use crate::prior::PriorKnowledge;

use super::{Instance, SmoothRegularization, SolveReport, SolverConfig};

/// Largest number of labellings [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Enumerates every labelling that respects the pairs in `r` and returns the
/// best one; ties go to the lexicographically smallest label vector.
pub fn brute_force(
    p: &ProbMatrix,
    k: &PriorKnowledge,
    r: &SmoothRegularization,
    cfg: SolverConfig,
) -> Result<SolveReport> {
    run(&Instance::new(p, k, r, cfg)?)
}

pub(crate) fn run(inst: &Instance<'_>) -> Result<SolveReport> {
    let groups = inst.groups.len();
    let classes = inst.probs.cols();
    let assignments = (classes as f64).powi(groups as i32);
    if assignments > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            assignments,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut labels = vec![0usize; groups];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        if let Some(value) = inst.evaluate(&labels) {
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((labels.clone(), value));
            }
        }
        // odometer, last group fastest, so labellings come in lexicographic order
        let mut pos = groups;
        loop {
            if pos == 0 {
                return Ok(match best {
                    Some((labels, _)) => inst.report(&labels, true, true, 0),
                    None => inst.infeasible_report(0),
                });
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < classes {
                break;
            }
            labels[pos] = 0;
        }
    }
}
