use proptest::prelude::*;

use super::*;
use crate::prior::{
    make_binary_relationships, make_unary_bounds, BinaryRelationship, ClassPrior, UnaryBound,
};

fn probs(rows: &[&[f64]]) -> ProbMatrix {
    ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn ub(c: usize, lo: f64, hi: f64) -> UnaryBound {
    UnaryBound {
        class_index: c,
        lower: lo,
        upper: hi,
    }
}

/// Every labelling of `n` samples over `c` classes, lexicographic.
fn all_labellings(n: usize, c: usize) -> Vec<Vec<usize>> {
    (0..c.pow(n as u32))
        .map(|mut code| {
            let mut v = vec![0; n];
            for slot in v.iter_mut().rev() {
                *slot = code % c;
                code /= c;
            }
            v
        })
        .collect()
}

#[test]
fn identity_matrix_without_knowledge() {
    let p = probs(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let rep = solve(
        &p,
        &PriorKnowledge::empty(2),
        &SmoothRegularization::empty(),
        SolverConfig::soft(0.0),
    )
    .unwrap();
    assert_eq!(rep.labels(), &[0, 1]);
    assert_eq!(rep.objective, 2.0);
    assert!(rep.certified_optimal && rep.feasible);
}

#[test]
fn cheapest_sample_flips_to_meet_lower_bound() {
    let p = probs(&[&[0.9, 0.1], &[0.8, 0.2], &[0.6, 0.4]]);
    let third = 1.0 / 3.0;
    let k = PriorKnowledge::new(2, vec![ub(0, third, 1.0), ub(1, third, 1.0)], vec![]).unwrap();
    let rep = solve(
        &p,
        &k,
        &SmoothRegularization::empty(),
        SolverConfig::soft(30.0),
    )
    .unwrap();

    // enumerate all eight labellings by hand
    let mut best = (f64::NEG_INFINITY, vec![]);
    for l in all_labellings(3, 2) {
        let ones = l.iter().filter(|&&c| c == 1).count();
        let zeros = 3 - ones;
        let slack = (1.0 - zeros as f64).max(0.0) + (1.0 - ones as f64).max(0.0);
        let v: f64 = l.iter().enumerate().map(|(i, &c)| p.get(i, c)).sum::<f64>() - 30.0 * slack;
        if v > best.0 {
            best = (v, l);
        }
    }
    assert_eq!(best.1, vec![0, 0, 1]);
    assert_eq!(rep.labels(), &[0, 0, 1]);
    assert!((rep.total() - best.0).abs() < 1e-12);
    assert!(rep.slacks.is_zero());
}

#[test]
fn zero_upper_bound_empties_the_class() {
    let p = probs(&[&[0.0, 0.0, 1.0], &[0.1, 0.0, 0.9], &[0.0, 0.2, 0.8]]);
    let k = PriorKnowledge::new(3, vec![ub(2, 0.0, 0.0)], vec![]).unwrap();
    let rep = solve(
        &p,
        &k,
        &SmoothRegularization::empty(),
        SolverConfig::default_for(3),
    )
    .unwrap();
    assert_eq!(rep.class_counts[2], 0);
    assert_eq!(rep.labels(), &[0, 0, 1]);
}

#[test]
fn brute_force_examples() {
    let uniform = probs(&[&[0.25, 0.25, 0.25, 0.25]]);
    let rep = brute_force(
        &uniform,
        &PriorKnowledge::empty(4),
        &SmoothRegularization::empty(),
        SolverConfig::soft(5.0),
    )
    .unwrap();
    assert_eq!(rep.labels(), &[0]);

    let p = probs(&[&[0.2, 0.8], &[0.7, 0.3], &[0.5, 0.5]]);
    let rep = brute_force(
        &p,
        &PriorKnowledge::empty(2),
        &SmoothRegularization::empty(),
        SolverConfig::soft(3.0),
    )
    .unwrap();
    assert_eq!(rep.labels(), p.argmax().labels());

    let big = ProbMatrix::new(30, 2, [0.5; 60].to_vec()).unwrap();
    let err = brute_force(
        &big,
        &PriorKnowledge::empty(2),
        &SmoothRegularization::empty(),
        SolverConfig::soft(1.0),
    );
    assert!(matches!(err, Err(Error::TooLarge { .. })));
}

#[test]
fn fixed_count_examples() {
    let p = probs(&[&[0.9, 0.1], &[0.8, 0.2]]);
    let (l, v) = solve_fixed_counts(&p, &[1, 1], &SmoothRegularization::empty()).unwrap();
    assert_eq!(l.labels(), &[0, 1]);
    assert!((v - 1.1).abs() < 1e-12);

    let p3 = probs(&[&[0.1, 0.5, 0.4], &[0.3, 0.3, 0.4], &[0.6, 0.2, 0.2]]);
    let (l, v) = solve_fixed_counts(&p3, &[3, 0, 0], &SmoothRegularization::empty()).unwrap();
    assert_eq!(l.labels(), &[0, 0, 0]);
    assert!((v - 1.0).abs() < 1e-12);

    let hist = p3.argmax().class_counts(3);
    let (l, _) = solve_fixed_counts(&p3, &hist, &SmoothRegularization::empty()).unwrap();
    assert_eq!(l.labels(), p3.argmax().labels());

    // a group of two cannot fill a single slot on its own
    let r = SmoothRegularization::new(vec![(1, 0)]);
    assert!(matches!(
        solve_fixed_counts(&probs(&[&[0.5, 0.5], &[0.5, 0.5]]), &[1, 1], &r),
        Err(Error::InfeasibleCounts(_))
    ));
    assert!(solve_fixed_counts(&p, &[2, 1], &SmoothRegularization::empty()).is_err());
}

#[test]
fn hard_mode_reports_infeasibility() {
    let p = probs(&[&[0.5, 0.5], &[0.5, 0.5]]);
    let k = PriorKnowledge::new(2, vec![ub(0, 0.9, 1.0), ub(1, 0.9, 1.0)], vec![]).unwrap();
    let rep = solve(&p, &k, &SmoothRegularization::empty(), SolverConfig::hard()).unwrap();
    assert!(!rep.feasible);
    let brute = brute_force(&p, &k, &SmoothRegularization::empty(), SolverConfig::hard()).unwrap();
    assert!(!brute.feasible);
}

#[test]
fn hard_mode_binary_relationship() {
    let p = probs(&[&[0.2, 0.8], &[0.3, 0.7], &[0.45, 0.55], &[0.1, 0.9]]);
    let k = PriorKnowledge::new(
        2,
        vec![],
        vec![BinaryRelationship {
            greater: 0,
            lesser: 1,
            delta: 0.0,
        }],
    )
    .unwrap();
    let rep = solve(&p, &k, &SmoothRegularization::empty(), SolverConfig::hard()).unwrap();
    assert_eq!(rep.labels(), &[1, 0, 0, 1]);
    assert_eq!(rep.penalty, 0.0);
    assert!(rep.slacks.is_zero());
}

#[test]
fn pairs_share_labels() {
    let p = probs(&[&[0.9, 0.1], &[0.2, 0.8], &[0.6, 0.4], &[0.3, 0.7]]);
    let r = SmoothRegularization::new(vec![(1, 0), (3, 2)]);
    let rep = solve(&p, &PriorKnowledge::empty(2), &r, SolverConfig::soft(1.0)).unwrap();
    assert!(r.is_satisfied_by(rep.labels()));
    assert_eq!(rep.labels(), &[0, 0, 1, 1]);
}

#[test]
fn dimension_checks() {
    let p = probs(&[&[0.5, 0.5]]);
    assert!(solve(
        &p,
        &PriorKnowledge::empty(3),
        &SmoothRegularization::empty(),
        SolverConfig::soft(1.0)
    )
    .is_err());
    assert!(solve(
        &p,
        &PriorKnowledge::empty(2),
        &SmoothRegularization::empty(),
        SolverConfig::soft(-1.0)
    )
    .is_err());
    assert!(solve(
        &p,
        &PriorKnowledge::empty(2),
        &SmoothRegularization::new(vec![(0, 4)]),
        SolverConfig::soft(1.0)
    )
    .is_err());
}

#[test]
fn large_instance_meets_exact_counts() {
    // 300 samples, 4 classes, prior forces a histogram far from the argmax one
    let mut state = 0x2545F4914F6CDD1Du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let w: Vec<f64> = (0..4)
                .map(|c| next() + if c == 0 { 0.6 } else { 0.0 })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    let p = ProbMatrix::from_rows(&rows).unwrap();
    let q = ClassPrior::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let k = make_unary_bounds(&q, 0.0).unwrap();
    let rep = solve(
        &p,
        &k,
        &SmoothRegularization::empty(),
        SolverConfig::default_for(300),
    )
    .unwrap();
    assert_eq!(rep.class_counts, vec![30, 60, 90, 120]);
    assert!(rep.certified_optimal);
    let (_, fixed) =
        solve_fixed_counts(&p, &rep.class_counts, &SmoothRegularization::empty()).unwrap();
    assert!((fixed - rep.objective).abs() < 1e-9);

    let k = make_binary_relationships(&q);
    let rep = solve(
        &p,
        &k,
        &SmoothRegularization::empty(),
        SolverConfig::default_for(300),
    )
    .unwrap();
    assert!(rep.slacks.is_zero());
    assert!(rep.certified_optimal);

    let heur = solve(
        &p,
        &make_unary_bounds(&q, 0.0).unwrap(),
        &SmoothRegularization::empty(),
        SolverConfig::default_for(300).with_optimality(Optimality::Heuristic),
    )
    .unwrap();
    assert!(!heur.certified_optimal);
}

#[derive(Debug, Clone)]
struct Case {
    p: ProbMatrix,
    k: PriorKnowledge,
    r: SmoothRegularization,
}

fn arb_case() -> impl Strategy<Value = Case> {
    (1usize..=6, 2usize..=3).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), n),
            prop::collection::vec((0.0f64..0.6, 0.0f64..0.6, any::<bool>()), c),
            prop::collection::vec((0usize..c, 0usize..c, -0.3f64..0.4), 0..3),
            prop::collection::vec((0usize..n, 0usize..n), 0..3),
        )
            .prop_map(move |(rows, unary, binary, pairs)| {
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|x| x / s).collect()
                    })
                    .collect();
                let unary = unary
                    .into_iter()
                    .enumerate()
                    .filter(|(_, (_, _, keep))| *keep)
                    .map(|(c, (a, b, _))| ub(c, a.min(b), (a.max(b) + 0.2).min(1.0)))
                    .collect();
                let binary = binary
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    .map(|(a, b, d)| BinaryRelationship {
                        greater: a,
                        lesser: b,
                        delta: d,
                    })
                    .collect();
                let mut used = vec![false; n];
                let mut members = vec![false; n];
                let mut kept = Vec::new();
                for (m, a) in pairs {
                    if m != a && !used[m] && !members[a] {
                        used[m] = true;
                        used[a] = true;
                        members[m] = true;
                        kept.push((m, a));
                    }
                }
                Case {
                    p: ProbMatrix::from_rows(&rows).unwrap(),
                    k: PriorKnowledge::new(c, unary, binary).unwrap(),
                    r: SmoothRegularization::new(kept),
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_matches_oracle(case in arb_case(), m in prop::sample::select(vec![0.0, 0.5, 1.0, 60.0])) {
        let cfg = SolverConfig::soft(m);
        let exact = solve(&case.p, &case.k, &case.r, cfg).unwrap();
        let oracle = brute_force(&case.p, &case.k, &case.r, cfg).unwrap();
        prop_assert!((exact.total() - oracle.total()).abs() < 1e-9,
            "exact {} oracle {}", exact.total(), oracle.total());
        prop_assert!(case.r.is_satisfied_by(exact.labels()));
        prop_assert!(exact.certified_optimal);
        prop_assert_eq!(exact.class_counts.iter().sum::<usize>(), case.p.rows());
        prop_assert!((exact.objective - exact.assignment.score(&case.p)).abs() < 1e-9);
    }

    #[test]
    fn hard_exact_matches_oracle(case in arb_case()) {
        let exact = solve(&case.p, &case.k, &case.r, SolverConfig::hard()).unwrap();
        let oracle = brute_force(&case.p, &case.k, &case.r, SolverConfig::hard()).unwrap();
        prop_assert_eq!(exact.feasible, oracle.feasible);
        if oracle.feasible {
            prop_assert!((exact.objective - oracle.objective).abs() < 1e-9);
            prop_assert!(exact.slacks.is_zero());
        }
    }

    #[test]
    fn heuristic_never_beats_exact(case in arb_case()) {
        let cfg = SolverConfig::soft(2.0);
        let exact = solve(&case.p, &case.k, &case.r, cfg).unwrap();
        let heur = solve(&case.p, &case.k, &case.r, cfg.with_optimality(Optimality::Heuristic)).unwrap();
        prop_assert!(heur.total() <= exact.total() + 1e-9);
        prop_assert!(case.r.is_satisfied_by(heur.labels()));
    }
}
