use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ArgGroup;
use serde::Serialize;
use serde_json::json;

use prior_rectify::rectify::probs_from_distances;
use prior_rectify::solver::Slacks;
use prior_rectify::{
    rectify, ConstraintMode, DistanceMatrix, FeatureMatrix, NeighborMetric, Optimality,
    PriorKnowledge, ProbMatrix, RectifyConfig, SolveReport,
};

use crate::io::{
    pretty, read_json, read_matrix, to_rounded_json, write_atomic, write_labels, Manifest,
};
use crate::Status;

#[derive(clap::Args)]
#[command(group(ArgGroup::new("scores").required(true).args(["probs", "distances"])))]
pub struct Args {
    /// Row-stochastic probabilities, one sample per row.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Sample-to-class distances; converted with softmax(-D).
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Prior-knowledge JSON; without it the result is the row argmax.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Sample features for nearest-neighbour smooth regularization.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Tie uncertain samples to their nearest confident neighbour (needs --features).
    #[arg(long)]
    smooth: bool,
    /// Slack penalty M (default: 10 x number of samples).
    #[arg(long = "M", visible_alias = "penalty")]
    penalty: Option<f64>,
    #[arg(long, default_value = "soft")]
    mode: ConstraintMode,
    #[arg(long, default_value = "cosine")]
    metric: NeighborMetric,
    /// exact, heuristic, or exhaustive (tiny instances only).
    #[arg(long, default_value = "exact")]
    optimality: Optimality,
    /// Output labels, one class index per line.
    #[arg(short, long)]
    output: PathBuf,
    /// Solver report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct StageReport<'a> {
    objective: f64,
    penalty: f64,
    total: f64,
    class_counts: &'a [usize],
    slacks: &'a Slacks,
    certified_optimal: bool,
    feasible: bool,
    nodes: usize,
}

impl<'a> From<&'a SolveReport> for StageReport<'a> {
    fn from(r: &'a SolveReport) -> Self {
        Self {
            objective: r.objective,
            penalty: r.penalty,
            total: r.total(),
            class_counts: &r.class_counts,
            slacks: &r.slacks,
            certified_optimal: r.certified_optimal,
            feasible: r.feasible,
            nodes: r.nodes,
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    #[serde(flatten)]
    result: StageReport<'a>,
    penalty_m: f64,
    uncertain: usize,
    smooth_pairs: usize,
    no_anchor: bool,
    first_stage: StageReport<'a>,
}

pub fn run(args: Args) -> Result<Status> {
    let (p, scores_path) = load_probs(&args)?;
    let c = p.cols();
    let k = match &args.prior {
        Some(path) => read_json::<PriorKnowledge>(path)?,
        None => PriorKnowledge::empty(c),
    };
    let features = match &args.features {
        Some(path) => {
            let (rows, dim, values) = read_matrix(path)?;
            Some(
                FeatureMatrix::new(rows, dim, values)
                    .with_context(|| format!("{}", path.display()))?,
            )
        }
        None => None,
    };
    let cfg = RectifyConfig {
        penalty: args.penalty,
        use_smooth: args.smooth,
        metric: args.metric,
        mode: args.mode,
        optimality: args.optimality,
    };
    let out = rectify(&p, &k, features.as_ref(), &cfg)?;
    let penalty_m = cfg.solver_config(p.rows()).penalty;

    write_labels(&args.output, out.labels.labels())?;
    let mut inputs: Vec<&Path> = vec![scores_path];
    inputs.extend(args.prior.as_deref());
    inputs.extend(args.features.as_deref());
    let config = json!({
        "M": penalty_m,
        "mode": args.mode,
        "smooth": args.smooth,
        "metric": args.metric,
        "optimality": args.optimality,
        "input": if args.probs.is_some() { "probs" } else { "distances" },
    });
    let manifest = Manifest::new("rectify", &inputs, config);
    manifest.write_beside(&args.output)?;
    if let Some(path) = &args.report {
        let report = Report {
            result: (&out.second).into(),
            penalty_m,
            uncertain: out.uncertain.len(),
            smooth_pairs: out.pairs.pairs().len(),
            no_anchor: out.no_anchor,
            first_stage: (&out.first).into(),
        };
        write_atomic(path, &pretty(&to_rounded_json(&report)?)?)?;
        manifest.write_beside(path)?;
    }
    Ok(if out.first.feasible && out.second.feasible {
        Status::Done
    } else {
        Status::Infeasible
    })
}

fn load_probs(args: &Args) -> Result<(ProbMatrix, &Path)> {
    if let Some(path) = &args.probs {
        let (rows, cols, values) = read_matrix(path)?;
        let p =
            ProbMatrix::new(rows, cols, values).with_context(|| format!("{}", path.display()))?;
        return Ok((p, path));
    }
    let path = args
        .distances
        .as_ref()
        .expect("clap requires probs or distances");
    let (rows, cols, values) = read_matrix(path)?;
    let d =
        DistanceMatrix::new(rows, cols, values).with_context(|| format!("{}", path.display()))?;
    Ok((probs_from_distances(&d), path))
}
