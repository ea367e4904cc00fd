use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use prior_rectify::harness::{run_arm, AdaptConfig, AdaptTrace, Arm, SyntheticDomainSpec};
use prior_rectify::{ConstraintMode, NeighborMetric, Optimality, RectifyConfig};

use crate::io::{pretty, read_json, round_floats, to_rounded_json, write_atomic, Manifest};
use crate::Status;

#[derive(clap::Args)]
pub struct Args {
    /// Domain spec JSON (default: the built-in reverse-long-tail instance).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Comma-separated arms: baseline, ub<sigma>, br, ub<sigma>+br, each
    /// optionally suffixed with ~<phi> for a noisy prior.
    #[arg(long, value_delimiter = ',', default_value = "baseline,ub0")]
    arms: Vec<Arm>,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Sample-to-centroid distance.
    #[arg(long, default_value = "cosine")]
    distance: NeighborMetric,
    #[arg(long = "M", visible_alias = "penalty")]
    penalty: Option<f64>,
    #[arg(long, default_value = "soft")]
    mode: ConstraintMode,
    /// Skip the nearest-neighbour second stage.
    #[arg(long)]
    no_smooth: bool,
    #[arg(long, default_value = "exact")]
    optimality: Optimality,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Serialize)]
struct Stat {
    mean: f64,
    std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

const SUMMARY_METRICS: [&str; 6] = [
    "first_accuracy_before",
    "first_accuracy_after",
    "final_accuracy_after",
    "final_per_class_accuracy_after",
    "final_kl_after",
    "final_slack",
];

fn summary_values(trace: &AdaptTrace) -> [Option<f64>; 6] {
    let (first, last) = (trace.first(), trace.last());
    [
        Some(first.accuracy_before),
        Some(first.accuracy_after),
        Some(last.accuracy_after),
        Some(last.per_class_accuracy_after),
        last.kl_after,
        Some(last.slack),
    ]
}

pub fn run(args: Args) -> Result<Status> {
    let spec = match &args.spec {
        Some(path) => read_json::<SyntheticDomainSpec>(path)?,
        None => SyntheticDomainSpec::default(),
    };
    spec.validate()?;
    anyhow::ensure!(args.seeds > 0, "--seeds must be at least 1");
    anyhow::ensure!(!args.arms.is_empty(), "--arms is empty");
    let cfg = AdaptConfig {
        iterations: args.iterations,
        distance: args.distance,
        rectify: RectifyConfig {
            penalty: args.penalty,
            use_smooth: !args.no_smooth,
            metric: args.distance,
            mode: args.mode,
            optimality: args.optimality,
        },
    };
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let jobs: Vec<(Arm, u64)> = args
        .arms
        .iter()
        .flat_map(|&arm| seeds.iter().map(move |&s| (arm, s)))
        .collect();
    // Each run is deterministic in its seed; collecting preserves job order.
    let traces: Vec<AdaptTrace> = jobs
        .par_iter()
        .map(|&(arm, seed)| {
            run_arm(&spec, arm, seed, &cfg).with_context(|| format!("arm {arm}, seed {seed}"))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(&args.output)
        .with_context(|| format!("cannot create {}", args.output.display()))?;
    write_atomic(
        &args.output.join("spec.json"),
        &pretty(&serde_json::to_value(&spec)?)?,
    )?;

    let mut summary = Vec::new();
    let mut table = String::from("arm,metric,mean,std\n");
    for (a, arm) in args.arms.iter().enumerate() {
        let runs = &traces[a * seeds.len()..(a + 1) * seeds.len()];
        let name = arm.to_string();
        let mut lines = String::new();
        let mut hist = String::from("seed,iteration,stage");
        for c in 0..spec.num_classes {
            write!(hist, ",c{c}")?;
        }
        hist.push('\n');
        for (trace, &seed) in runs.iter().zip(&seeds) {
            for r in &trace.records {
                let mut line = json!({ "arm": name, "seed": seed });
                if let (Value::Object(dst), Value::Object(src)) = (&mut line, to_rounded_json(r)?) {
                    dst.extend(src);
                }
                lines.push_str(&serde_json::to_string(&line)?);
                lines.push('\n');
                for (stage, counts) in [
                    ("before", &r.histogram_before),
                    ("after", &r.histogram_after),
                ] {
                    write!(hist, "{seed},{},{stage}", r.iteration)?;
                    for k in counts {
                        write!(hist, ",{k}")?;
                    }
                    hist.push('\n');
                }
            }
        }
        write_atomic(
            &args.output.join(format!("trace_{name}.jsonl")),
            lines.as_bytes(),
        )?;
        write_atomic(
            &args.output.join(format!("histograms_{name}.csv")),
            hist.as_bytes(),
        )?;

        let per_run: Vec<[Option<f64>; 6]> = runs.iter().map(summary_values).collect();
        let mut metrics = serde_json::Map::new();
        for (m, metric) in SUMMARY_METRICS.iter().enumerate() {
            let values: Option<Vec<f64>> = per_run.iter().map(|v| v[m]).collect();
            let stat = values.map(|v| Stat::of(&v));
            if let Some(s) = &stat {
                let rounded = round_floats(json!([s.mean, s.std]));
                writeln!(table, "{name},{metric},{},{}", rounded[0], rounded[1])?;
            }
            metrics.insert(metric.to_string(), serde_json::to_value(stat)?);
        }
        summary.push(json!({ "arm": name, "seeds": seeds.len(), "metrics": metrics }));
    }
    write_atomic(
        &args.output.join("summary.json"),
        &pretty(&round_floats(Value::Array(summary)))?,
    )?;
    write_atomic(&args.output.join("summary.csv"), table.as_bytes())?;

    let config = json!({
        "arms": args.arms.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "seeds": seeds,
        "iterations": args.iterations,
        "distance": args.distance,
        "M": args.penalty,
        "mode": args.mode,
        "smooth": !args.no_smooth,
        "optimality": args.optimality,
        "spec": args.spec.as_ref().map_or("built-in".to_string(), |p| p.display().to_string()),
    });
    let inputs: Vec<&std::path::Path> = args.spec.as_deref().into_iter().collect();
    Manifest::new("simulate", &inputs, config).write_to(&args.output.join("manifest.json"))?;
    Ok(Status::Done)
}
