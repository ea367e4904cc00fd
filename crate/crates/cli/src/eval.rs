use std::path::PathBuf;

use anyhow::{ensure, Result};
use clap::ValueEnum;
use serde_json::json;

use prior_rectify::harness::{accuracy, kl_to_truth, label_distribution, per_class_avg_accuracy};

use crate::io::{read_labels, round_floats};
use crate::Status;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Metric {
    Acc,
    PerClassAcc,
    /// K-L divergence of the predicted label histogram to the true one.
    Kl,
}

#[derive(clap::Args)]
pub struct Args {
    /// Predicted labels, one per line.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "acc")]
    metric: Metric,
    /// Number of classes (default: largest label + 1).
    #[arg(long)]
    num_classes: Option<usize>,
}

pub fn run(args: Args) -> Result<Status> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    ensure!(
        pred.len() == truth.len(),
        "{} predictions for {} ground-truth labels",
        pred.len(),
        truth.len()
    );
    let seen = pred.iter().chain(&truth).max().map_or(0, |m| m + 1);
    let c = args.num_classes.unwrap_or(seen);
    ensure!(seen <= c, "label {} outside 0..{c}", seen - 1);
    let value = match args.metric {
        Metric::Acc => accuracy(&pred, &truth)?,
        Metric::PerClassAcc => per_class_avg_accuracy(&pred, &truth, c)?,
        Metric::Kl => kl_to_truth(
            &label_distribution(&pred, c),
            &label_distribution(&truth, c),
        )?,
    };
    let name = args
        .metric
        .to_possible_value()
        .expect("no skipped variants");
    println!(
        "{}",
        round_floats(json!({ "metric": name.get_name(), "value": value }))
    );
    Ok(Status::Done)
}
