use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use prior_rectify::prior::{
    binary_chain, estimate_prior, make_unary_bounds, perturb_ranking, perturb_unary,
    select_partial, PartialMode,
};
use prior_rectify::{ClassPrior, PriorKnowledge};

use crate::io::{read_json, read_labels, write_atomic, Manifest};
use crate::Status;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Ub,
    Br,
    #[value(name = "ub+br")]
    UbBr,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("source").required(true).args(["labels", "prior"])))]
pub struct Args {
    /// Class labels, one index per line; the prior is their histogram.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Class prior as JSON `{"probs": [...]}`.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Number of classes for --labels (default: largest label + 1).
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long = "type", value_enum, default_value = "ub")]
    kind: Kind,
    /// Unary bound tightness: bounds are [q (1 - sigma), q (1 + sigma)].
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Multiplicative noise level on the prior used for unary bounds.
    #[arg(long, default_value_t = 0.0)]
    noise_phi: f64,
    /// Rank noise on the class ordering used for binary relationships.
    #[arg(long, default_value_t = 0)]
    rank_phi: u32,
    /// Keep only constraints of some classes, as `major:N`, `minor:N` or `random:N`.
    #[arg(long)]
    partial: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

pub fn run(args: Args) -> Result<Status> {
    let (q, input) = match (&args.labels, &args.prior) {
        (Some(path), _) => {
            let labels = read_labels(path)?;
            let c = match args.num_classes {
                Some(c) => c,
                None => labels.iter().max().map_or(0, |m| m + 1),
            };
            (estimate_prior(&labels, c)?, path)
        }
        (None, Some(path)) => (read_json::<ClassPrior>(path)?, path),
        (None, None) => unreachable!("clap requires one source"),
    };
    let c = q.num_classes();
    let partial = args.partial.as_deref().map(parse_partial).transpose()?;

    // One stream, always drawn in the same order, so each flag is
    // reproducible regardless of the others.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut draws = |lo: f64| -> Vec<f64> { (0..c).map(|_| rng.random_range(lo..=1.0)).collect() };
    let unary_noise = draws(-1.0);
    let rank_noise = draws(-1.0);
    let partial_draws = draws(0.0);

    let mut k = PriorKnowledge::empty(c);
    if matches!(args.kind, Kind::Ub | Kind::UbBr) {
        let noisy = if args.noise_phi > 0.0 {
            perturb_unary(&q, args.noise_phi, &unary_noise)?
        } else {
            q.clone()
        };
        k = k.combine(&make_unary_bounds(&noisy, args.sigma)?)?;
    }
    if matches!(args.kind, Kind::Br | Kind::UbBr) {
        let order = perturb_ranking(&q, args.rank_phi, &rank_noise)?;
        k = k.combine(&binary_chain(&order, c)?)?;
    }
    if let Some((mode, count)) = partial {
        k = select_partial(&k, &q, mode, count, &partial_draws)?;
    }

    let mut text = serde_json::to_vec_pretty(&k)?;
    text.push(b'\n');
    write_atomic(&args.output, &text)?;
    let config = json!({
        "type": format!("{:?}", args.kind).to_lowercase(),
        "sigma": args.sigma,
        "noise_phi": args.noise_phi,
        "rank_phi": args.rank_phi,
        "partial": args.partial,
        "num_classes": c,
        "seed": args.seed,
    });
    Manifest::new("gen-prior", &[input.as_path()], config).write_beside(&args.output)?;
    Ok(Status::Done)
}

fn parse_partial(s: &str) -> Result<(PartialMode, usize)> {
    let Some((mode, count)) = s.split_once(':') else {
        bail!("--partial expects MODE:COUNT, got `{s}`");
    };
    let count = count
        .parse()
        .with_context(|| format!("--partial count `{count}` is not a number"))?;
    Ok((mode.parse()?, count))
}
