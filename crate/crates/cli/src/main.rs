mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ensemble_ids::synthetic::{fixture_csv, FixtureSpec};

use config::{parse_weights, Overrides, RunConfig};
use stages::Ctx;

/// Label unlabeled flow records with a clustering ensemble, then train and
/// evaluate an MLP detector on the result.
#[derive(Parser)]
#[command(name = "ensemble-ids", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Vote weights for k-means, OPTICS and FCM, e.g. 0.25,0.25,0.5
    #[arg(long, value_parser = parse_weights)]
    weights: Option<::std::vec::Vec<f64>>,
    /// Correlation threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Run OPTICS on N sampled rows and extend to the rest.
    #[arg(long, value_name = "N")]
    optics_subsample: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode, binarize labels and standard-scale the input.
    Preprocess(Common),
    /// Choose features by correlation and LASSO.
    Select(Common),
    /// Vote the three clusterers into labels.
    Label(Common),
    /// Train the MLP on the ensemble labels.
    Train(Common),
    /// Score the model and compare with ground truth when present.
    Eval(Common),
    /// Join every stage's results into one document.
    Report(Common),
    /// All stages in order.
    Run(Common),
    /// Write the synthetic fixture CSV.
    Fixture {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = FixtureSpec::default().seed)]
        seed: u64,
    },
}

fn context(c: &Common) -> Result<Ctx> {
    let base = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.resolve(&Overrides {
        seed: c.seed,
        weights: c.weights.clone(),
        delta: c.delta,
        optics_subsample: c.optics_subsample,
        output_dir: c.out.clone(),
        train: c.train.clone(),
        test: c.test.clone(),
    })?;
    Ctx::new(cfg)
}

type Stage = fn(&mut Ctx) -> Result<()>;

fn run_stages(c: &Common, stages: &[(&str, Stage)]) -> Result<()> {
    let mut ctx = context(c).context("configuration")?;
    for (name, f) in stages {
        f(&mut ctx).with_context(|| format!("stage `{name}` failed"))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let all: [(&str, Stage); 6] = [
        ("preprocess", stages::preprocess),
        ("select", stages::select),
        ("label", stages::label),
        ("train", stages::train),
        ("eval", stages::eval),
        ("report", stages::report),
    ];
    match cli.command {
        Command::Preprocess(c) => run_stages(&c, &all[0..1]),
        Command::Select(c) => run_stages(&c, &all[1..2]),
        Command::Label(c) => run_stages(&c, &all[2..3]),
        Command::Train(c) => run_stages(&c, &all[3..4]),
        Command::Eval(c) => run_stages(&c, &all[4..5]),
        Command::Report(c) => run_stages(&c, &all[5..6]),
        Command::Run(c) => run_stages(&c, &all),
        Command::Fixture { out, rows, seed } => {
            let spec = FixtureSpec {
                rows,
                seed,
                ..FixtureSpec::default()
            };
            std::fs::write(&out, fixture_csv(&spec)?).with_context(|| format!("writing {}", out.display()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
