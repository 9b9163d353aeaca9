use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use seqdiv::baselines::parse_lambda_grid;
use seqdiv::data::{synth_coat, write_synth_dataset, Regime, SynthCoatConfig};
use seqdiv::experiment::{
    aggregate_file, parse_list, run_experiment, Algorithm, DatasetKind, ExperimentConfig, Metric,
    OutputFormat, Universe,
};

#[derive(Parser)]
#[command(name = "seqdiv", version, about = "Sequential diversification benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank every user's items with each algorithm and score the orderings.
    Run(RunArgs),
    /// Write a synthetic Coat-shaped dataset.
    SynthCoat {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 290)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 24)]
        ratings_per_user: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, default_value = "rec")]
    dataset_kind: DatasetKind,
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Single-byte field separator for all input files.
    #[arg(long, value_parser = parse_delimiter)]
    delimiter: Option<u8>,
    /// Dataset label for output rows; defaults to the ratings file's directory name.
    #[arg(long)]
    name: Option<String>,
    /// One or more of small, medium, large, full.
    #[arg(long, default_value = "medium", value_parser = parse_list::<Regime>)]
    regime: ::std::vec::Vec<Regime>,
    #[arg(long, default_value = "random,b2i", value_parser = parse_list::<Algorithm>)]
    algorithms: ::std::vec::Vec<Algorithm>,
    #[arg(long, default_value = "osd", value_parser = parse_list::<Metric>)]
    metrics: ::std::vec::Vec<Metric>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:1:0.1", value_parser = parse_lambda_grid)]
    lambda_grid: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    mc_samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    #[arg(long, default_value = "all")]
    universe: Universe,
    /// Users used for tuning λ and EXPLORE parameters; 0 means all.
    #[arg(long, default_value_t = 50)]
    tune_users: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 100)]
    candidate_cap: usize,
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single byte, got {s:?}")),
    }
}

impl RunArgs {
    fn into_config(self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.ratings, self.out);
        if let Some(name) = self.name {
            cfg.name = name;
        }
        cfg.kind = self.dataset_kind;
        cfg.categories = self.categories;
        cfg.features = self.features;
        cfg.delimiter = self.delimiter;
        cfg.regimes = self.regime;
        cfg.algorithms = self.algorithms;
        cfg.metrics = self.metrics;
        cfg.lambda_grid = self.lambda_grid;
        cfg.mc_samples = self.mc_samples;
        cfg.seed = self.seed;
        cfg.format = self.format;
        cfg.universe = self.universe;
        cfg.tune_users = self.tune_users;
        cfg.threads = self.threads;
        cfg.candidate_cap = self.candidate_cap;
        cfg
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.into_config();
            let report = run_experiment(&cfg).context("experiment failed")?;
            for a in &report.aggregates {
                println!(
                    "{:<8} {:<16} {:<15} {:>12.6} ± {:.6}  (n={})",
                    a.regime, a.algorithm, a.metric, a.mean, a.std, a.n_users
                );
            }
            for note in &report.info.notes {
                log::warn!("{note}");
            }
            log::info!(
                "wrote {} and {} under {}",
                seqdiv::experiment::PER_USER_FILE,
                aggregate_file(cfg.format),
                cfg.out.display()
            );
        }
        Command::SynthCoat {
            out,
            users,
            items,
            ratings_per_user,
            seed,
        } => {
            let data = synth_coat(&SynthCoatConfig {
                users,
                items,
                ratings_per_user,
                seed,
            })?;
            let (r, c) = write_synth_dataset(&data, &out)?;
            println!("{}\n{}", r.display(), c.display());
        }
    }
    Ok(())
}
