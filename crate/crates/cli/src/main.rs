use std::path::PathBuf;
use std::process::ExitCode;

use acss::experiments::{
    emit_histogram_data, run_experiment, ExperimentConfig, ExperimentReport, HistogramFilter, Method,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acss", version, about = "Approximate co-sufficient sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trials.csv, summary.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Full trial counts and M = 300 copies.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `output_path` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bin the p-value column of a trials.csv file.
    Histogram {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method `{s}` (expected reg_acss, plain_acss or oracle)"))
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<11} {:>8} {:>6} {:>7} {:>9} {:>8} {:>6}",
        "method", "signal", "sigma", "trials", "rejection", "se", "degen"
    );
    for r in &report.summary {
        println!(
            "{:<11} {:>8} {:>6} {:>7} {:>9.4} {:>8.4} {:>6}",
            r.method.name(),
            r.signal,
            r.sigma,
            r.n_trials,
            r.rejection_rate,
            r.std_error,
            r.degenerate
        );
    }
}

fn run(command: Command) -> acss::Result<()> {
    match command {
        Command::Run { config, paper_scale, seed, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if paper_scale {
                cfg = cfg.with_full_scale();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if out.is_some() {
                cfg.output_path = out;
            }
            let dir =
                cfg.output_path.get_or_insert_with(|| PathBuf::from("results").join(cfg.experiment.name())).clone();
            let report = run_experiment(&cfg)?;
            print_summary(&report);
            eprintln!("wrote {}", dir.display());
        }
        Command::Histogram { input, bins, method, signal, sigma } => {
            let filter = HistogramFilter { method, signal, sigma };
            print!("{}", emit_histogram_data(&input, bins, &filter)?);
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            cfg.validate()?;
            let cells = cfg.signals().len() * cfg.sigmas().len();
            println!(
                "ok: {} with {cells} grid cells, {} trials each, M = {}, methods {}",
                cfg.experiment.name(),
                cfg.n_trials,
                cfg.m_copies,
                cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
