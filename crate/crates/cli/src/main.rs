mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autoprecoder", version, about = "Learned channel sensing and hybrid precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment config (TOML, dotted keys). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and label a dataset.
    Generate,
    /// Train the network on the training part of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Rate and accuracy over the transmit power grid on the test part.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Learned versus random and projected sensing, with beam-space profiles.
    CompareSensing {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Greedy label search against exhaustive search.
    OracleBench,
    /// Quick invariant checks.
    Selftest,
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 3,
        "invalid-input" => 4,
        "format" => 5,
        "io" => 6,
        "numerical" => 7,
        "search-too-large" => 8,
        "diverged" => 9,
        "selftest" => 10,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error[invalid-input]: thread pool: {e}");
            return ExitCode::from(exit_code("invalid-input"));
        }
    }
    let result = match cli.command {
        Command::Generate => commands::generate(&cli.common),
        Command::Train { dataset } => commands::train(&cli.common, &dataset),
        Command::Eval { checkpoint, dataset } => commands::eval(&cli.common, &checkpoint, &dataset),
        Command::CompareSensing { checkpoint, dataset } => commands::compare_sensing(&cli.common, &checkpoint, &dataset),
        Command::OracleBench => commands::oracle_bench(&cli.common),
        Command::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.message());
            ExitCode::from(exit_code(e.category()))
        }
    }
}
