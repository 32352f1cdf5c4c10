use clap::Parser;
use lamestab::cli::{run_suite, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Batch experiments for polyhedral elastic inclusions.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// validate, kernels, dtn, sderiv, sscale or stability
    suite: String,
    /// Experiment file of `key = value` lines; defaults apply without one.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `out_dir` from the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    ExitCode::from(run_suite(&args.suite, &cfg) as u8)
}
