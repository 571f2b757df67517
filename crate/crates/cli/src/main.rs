mod args;
mod commands;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};

const THREADS_ENV: &str = "GENRE_CNN_THREADS";

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("{THREADS_ENV}={value:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Preprocess(a) => commands::preprocess(a, out),
        Command::Train(a) => commands::train_cmd(a, out),
        Command::Evaluate(a) => commands::evaluate_cmd(a, out),
        Command::Predict(a) => commands::predict_cmd(a, out),
        Command::AnalyzeFilters(a) => commands::analyze_filters(a, out),
        Command::ProjectLda(a) => commands::project_lda(a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
