//! `bpi` command-line front end.

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use args::{Cli, Command};
use commands::BoundsArgs;

fn run(cli: Cli) -> anyhow::Result<()> {
    let format = cli.format;
    match &cli.command {
        Command::Detect { input, out } => commands::detect_cmd(input, out.as_deref(), format).context("detect"),
        Command::GenerateMissing { input, missing, out } => {
            commands::generate_missing_cmd(input, missing, out, cli.seed.unwrap_or(0)).context("generate-missing")
        }
        Command::Reduce { input, imputer, retention, out, meta } => {
            commands::reduce_cmd(input, imputer, retention, out, meta.as_deref(), format).context("reduce")
        }
        Command::Baseline { input, imputer, q, ev_target, out, meta } => {
            commands::baseline_cmd(input, imputer, *q, *ev_target, out, meta.as_deref(), format).context("baseline")
        }
        Command::Bounds { input, label_col, synthetic, blocks, q, mode, truth, out } => commands::bounds_cmd(
            &BoundsArgs {
                input: input.as_deref(),
                label_col: label_col.as_deref(),
                synthetic: synthetic.as_deref(),
                blocks: blocks.as_deref(),
                q,
                mode: *mode,
                truth: truth.as_deref(),
                out: out.as_deref(),
            },
            format,
        )
        .context("bounds"),
        Command::Bench { config, out, long, label_col } => {
            commands::bench_cmd(config, out.as_deref(), long.as_deref(), label_col.as_deref(), cli.seed, format)
                .context("bench")
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
