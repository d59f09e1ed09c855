//! `sgl`: spectrum, sweep, verify and plot commands for glued surfaces.
//!
//! Exit codes: 0 success or pass, 1 verdict failed, 2 configuration or
//! input error, 3 solver failure (or fewer than 90% of sweep points
//! computed), 4 inconclusive or not applicable.

// NaN-rejecting parameter checks read as `!(x > 0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::error;

use crate::commands::{Criterion, Main1Mode};
use crate::config::{load_config, RunConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "sgl", version, about = "Eigenvalues of surfaces with glued flat pieces")]
pub struct Cli {
    /// JSON run config (comments allowed); defaults to the torus reference.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `out`, then `runs/<name>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extra uniform mesh refinements.
    #[arg(long, global = true)]
    pub refine: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrum, mesh and quasimode report at one (eps, h).
    Spectrum {
        /// Defaults to the first grid point of the sweep section.
        #[arg(long, requires = "h")]
        eps: Option<f64>,
        #[arg(long, requires = "eps")]
        h: Option<f64>,
    },
    /// Run the (eps, h) grid; resumes from earlier output in the same directory.
    Sweep,
    /// Run one acceptance experiment and write its verdict.
    Verify {
        #[arg(value_enum)]
        criterion: Criterion,
        /// Variant of main1.
        #[arg(long, value_enum, default_value = "ii")]
        mode: Main1Mode,
    },
    /// Gnuplot scripts and data from a sweep CSV.
    Plot {
        /// Defaults to `<out>/sweep.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-hash the files listed in `<out>/manifest.json`.
    Check,
}

fn out_dir(cli: &Cli, run: &RunConfig) -> PathBuf {
    cli.out.clone().or_else(|| run.out.clone()).unwrap_or_else(|| {
        let name = if run.name.is_empty() { "run" } else { &run.name };
        Path::new("runs").join(name)
    })
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut run = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::torus_reference(),
    };
    run.override_with(cli.seed, cli.refine);
    let out = out_dir(cli, &run);
    match &cli.command {
        Command::Spectrum { eps, h } => {
            let point = eps.zip(*h);
            for p in commands::spectrum(&run, &out, point, cli.workers)? {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Sweep => {
            let s = commands::sweep(run.sweep()?, &out, cli.workers)?;
            println!(
                "{} points: {} computed, {} reused, {} failed -> {}",
                s.total,
                s.computed,
                s.reused,
                s.failed,
                out.join(commands::SWEEP_CSV).display()
            );
            Ok(s.exit_code())
        }
        Command::Verify { criterion, mode } => {
            let settings = run.settings(cli.workers);
            let v = commands::verify(&run, *criterion, *mode, &out.join("verify"), &settings)?;
            println!("{}", v.summary());
            Ok(v.exit_code())
        }
        Command::Plot { csv } => {
            let csv = csv.clone().unwrap_or_else(|| out.join(commands::SWEEP_CSV));
            let dir = match (&cli.out, csv.parent()) {
                (None, Some(parent)) => parent.join("plots"),
                _ => out.join("plots"),
            };
            for p in commands::plot(&csv, &dir)? {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Check => {
            let problems = commands::check(&out)?;
            for p in &problems {
                println!("{p}");
            }
            if problems.is_empty() {
                println!("manifest ok");
            }
            Ok(if problems.is_empty() { 0 } else { 1 })
        }
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
