//! Command-line front end: `run`, `validate`, `resume` and `report`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bosekz::config::{parse_config, ExperimentConfig, Mode};
use bosekz::experiment::{
    resume_experiment, run_experiment, validation_text, write_outputs, Manifest, PointStatus,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bosekz", version, about = "Bose-Hubbard tensor-network scans and quench sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Run the acceptance checks.
    Validate {
        /// Config with `mode = "validate"`; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated criterion numbers, overriding the config.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<usize>>,
        /// Use the full-scale settings instead of the reduced ones.
        #[arg(long)]
        full: bool,
        /// Output directory, overriding the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rerun the points of a manifest that did not succeed.
    Resume { manifest: PathBuf },
    /// Regenerate the tables of a manifest and summarize it.
    Report { manifest: PathBuf },
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_config(&text)?)
}

fn summarize(manifest: &Manifest) -> bool {
    let count = |s: PointStatus| manifest.points.iter().filter(|p| p.status == s).count();
    println!(
        "config {}: {} points, {} succeeded, {} failed, {} skipped",
        &manifest.config_hash[..12],
        manifest.points.len(),
        count(PointStatus::Success),
        count(PointStatus::Failed),
        count(PointStatus::Skipped)
    );
    for p in &manifest.points {
        if let Some(e) = &p.error {
            println!("failed {:?}: {e}", p.label);
        }
        for f in &p.flags {
            println!("flag {:?}: {f}", p.label);
        }
    }
    print!("{}", validation_text(manifest));
    manifest.all_passed()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let manifest = match cli.command {
        Command::Run { config } => run_experiment(&read_config(&config)?)?,
        Command::Validate {
            config,
            criteria,
            full,
            output,
        } => {
            let mut c = match config {
                Some(p) => read_config(&p)?,
                None => ExperimentConfig::minimal(Mode::Validate),
            };
            if c.mode != Mode::Validate {
                bail!("validate needs a config with mode = \"validate\"");
            }
            if let Some(list) = criteria {
                c.validate.criteria = list;
            }
            if full {
                c.validate.reduced = false;
            }
            if let Some(o) = output {
                c.output_dir = o;
            }
            c.validate()?;
            run_experiment(&c)?
        }
        Command::Resume { manifest } => resume_experiment(&manifest)?,
        Command::Report { manifest } => {
            let m = Manifest::load(&manifest)?;
            let dir = manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            write_outputs(&m, &dir)?;
            m
        }
    };
    Ok(summarize(&manifest))
}
